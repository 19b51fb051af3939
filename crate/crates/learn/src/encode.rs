//! Positions as `f × a × a` feature tensors, `f = 5(b+1) + 2a`.
//!
//! Channel blocks, in order: `m` with the value axis as channels; `l` with
//! `(p, i)` flattened and broadcast along `y`; `r` with `(p, i)` flattened
//! and broadcast along `x`; `t` with `(z, i)` flattened. Every source column
//! is scaled to sum to one over its value axis, so an empty column stays
//! zero and a determined column becomes one-hot.

use nilprove_core::mask::Column;
use nilprove_core::{Position, Shape};

/// Number of feature channels.
pub fn feature_count(shape: Shape) -> usize {
    5 * shape.bz() + 2 * shape.a
}

/// Length of the four masks flattened and concatenated.
pub fn flat_dim(shape: Shape) -> usize {
    let (a, bz) = (shape.a, shape.bz());
    a * a * bz + 4 * a * bz + 2 * a * a * a
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPosition {
    pub shape: Shape,
    /// Channel-major: `features[(c * a + x) * a + y]`.
    pub features: Vec<f32>,
}

impl EncodedPosition {
    pub fn channels(&self) -> usize {
        feature_count(self.shape)
    }

    pub fn at(&self, c: usize, x: usize, y: usize) -> f32 {
        let a = self.shape.a;
        self.features[(c * a + x) * a + y]
    }
}

fn normalized(col: Column, values: usize) -> impl Iterator<Item = f32> {
    let n = col.count_ones();
    (0..values).map(move |v| if n > 0 && col >> v & 1 == 1 { 1.0 / n as f32 } else { 0.0 })
}

pub fn encode(p: &Position) -> EncodedPosition {
    let s = p.shape;
    let (a, bz) = (s.a, s.bz());
    let plane = a * a;
    let mut features = vec![0.0f32; feature_count(s) * plane];
    let mut put = |c: usize, x: usize, y: usize, v: f32| features[c * plane + x * a + y] = v;

    for x in 0..a {
        for y in 0..a {
            for (q, v) in normalized(p.m.col(s.m_idx(x, y)), bz).enumerate() {
                put(q, x, y, v);
            }
        }
    }
    for x in 0..a {
        for q in 0..bz {
            for (i, v) in normalized(p.l.col(s.l_idx(x, q)), 2).enumerate() {
                for y in 0..a {
                    put(bz + 2 * q + i, x, y, v);
                }
            }
        }
    }
    for q in 0..bz {
        for z in 0..a {
            for (i, v) in normalized(p.r.col(s.r_idx(q, z)), 2).enumerate() {
                for x in 0..a {
                    put(3 * bz + 2 * q + i, x, z, v);
                }
            }
        }
    }
    for x in 0..a {
        for y in 0..a {
            for z in 0..a {
                for (i, v) in normalized(p.t.col(s.t_idx(x, y, z)), 2).enumerate() {
                    put(5 * bz + 2 * z + i, x, y, v);
                }
            }
        }
    }
    EncodedPosition { shape: s, features }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nilprove_core::mask::single;

    #[test]
    fn dimensions() {
        let s = Shape::new(5, 3).unwrap();
        assert_eq!(feature_count(s), 30);
        assert_eq!(flat_dim(s), 430);
        assert_eq!(encode(&Position::full(s)).features.len(), 30 * 25);
    }

    #[test]
    fn done_column_is_one_hot() {
        let s = Shape::new(3, 2).unwrap();
        let mut p = Position::full(s);
        p.m.set_col(s.m_idx(1, 2), single(1));
        let e = encode(&p);
        let col: Vec<f32> = (0..3).map(|q| e.at(q, 1, 2)).collect();
        assert_eq!(col, vec![0.0, 1.0, 0.0]);
        let full: Vec<f32> = (0..3).map(|q| e.at(q, 0, 0)).collect();
        assert!(full.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-7));
    }

    #[test]
    fn empty_column_stays_zero() {
        let s = Shape::new(3, 2).unwrap();
        let mut p = Position::full(s);
        p.m.set_col(s.m_idx(0, 0), 0);
        let e = encode(&p);
        assert!((0..3).all(|q| e.at(q, 0, 0) == 0.0));
    }

    #[test]
    fn side_masks_broadcast() {
        let s = Shape::new(3, 2).unwrap();
        let p = Position::with_phi(s, &[vec![true, false], vec![false, false], vec![false, true]]).unwrap();
        let e = encode(&p);
        let bz = 3;
        // l(0, 0) = 1_I lands on channel bz + 1 for every y
        for y in 0..3 {
            assert_eq!(e.at(bz + 1, 0, y), 1.0);
            assert_eq!(e.at(bz, 0, y), 0.0);
        }
        // r(0_B, z) = 0_I lands on channel 3bz + 2·2 for every x
        for x in 0..3 {
            assert_eq!(e.at(3 * bz + 4, x, 1), 1.0);
        }
    }
}
