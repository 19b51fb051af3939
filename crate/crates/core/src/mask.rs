//! Boolean masks over `(coordinates..., value)`.
//!
//! A mask stores one bit-packed column per coordinate tuple; bit `z` of a
//! column is set when value `z` is still possible at that coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported value axis.
pub const MAX_VALUES: usize = 16;

pub type Column = u16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    coord_dims: Vec<usize>,
    values: usize,
    cols: Vec<Column>,
}

#[inline]
pub fn full_column(values: usize) -> Column {
    debug_assert!(values <= MAX_VALUES);
    if values == MAX_VALUES {
        Column::MAX
    } else {
        (1 << values) - 1
    }
}

#[inline]
pub fn single(z: usize) -> Column {
    1 << z
}

/// Index of the unique set bit, if the column is a singleton.
#[inline]
pub fn unique_value(col: Column) -> Option<usize> {
    (col.count_ones() == 1).then(|| col.trailing_zeros() as usize)
}

impl Mask {
    /// Mask with every value allowed everywhere.
    pub fn full(coord_dims: &[usize], values: usize) -> Self {
        assert!(values >= 1 && values <= MAX_VALUES, "value axis out of range");
        let n = coord_dims.iter().product();
        Mask {
            coord_dims: coord_dims.to_vec(),
            values,
            cols: vec![full_column(values); n],
        }
    }

    pub fn empty(coord_dims: &[usize], values: usize) -> Self {
        let mut m = Self::full(coord_dims, values);
        m.cols.iter_mut().for_each(|c| *c = 0);
        m
    }

    pub fn from_columns(coord_dims: &[usize], values: usize, cols: Vec<Column>) -> Result<Self> {
        let n: usize = coord_dims.iter().product();
        if cols.len() != n || values == 0 || values > MAX_VALUES {
            return Err(Error::DimMismatch {
                expected: coord_dims.to_vec(),
                found: vec![cols.len()],
            });
        }
        let full = full_column(values);
        if let Some((i, &c)) = cols.iter().enumerate().find(|(_, &c)| c & !full != 0) {
            return Err(Error::InvalidTable {
                index: i,
                value: c as usize,
                limit: full as usize + 1,
            });
        }
        Ok(Mask {
            coord_dims: coord_dims.to_vec(),
            values,
            cols,
        })
    }

    /// Full list of axis sizes, value axis last.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = self.coord_dims.clone();
        d.push(self.values);
        d
    }

    pub fn coord_dims(&self) -> &[usize] {
        &self.coord_dims
    }

    pub fn values(&self) -> usize {
        self.values
    }

    pub fn columns(&self) -> &[Column] {
        &self.cols
    }

    pub fn columns_mut(&mut self) -> &mut [Column] {
        &mut self.cols
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    /// Flat column index for a coordinate tuple (row-major).
    pub fn offset(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.coord_dims.len());
        coords
            .iter()
            .zip(&self.coord_dims)
            .fold(0, |acc, (&c, &d)| {
                debug_assert!(c < d);
                acc * d + c
            })
    }

    #[inline]
    pub fn col(&self, idx: usize) -> Column {
        self.cols[idx]
    }

    #[inline]
    pub fn set_col(&mut self, idx: usize, col: Column) {
        self.cols[idx] = col;
    }

    pub fn get(&self, coords: &[usize], value: usize) -> bool {
        self.cols[self.offset(coords)] >> value & 1 == 1
    }

    pub fn set(&mut self, coords: &[usize], value: usize, on: bool) {
        let i = self.offset(coords);
        if on {
            self.cols[i] |= 1 << value;
        } else {
            self.cols[i] &= !(1 << value);
        }
    }

    /// Number of allowed values at every coordinate, in row-major order.
    pub fn stat(&self) -> Vec<u32> {
        self.cols.iter().map(|c| c.count_ones()).collect()
    }

    #[inline]
    pub fn stat_at(&self, idx: usize) -> u32 {
        self.cols[idx].count_ones()
    }

    /// Every coordinate keeps at least one value.
    pub fn is_possible(&self) -> bool {
        self.cols.iter().all(|&c| c != 0)
    }

    /// Every coordinate has exactly one value.
    pub fn is_done(&self) -> bool {
        self.cols.iter().all(|&c| c.count_ones() == 1)
    }

    /// Total number of set bits.
    pub fn ones(&self) -> u32 {
        self.cols.iter().map(|c| c.count_ones()).sum()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.coord_dims == other.coord_dims
            && self.values == other.values
            && self.cols.iter().zip(&other.cols).all(|(a, b)| a & !b == 0)
    }

    /// Done mask of a table given as a flat row-major list of values.
    pub fn multiplex(coord_dims: &[usize], values: usize, table: &[usize]) -> Result<Self> {
        let n: usize = coord_dims.iter().product();
        if table.len() != n {
            return Err(Error::DimMismatch {
                expected: coord_dims.to_vec(),
                found: vec![table.len()],
            });
        }
        let cols = table
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value < values {
                    Ok(single(value))
                } else {
                    Err(Error::InvalidTable {
                        index,
                        value,
                        limit: values,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mask {
            coord_dims: coord_dims.to_vec(),
            values,
            cols,
        })
    }

    /// Inverse of [`Mask::multiplex`]; `None` unless the mask is done.
    pub fn demultiplex(&self) -> Option<Vec<usize>> {
        self.cols.iter().map(|&c| unique_value(c)).collect()
    }

    /// Whether the table (flat, row-major) is covered by this mask.
    pub fn covers(&self, table: &[usize]) -> Result<bool> {
        if table.len() != self.cols.len() {
            return Err(Error::DimMismatch {
                expected: self.dims(),
                found: vec![table.len()],
            });
        }
        Ok(table
            .iter()
            .zip(&self.cols)
            .all(|(&v, &c)| v < self.values && c >> v & 1 == 1))
    }

    /// Column tokens as 0/1 strings in value order.
    pub fn tokens(&self) -> impl Iterator<Item = String> + '_ {
        self.cols.iter().map(move |&c| {
            (0..self.values)
                .map(|z| if c >> z & 1 == 1 { '1' } else { '0' })
                .collect()
        })
    }

    pub fn parse_token(token: &str, values: usize) -> Option<Column> {
        if token.len() != values {
            return None;
        }
        token.bytes().enumerate().try_fold(0, |acc, (z, ch)| match ch {
            b'1' => Some(acc | 1 << z),
            b'0' => Some(acc),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_mask_stat() {
        let m = Mask::full(&[3, 3], 3);
        assert!(m.stat().iter().all(|&s| s == 3));
        assert_eq!(m.dims(), vec![3, 3, 3]);
    }

    #[test]
    fn done_mask_stat_is_one() {
        let m = Mask::multiplex(&[3, 3], 3, &[0, 1, 2, 2, 1, 0, 0, 0, 0]).unwrap();
        assert!(m.stat().iter().all(|&s| s == 1));
        assert!(m.is_done());
    }

    #[test]
    fn zeroed_column() {
        let mut m = Mask::full(&[3, 3], 3);
        let i = m.offset(&[1, 2]);
        m.set_col(i, 0);
        let s = m.stat();
        assert_eq!(s[i], 0);
        assert_eq!(s.iter().filter(|&&v| v == 3).count(), 8);
        assert!(!m.is_possible());
    }

    #[test]
    fn constant_zero_b_table() {
        // (a, b) = (3, 2): 0_B is index 2
        let m = Mask::multiplex(&[3, 3], 3, &[2; 9]).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert!(m.get(&[x, y], 2));
                assert!(!m.get(&[x, y], 0));
                assert!(!m.get(&[x, y], 1));
            }
        }
        let m0 = Mask::multiplex(&[3, 3], 3, &[0; 9]).unwrap();
        assert!(m0.columns().iter().all(|&c| c == 1));
    }

    #[test]
    fn multiplex_rejects_out_of_range() {
        let err = Mask::multiplex(&[2, 2], 3, &[0, 1, 3, 0]).unwrap_err();
        assert!(matches!(err, Error::InvalidTable { index: 2, value: 3, .. }));
    }

    #[test]
    fn covers_cases() {
        let t = [0, 1, 2, 2];
        let full = Mask::full(&[2, 2], 3);
        assert!(full.covers(&t).unwrap());
        let own = Mask::multiplex(&[2, 2], 3, &t).unwrap();
        assert!(own.covers(&t).unwrap());
        let other = Mask::multiplex(&[2, 2], 3, &[0, 1, 2, 1]).unwrap();
        assert!(!other.covers(&t).unwrap());
        assert!(full.covers(&[0, 1, 2]).is_err());
    }

    #[test]
    fn token_round_trip() {
        let mut m = Mask::full(&[2], 3);
        m.set(&[1], 1, false);
        let toks: Vec<_> = m.tokens().collect();
        assert_eq!(toks, vec!["111", "101"]);
        assert_eq!(Mask::parse_token("101", 3), Some(0b101));
        assert_eq!(Mask::parse_token("1x1", 3), None);
        assert_eq!(Mask::parse_token("11", 3), None);
    }
}
