//! The sieve Σ of canonical left-multiplication matrices `φ: A×B → I`
//! under the action of `S_a × S_b`.
//!
//! The key of column `j` is `Σ_x φ(x,j)·2^x`. The canonical form of an orbit
//! is the element with the lexicographically smallest tuple of column keys;
//! this puts the ones towards low rows and high columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::position::{FilterConfig, Position, Shape};
use crate::propagate::process;

/// Default bound on `a·b` for enumeration.
pub const DEFAULT_MAX_ENUM: usize = 20;

/// A boolean `a × b` matrix packed row-major into the low `a·b` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhiBits(pub u64);

impl PhiBits {
    #[inline]
    pub fn get(self, shape: Shape, x: usize, j: usize) -> bool {
        self.0 >> (x * shape.b + j) & 1 == 1
    }

    pub fn from_rows(shape: Shape, rows: &[Vec<bool>]) -> Self {
        let mut bits = 0;
        for (x, row) in rows.iter().enumerate().take(shape.a) {
            for (j, &v) in row.iter().enumerate().take(shape.b) {
                if v {
                    bits |= 1 << (x * shape.b + j);
                }
            }
        }
        PhiBits(bits)
    }

    pub fn rows(self, shape: Shape) -> Vec<Vec<bool>> {
        (0..shape.a)
            .map(|x| (0..shape.b).map(|j| self.get(shape, x, j)).collect())
            .collect()
    }

    #[inline]
    fn row(self, shape: Shape, x: usize) -> u64 {
        self.0 >> (x * shape.b) & ((1 << shape.b) - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaInstance {
    pub sigma: usize,
    pub shape: Shape,
    /// `phi[x][j] = φ(x, j)` for `j ∈ B`; the `0_B` column is implicitly zero.
    pub phi: Vec<Vec<bool>>,
    pub keys: Vec<u32>,
    pub ones: usize,
    pub suggested: bool,
}

pub fn column_key(shape: Shape, phi: PhiBits, j: usize) -> u32 {
    (0..shape.a)
        .filter(|&x| phi.get(shape, x, j))
        .map(|x| 1u32 << x)
        .sum()
}

pub fn key_tuple(shape: Shape, phi: PhiBits) -> Vec<u32> {
    (0..shape.b).map(|j| column_key(shape, phi, j)).collect()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

struct Canonicalizer {
    shape: Shape,
    col_perms: Vec<Vec<usize>>,
}

impl Canonicalizer {
    fn new(shape: Shape) -> Self {
        Canonicalizer {
            shape,
            col_perms: permutations(shape.b),
        }
    }

    /// For a fixed column order the best row order sorts rows descending by
    /// `(φ(x,0), φ(x,1), ...)`: column 0 is the most significant and, within
    /// a column, higher rows are more significant.
    fn canonicalize(&self, phi: PhiBits) -> PhiBits {
        let s = self.shape;
        let mut best: Option<(Vec<u32>, PhiBits)> = None;
        let mut rows: Vec<u64> = Vec::with_capacity(s.a);
        for perm in &self.col_perms {
            rows.clear();
            for x in 0..s.a {
                let r = phi.row(s, x);
                // new column j takes old column perm[j]; pack with column 0
                // as the most significant bit so a numeric sort works
                let mut packed = 0u64;
                for (j, &src) in perm.iter().enumerate() {
                    if r >> src & 1 == 1 {
                        packed |= 1 << (s.b - 1 - j);
                    }
                }
                rows.push(packed);
            }
            rows.sort_unstable_by(|a, b| b.cmp(a));
            let mut bits = 0u64;
            for (x, &packed) in rows.iter().enumerate() {
                for j in 0..s.b {
                    if packed >> (s.b - 1 - j) & 1 == 1 {
                        bits |= 1 << (x * s.b + j);
                    }
                }
            }
            let cand = PhiBits(bits);
            let key = key_tuple(s, cand);
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, cand));
            }
        }
        best.expect("at least one column permutation").1
    }
}

/// Canonical representative of the `S_a × S_b` orbit of `phi`.
pub fn canonicalize(shape: Shape, phi: PhiBits) -> PhiBits {
    Canonicalizer::new(shape).canonicalize(phi)
}

/// Not suggested when strictly more than half of the `b+1` columns of
/// `φ: A×B⁰ → I` (the `0_B` column included) are identically zero.
pub fn is_suggested(shape: Shape, phi: PhiBits) -> bool {
    let zero_cols = 1 + (0..shape.b)
        .filter(|&j| (0..shape.a).all(|x| !phi.get(shape, x, j)))
        .count();
    2 * zero_cols <= shape.bz()
}

pub fn enumerate_sigma(shape: Shape) -> Result<Vec<SigmaInstance>> {
    enumerate_sigma_with(shape, DEFAULT_MAX_ENUM, Execution::Parallel)
}

pub fn enumerate_sigma_with(shape: Shape, max_enum: usize, exec: Execution) -> Result<Vec<SigmaInstance>> {
    let cells = shape.a * shape.b;
    if cells > max_enum || cells > 40 {
        return Err(Error::SizeGuard {
            what: "a*b",
            value: cells,
            limit: max_enum.min(40),
        });
    }
    let canon = Canonicalizer::new(shape);
    let total = 1u64 << cells;
    let chunk = 1u64 << cells.saturating_sub(8).min(16);
    let chunks = total.div_ceil(chunk) as usize;
    let mut reps: Vec<PhiBits> = par::map_indexed(exec, chunks, |c| {
        let start = c as u64 * chunk;
        let end = (start + chunk).min(total);
        (start..end)
            .map(PhiBits)
            .filter(|&phi| canon.canonicalize(phi) == phi)
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    reps.sort_by_cached_key(|&phi| key_tuple(shape, phi));
    Ok(reps
        .into_iter()
        .enumerate()
        .map(|(sigma, phi)| SigmaInstance {
            sigma,
            shape,
            phi: phi.rows(shape),
            keys: key_tuple(shape, phi),
            ones: phi.0.count_ones() as usize,
            suggested: is_suggested(shape, phi),
        })
        .collect())
}

impl SigmaInstance {
    pub fn bits(&self) -> PhiBits {
        PhiBits::from_rows(self.shape, &self.phi)
    }

    /// Rows of `φ` on `B⁰`, as printed: `0/1` per column, `0_B` last.
    pub fn row_strings(&self) -> Vec<String> {
        self.phi
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| if v { '1' } else { '0' })
                    .chain(std::iter::once('0'))
                    .collect()
            })
            .collect()
    }
}

/// Root position for an instance: `l` fixed by `φ`, everything else full
/// (up to the zero rows), then propagated. The returned filter
/// configuration carries the instance's `ones_phi`.
pub fn initial_position(inst: &SigmaInstance, cfg: FilterConfig) -> Result<(Position, FilterConfig)> {
    let raw = Position::with_phi(inst.shape, &inst.phi)?;
    let cfg = cfg.for_position(&raw);
    Ok((process(&raw), cfg))
}
