//! Associativity deductions on positions.
//!
//! With `τ(x,y,z) = φ(x, μ(y,z)) = ψ(μ(x,y), z)`, each step removes mask
//! entries that no associative completion can use. `process` applies the
//! three steps (ternary, left/right, product) until nothing changes.

use crate::error::{Error, Result};
use crate::mask::{full_column, unique_value, Column};
use crate::par::{self, Execution};
use crate::position::{Position, Shape};

/// Sweep limit for [`process`].
pub const MAX_SWEEPS: usize = 1000;

/// Positions sharing one shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub shape: Shape,
    pub positions: Vec<Position>,
}

impl Batch {
    pub fn new(shape: Shape, positions: Vec<Position>) -> Result<Self> {
        if positions.iter().any(|p| p.shape != shape) {
            return Err(Error::ShapeMismatch);
        }
        Ok(Batch { shape, positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `bits[x][i]` = set of `p` with `l(x,p,i)`.
fn left_bits(p: &Position) -> Vec<[Column; 2]> {
    let s = p.shape;
    (0..s.a)
        .map(|x| {
            let mut v = [0; 2];
            for q in 0..s.bz() {
                let c = p.l.col(s.l_idx(x, q));
                for (i, bits) in v.iter_mut().enumerate() {
                    if c >> i & 1 == 1 {
                        *bits |= 1 << q;
                    }
                }
            }
            v
        })
        .collect()
}

/// `bits[z][i]` = set of `p` with `r(p,z,i)`.
fn right_bits(p: &Position) -> Vec<[Column; 2]> {
    let s = p.shape;
    (0..s.a)
        .map(|z| {
            let mut v = [0; 2];
            for q in 0..s.bz() {
                let c = p.r.col(s.r_idx(q, z));
                for (i, bits) in v.iter_mut().enumerate() {
                    if c >> i & 1 == 1 {
                        *bits |= 1 << q;
                    }
                }
            }
            v
        })
        .collect()
}

/// `t(x,y,z,i)` survives only if some `p` with `m(y,z,p)` has `l(x,p,i)`
/// and some `p` with `m(x,y,p)` has `r(p,z,i)`.
pub fn modify_ternary_step(p: &Position) -> Position {
    let mut out = p.clone();
    ternary_in_place(&mut out);
    out
}

fn ternary_in_place(p: &mut Position) {
    let s = p.shape;
    let a = s.a;
    let lb = left_bits(p);
    let rb = right_bits(p);
    for x in 0..a {
        for y in 0..a {
            let mxy = p.m.col(s.m_idx(x, y));
            for z in 0..a {
                let myz = p.m.col(s.m_idx(y, z));
                let mut allowed = 0;
                for i in 0..2 {
                    if myz & lb[x][i] != 0 && mxy & rb[z][i] != 0 {
                        allowed |= 1 << i;
                    }
                }
                let ti = s.t_idx(x, y, z);
                let c = p.t.col(ti);
                p.t.set_col(ti, c & allowed);
            }
        }
    }
}

/// Where `y·z = p` is forced and `t(x,y,z,i) = 0`, drop `l(x,p,i)`;
/// where `x·y = p` is forced and `t(x,y,z,i) = 0`, drop `r(p,z,i)`.
pub fn modify_leftright_step(p: &Position) -> Position {
    let mut out = p.clone();
    leftright_in_place(&mut out);
    out
}

fn leftright_in_place(p: &mut Position) {
    let s = p.shape;
    let a = s.a;
    for u in 0..a {
        for v in 0..a {
            let Some(q) = unique_value(p.m.col(s.m_idx(u, v))) else {
                continue;
            };
            // u·v = q forced: as (y,z) for the left rule, as (x,y) for the right rule
            for w in 0..a {
                let t_left = p.t.col(s.t_idx(w, u, v));
                let li = s.l_idx(w, q);
                p.l.set_col(li, p.l.col(li) & t_left);
                let t_right = p.t.col(s.t_idx(u, v, w));
                let ri = s.r_idx(q, w);
                p.r.set_col(ri, p.r.col(ri) & t_right);
            }
        }
    }
}

/// Drop `m(x,y,p)` if for some `x'` and `i`, `l(x',p,i) = 0` and
/// `t(x',x,y,1-i) = 0`, or for some `z` and `i`, `r(p,z,i) = 0` and
/// `t(x,y,z,1-i) = 0`.
pub fn modify_prod_step(p: &Position) -> Position {
    let mut out = p.clone();
    prod_in_place(&mut out);
    out
}

fn prod_in_place(p: &mut Position) {
    let s = p.shape;
    let a = s.a;
    let full = full_column(s.bz());
    let lb = left_bits(p);
    let rb = right_bits(p);
    for x in 0..a {
        for y in 0..a {
            let mut bad: Column = 0;
            for w in 0..a {
                let tl = p.t.col(s.t_idx(w, x, y));
                let tr = p.t.col(s.t_idx(x, y, w));
                for i in 0..2 {
                    if tl >> (1 - i) & 1 == 0 {
                        bad |= !lb[w][i] & full;
                    }
                    if tr >> (1 - i) & 1 == 0 {
                        bad |= !rb[w][i] & full;
                    }
                }
            }
            let mi = s.m_idx(x, y);
            p.m.set_col(mi, p.m.col(mi) & !bad);
        }
    }
}

/// One of the three deduction steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Ternary,
    LeftRight,
    Prod,
}

/// Runs the three steps to a fixpoint. Positions whose `m` already has an
/// empty column come back unchanged.
pub fn try_process(p: &Position) -> Result<Position> {
    try_process_skipping(p, None)
}

/// [`try_process`] with one rule left out. Only meant for fault injection:
/// the result is no longer a sound fixpoint.
pub fn try_process_skipping(p: &Position, skip: Option<Rule>) -> Result<Position> {
    let mut cur = p.clone();
    if !cur.m.is_possible() {
        return Ok(cur);
    }
    for _ in 0..MAX_SWEEPS {
        let before = cur.knowledge();
        if skip != Some(Rule::Ternary) {
            ternary_in_place(&mut cur);
        }
        if skip != Some(Rule::LeftRight) {
            leftright_in_place(&mut cur);
        }
        if skip != Some(Rule::Prod) {
            prod_in_place(&mut cur);
        }
        if cur.knowledge() >= before {
            return Ok(cur);
        }
    }
    Err(Error::IterationCap(MAX_SWEEPS))
}

/// [`try_process`] for shapes where every sweep that changes something
/// removes at least one of fewer than [`MAX_SWEEPS`] bits.
pub fn process(p: &Position) -> Position {
    try_process(p).expect("knowledge strictly decreases until the fixpoint")
}

pub fn process_batch(batch: &Batch) -> Result<Batch> {
    process_batch_with(batch, Execution::Parallel)
}

pub fn process_batch_with(batch: &Batch, exec: Execution) -> Result<Batch> {
    let positions = par::map(exec, &batch.positions, try_process)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        shape: batch.shape,
        positions,
    })
}
