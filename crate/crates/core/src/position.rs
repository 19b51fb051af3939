//! Shapes, positions, and the status classification of a position.
//!
//! Index layout: `A = {0..a}`, `B⁰ = {0..=b}` with `0_B = b`, and
//! `I⁰ = {0, 1}` where bit 0 is `0_I` and bit 1 is `1_I`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{full_column, single, unique_value, Column, Mask, MAX_VALUES};

pub const ZERO_I: Column = 0b01;
pub const ONE_I: Column = 0b10;
pub const BOTH_I: Column = 0b11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub a: usize,
    pub b: usize,
}

impl Shape {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a < 2 || b < 2 || b + 1 > MAX_VALUES {
            return Err(Error::InvalidShape { a, b });
        }
        Ok(Shape { a, b })
    }

    /// Size of `B⁰`.
    #[inline]
    pub fn bz(&self) -> usize {
        self.b + 1
    }

    /// Index of `0_B` in `B⁰`.
    #[inline]
    pub fn zero_b(&self) -> usize {
        self.b
    }

    #[inline]
    pub fn iz(&self) -> usize {
        2
    }

    #[inline]
    pub fn m_idx(&self, x: usize, y: usize) -> usize {
        x * self.a + y
    }

    #[inline]
    pub fn l_idx(&self, x: usize, p: usize) -> usize {
        x * self.bz() + p
    }

    #[inline]
    pub fn r_idx(&self, p: usize, z: usize) -> usize {
        p * self.a + z
    }

    #[inline]
    pub fn t_idx(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.a + y) * self.a + z
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CutLocation {
    pub x: usize,
    pub y: usize,
}

impl CutLocation {
    pub fn new(x: usize, y: usize) -> Self {
        CutLocation { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionStatus {
    Active,
    Done,
    Impossible,
}

impl PositionStatus {
    pub fn is_leaf(self) -> bool {
        self != PositionStatus::Active
    }
}

impl fmt::Display for PositionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PositionStatus::Active => "active",
            PositionStatus::Done => "done",
            PositionStatus::Impossible => "impossible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterConfig {
    pub profile_filter_on: bool,
    pub half_ones_filter_on: bool,
    /// Number of `1_I` values of the fixed left multiplication on `B`.
    pub ones_phi: usize,
}

impl FilterConfig {
    pub fn new(profile: bool, half_ones: bool) -> Self {
        FilterConfig {
            profile_filter_on: profile,
            half_ones_filter_on: half_ones,
            ones_phi: 0,
        }
    }

    pub fn all_on() -> Self {
        Self::new(true, true)
    }

    pub fn all_off() -> Self {
        Self::new(false, false)
    }

    /// Same toggles with `ones_phi` read off the (done) `l` mask of `p`.
    pub fn for_position(self, p: &Position) -> Self {
        FilterConfig {
            ones_phi: p.ones_phi(),
            ..self
        }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::all_on()
    }
}

/// Quadruple of masks for `μ: A×A→B⁰`, `φ: A×B⁰→I⁰`, `ψ: B⁰×A→I⁰`
/// and `τ: A×A×A→I⁰`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub shape: Shape,
    pub m: Mask,
    pub l: Mask,
    pub r: Mask,
    pub t: Mask,
}

impl Position {
    /// Everything allowed, apart from the zero rows `φ(x,0_B) = ψ(0_B,z) = 0_I`.
    pub fn full(shape: Shape) -> Self {
        let (a, bz) = (shape.a, shape.bz());
        let mut l = Mask::full(&[a, bz], 2);
        let mut r = Mask::full(&[bz, a], 2);
        for x in 0..a {
            l.set_col(shape.l_idx(x, shape.zero_b()), ZERO_I);
            r.set_col(shape.r_idx(shape.zero_b(), x), ZERO_I);
        }
        Position {
            shape,
            m: Mask::full(&[a, a], bz),
            l,
            r,
            t: Mask::full(&[a, a, a], 2),
        }
    }

    /// Root position for a fixed left multiplication, before propagation.
    /// `phi[x][j]` is `φ(x, j)` for `j ∈ B`.
    pub fn with_phi(shape: Shape, phi: &[Vec<bool>]) -> Result<Self> {
        if phi.len() != shape.a || phi.iter().any(|row| row.len() != shape.b) {
            return Err(Error::DimMismatch {
                expected: vec![shape.a, shape.b],
                found: vec![phi.len(), phi.first().map_or(0, Vec::len)],
            });
        }
        let mut p = Position::full(shape);
        for (x, row) in phi.iter().enumerate() {
            for (j, &one) in row.iter().enumerate() {
                p.l.set_col(shape.l_idx(x, j), if one { ONE_I } else { ZERO_I });
            }
        }
        Ok(p)
    }

    /// Random position with a random done `l` and the zero-row constraints;
    /// every other bit is kept with probability `density`.
    pub fn random<R: Rng + ?Sized>(shape: Shape, rng: &mut R, density: f64) -> Self {
        let mut p = Position::full(shape);
        for x in 0..shape.a {
            for j in 0..shape.b {
                let v = if rng.gen_bool(0.5) { ONE_I } else { ZERO_I };
                p.l.set_col(shape.l_idx(x, j), v);
            }
        }
        let thin = |mask: &mut Mask, rng: &mut R, skip: &dyn Fn(usize) -> bool| {
            let values = mask.values();
            for i in 0..mask.len() {
                if skip(i) {
                    continue;
                }
                let mut c = 0;
                for z in 0..values {
                    if rng.gen_bool(density) {
                        c |= single(z);
                    }
                }
                mask.set_col(i, c & full_column(values));
            }
        };
        let zb = shape.zero_b();
        thin(&mut p.m, rng, &|_| false);
        thin(&mut p.r, rng, &|i| i / shape.a == zb);
        thin(&mut p.t, rng, &|_| false);
        p
    }

    /// Count of `(x, j)` with `j ∈ B` whose only allowed `l` value is `1_I`.
    pub fn ones_phi(&self) -> usize {
        let s = self.shape;
        (0..s.a)
            .flat_map(|x| (0..s.b).map(move |j| s.l_idx(x, j)))
            .filter(|&i| self.l.col(i) == ONE_I)
            .count()
    }

    /// Componentwise inclusion `self ⊂ other`.
    pub fn is_subset_of(&self, other: &Position) -> Result<bool> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch);
        }
        Ok(self.m.is_subset_of(&other.m)
            && self.l.is_subset_of(&other.l)
            && self.r.is_subset_of(&other.r)
            && self.t.is_subset_of(&other.t))
    }

    /// Total number of allowed entries across the four masks.
    pub fn knowledge(&self) -> u32 {
        self.m.ones() + self.l.ones() + self.r.ones() + self.t.ones()
    }

    pub fn all_possible(&self) -> bool {
        self.m.is_possible() && self.l.is_possible() && self.r.is_possible() && self.t.is_possible()
    }

    /// All `(x, y)` with at least two candidate products, row-major.
    pub fn available_cuts(&self) -> Vec<CutLocation> {
        let a = self.shape.a;
        (0..a)
            .flat_map(|x| (0..a).map(move |y| CutLocation::new(x, y)))
            .filter(|c| self.m.stat_at(self.shape.m_idx(c.x, c.y)) >= 2)
            .collect()
    }

    pub fn is_available(&self, c: CutLocation) -> bool {
        c.x < self.shape.a && c.y < self.shape.a && self.m.stat_at(self.shape.m_idx(c.x, c.y)) >= 2
    }

    /// Candidate products at `(x, y)` in ascending order.
    pub fn cut_values(&self, c: CutLocation) -> Vec<usize> {
        let col = self.m.col(self.shape.m_idx(c.x, c.y));
        (0..self.shape.bz()).filter(|&z| col >> z & 1 == 1).collect()
    }

    /// Copy with the `μ(x, y)` column replaced by the single value `z`.
    pub fn with_product(&self, c: CutLocation, z: usize) -> Position {
        let mut p = self.clone();
        p.m.set_col(self.shape.m_idx(c.x, c.y), single(z));
        p
    }

    /// Classification under a filter configuration.
    pub fn filter(&self, cfg: &FilterConfig) -> PositionStatus {
        if !self.all_possible()
            || (cfg.profile_filter_on && self.profile_filter())
            || (cfg.half_ones_filter_on && self.half_ones_filter(cfg))
        {
            PositionStatus::Impossible
        } else if self.m.is_done() {
            PositionStatus::Done
        } else {
            PositionStatus::Active
        }
    }

    /// Fires when two distinct elements of `B⁰` have the same profile: equal
    /// columns of φ and equal, fully determined rows of ψ. A pair involving
    /// `0_B` catches an element of `B` that multiplies like zero.
    pub fn profile_filter(&self) -> bool {
        let bz = self.shape.bz();
        (0..bz).any(|p| (p + 1..bz).any(|p2| self.same_profile(p, p2)))
    }

    fn same_profile(&self, p: usize, p2: usize) -> bool {
        let s = self.shape;
        let same_unique = |c1: Column, c2: Column| unique_value(c1).is_some() && c1 == c2;
        (0..s.a).all(|x| same_unique(self.l.col(s.l_idx(x, p)), self.l.col(s.l_idx(x, p2))))
            && (0..s.a).all(|z| same_unique(self.r.col(s.r_idx(p, z)), self.r.col(s.r_idx(p2, z))))
    }

    /// Number of `ψ(p, z)` with `p ∈ B` forced to `1_I`.
    pub fn forced_ones_psi(&self) -> usize {
        let s = self.shape;
        (0..s.b)
            .flat_map(|p| (0..s.a).map(move |z| s.r_idx(p, z)))
            .filter(|&i| self.r.col(i) == ONE_I)
            .count()
    }

    pub fn half_ones_filter(&self, cfg: &FilterConfig) -> bool {
        self.forced_ones_psi() > cfg.ones_phi
    }

    /// Text form: a `shape a b` line, then one line per mask holding one
    /// 0/1 token per value-axis column in row-major order.
    pub fn to_text(&self) -> String {
        let line = |name: &str, m: &Mask| {
            let toks: Vec<String> = m.tokens().collect();
            format!("{name} {}\n", toks.join(" "))
        };
        format!(
            "shape {} {}\n{}{}{}{}",
            self.shape.a,
            self.shape.b,
            line("m", &self.m),
            line("l", &self.l),
            line("r", &self.r),
            line("t", &self.t)
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (ln, head) = lines.next().ok_or_else(|| perr(0, "empty input"))?;
        let nums: Vec<usize> = match head.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["shape", a, b] => [a, b]
                .iter()
                .map(|s| s.parse().map_err(|_| perr(ln, "bad shape")))
                .collect::<Result<_>>()?,
            _ => return Err(perr(ln, "expected `shape a b`")),
        };
        let shape = Shape::new(nums[0], nums[1])?;
        let (a, bz) = (shape.a, shape.bz());
        let specs: [(&str, Vec<usize>, usize); 4] = [
            ("m", vec![a, a], bz),
            ("l", vec![a, bz], 2),
            ("r", vec![bz, a], 2),
            ("t", vec![a, a, a], 2),
        ];
        let mut masks = Vec::with_capacity(4);
        for (name, dims, values) in specs {
            let (ln, line) = lines.next().ok_or_else(|| perr(0, "missing mask line"))?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(name) {
                return Err(perr(ln, &format!("expected mask `{name}`")));
            }
            let cols = toks
                .map(|t| Mask::parse_token(t, values).ok_or_else(|| perr(ln, "bad column token")))
                .collect::<Result<Vec<_>>>()?;
            masks.push(Mask::from_columns(&dims, values, cols).map_err(|e| perr(ln, &e.to_string()))?);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing input"));
        }
        let t = masks.pop().unwrap();
        let r = masks.pop().unwrap();
        let l = masks.pop().unwrap();
        let m = masks.pop().unwrap();
        Ok(Position { shape, m, l, r, t })
    }
}

impl FromStr for Position {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Position::from_text(s)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
