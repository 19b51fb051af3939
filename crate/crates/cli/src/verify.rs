//! Classification-set checks across policies.
//!
//! The benchmark proof with sound propagation is the reference. Every
//! other policy must produce exactly the same set of done leaves. On tiny
//! shapes the reference is also checked against an exhaustive list of
//! associative structures.

use std::collections::{BTreeSet, HashSet};

use nilprove_core::propagate::Rule;
use nilprove_core::prooftree::{run_proof_with, ProofOptions};
use nilprove_core::{benchmark_policy, CutPolicy, FilterConfig, Position, RandomPolicy, Result, Shape};

/// Largest structure space the exhaustive check will walk.
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 20;

pub struct VerifyOptions<'a> {
    pub random_seeds: Vec<u64>,
    pub learned: Option<&'a dyn CutPolicy>,
    /// Fault injection for candidate proofs.
    pub skip_rule: Option<Rule>,
    pub brute_force: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaReport {
    pub sigma: usize,
    pub done: usize,
    /// Associative structures covered by the root, when enumerated.
    pub structures: Option<usize>,
    pub mismatches: Vec<String>,
}

impl SigmaReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn done_set(root: &Position, policy: &dyn CutPolicy, cfg: &FilterConfig, skip: Option<Rule>) -> Result<HashSet<Position>> {
    let opts = ProofOptions {
        skip_rule: skip,
        ..ProofOptions::default()
    };
    Ok(run_proof_with(root, policy, cfg, opts, &mut rand::rngs::mock::StepRng::new(0, 1))?.done_set())
}

/// `μ` table of a done position as text, rows separated by `/`.
pub fn table_text(p: &Position) -> String {
    let a = p.shape.a;
    match p.m.demultiplex() {
        Some(t) => t
            .chunks(a)
            .map(|r| r.iter().map(|v| v.to_string()).collect::<String>())
            .collect::<Vec<_>>()
            .join("/"),
        None => "?".into(),
    }
}

/// At most three positions from each side of a disagreement.
fn diff(name: &str, reference: &HashSet<Position>, got: &HashSet<Position>) -> String {
    let sample = |s: &HashSet<Position>, t: &HashSet<Position>| {
        let mut v: Vec<String> = s.difference(t).map(table_text).collect();
        v.sort();
        v.truncate(3);
        v.join(" ")
    };
    format!(
        "{name}: {} done vs {} reference; only in {name}: [{}]; only in reference: [{}]",
        got.len(),
        reference.len(),
        sample(got, reference),
        sample(reference, got)
    )
}

pub fn verify_instance(sigma: usize, root: &Position, cfg: &FilterConfig, opts: &VerifyOptions<'_>) -> Result<SigmaReport> {
    let reference = done_set(root, &benchmark_policy(), cfg, None)?;
    let mut mismatches = Vec::new();
    let mut candidates: Vec<(String, Box<dyn CutPolicy + '_>)> = opts
        .random_seeds
        .iter()
        .map(|&seed| (format!("random[{seed}]"), Box::new(RandomPolicy { seed }) as Box<dyn CutPolicy>))
        .collect();
    if let Some(l) = opts.learned {
        candidates.push(("learned".into(), Box::new(l)));
    }
    if opts.skip_rule.is_some() {
        candidates.push(("benchmark".into(), Box::new(benchmark_policy())));
    }
    for (name, policy) in &candidates {
        let got = done_set(root, policy.as_ref(), cfg, opts.skip_rule)?;
        if got != reference {
            mismatches.push(diff(name, &reference, &got));
        }
    }
    let mut structures = None;
    if opts.brute_force && structure_space(root.shape) <= BRUTE_FORCE_LIMIT {
        let all = all_structures(root.shape);
        let expected: BTreeSet<&Structure> = all.iter().filter(|s| s.covered_by(root)).collect();
        let from_leaves: BTreeSet<&Structure> = all
            .iter()
            .filter(|s| reference.iter().any(|p| s.covered_by(p)))
            .collect();
        if from_leaves != expected {
            mismatches.push(format!(
                "exhaustive: root covers {} structures, done leaves cover {}",
                expected.len(),
                from_leaves.len()
            ));
        }
        structures = Some(expected.len());
    }
    Ok(SigmaReport {
        sigma,
        done: reference.len(),
        structures,
        mismatches,
    })
}

/// Number of candidate `(μ, φ, ψ)` triples.
pub fn structure_space(s: Shape) -> u64 {
    let mu = (s.bz() as u64).checked_pow((s.a * s.a) as u32).unwrap_or(u64::MAX);
    mu.saturating_mul(1u64.checked_shl((2 * s.a * s.b) as u32).unwrap_or(u64::MAX))
}

/// An associative structure; `τ` follows from `μ` and `φ`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Structure {
    shape: (usize, usize),
    mu: Vec<usize>,
    phi: Vec<usize>,
    psi: Vec<usize>,
}

impl Structure {
    fn f(&self, x: usize, q: usize) -> usize {
        let (_, b) = self.shape;
        if q == b {
            0
        } else {
            self.phi[x * b + q]
        }
    }

    fn g(&self, q: usize, z: usize) -> usize {
        let (a, b) = self.shape;
        if q == b {
            0
        } else {
            self.psi[q * a + z]
        }
    }

    pub fn covered_by(&self, p: &Position) -> bool {
        let s = p.shape;
        let (a, bz) = (s.a, s.bz());
        let bit = |col: u16, v: usize| col >> v & 1 == 1;
        (0..a * a).all(|i| bit(p.m.col(i), self.mu[i]))
            && (0..a).all(|x| (0..bz).all(|q| bit(p.l.col(s.l_idx(x, q)), self.f(x, q))))
            && (0..bz).all(|q| (0..a).all(|z| bit(p.r.col(s.r_idx(q, z)), self.g(q, z))))
            && (0..a).all(|x| {
                (0..a).all(|y| (0..a).all(|z| bit(p.t.col(s.t_idx(x, y, z)), self.f(x, self.mu[y * a + z]))))
            })
    }
}

pub fn all_structures(s: Shape) -> Vec<Structure> {
    let (a, b, bz) = (s.a, s.b, s.bz());
    let mut out = Vec::new();
    for mu_code in 0..(bz as u64).pow((a * a) as u32) {
        let mut c = mu_code;
        let mu: Vec<usize> = (0..a * a)
            .map(|_| {
                let v = (c % bz as u64) as usize;
                c /= bz as u64;
                v
            })
            .collect();
        for phi_code in 0..1u64 << (a * b) {
            for psi_code in 0..1u64 << (a * b) {
                let st = Structure {
                    shape: (a, b),
                    mu: mu.clone(),
                    phi: (0..a * b).map(|i| (phi_code >> i & 1) as usize).collect(),
                    psi: (0..a * b).map(|i| (psi_code >> i & 1) as usize).collect(),
                };
                let assoc = (0..a).all(|x| {
                    (0..a).all(|y| (0..a).all(|z| st.f(x, st.mu[y * a + z]) == st.g(st.mu[x * a + y], z)))
                });
                if assoc {
                    out.push(st);
                }
            }
        }
    }
    out
}
