//! Regression targets for the two networks and the policy induced by `N₂`.
//!
//! All values live on the log₁₀ scale of passive-node counts. A done or
//! impossible child needs no further cuts; it contributes `w_leaf` in place
//! of `10^N`.

use rand::Rng;

use nilprove_core::par::{self, Execution};
use nilprove_core::prooftree::{run_proof_with, Dropout, NodeInfo, ProofOptions};
use nilprove_core::{make_cut, CutLocation, CutPolicy, FilterConfig, Position, PositionStatus, ProofResult, Result};

use crate::encode::encode;
use crate::model::{Head, ValueModel};

/// Estimates `N(p)`, log₁₀ of the passive nodes still needed below `p`.
pub trait GlobalEstimator: Sync {
    fn global(&self, ps: &[&Position]) -> Vec<f64>;
}

/// Estimates `N₂(p; x, y)` for every location, indexed `x·a + y`.
/// Entries at unavailable locations are ignored by callers.
pub trait LocalEstimator: Sync {
    fn local(&self, ps: &[&Position]) -> Vec<Vec<f64>>;
}

impl GlobalEstimator for ValueModel {
    fn global(&self, ps: &[&Position]) -> Vec<f64> {
        assert_eq!(self.head, Head::Global, "global estimate from a local network");
        par::map(Execution::Parallel, ps, |p| self.forward(&encode(p))[0])
    }
}

impl LocalEstimator for ValueModel {
    fn local(&self, ps: &[&Position]) -> Vec<Vec<f64>> {
        assert_eq!(self.head, Head::Local, "local estimate from a global network");
        par::map(Execution::Parallel, ps, |p| self.forward(&encode(p)))
    }
}

/// `log₁₀(1 + Σ contributions)` over the children of one cut.
fn children_target(n: &dyn GlobalEstimator, children: &[(Position, PositionStatus)], w_leaf: f64) -> f64 {
    let active: Vec<&Position> = children
        .iter()
        .filter(|(_, s)| *s == PositionStatus::Active)
        .map(|(p, _)| p)
        .collect();
    let leaves = children.len() - active.len();
    let sum: f64 = n.global(&active).into_iter().map(|v| 10f64.powf(v)).sum::<f64>() + leaves as f64 * w_leaf;
    (1.0 + sum).log10()
}

pub fn target_local(n: &dyn GlobalEstimator, p: &Position, c: CutLocation, cfg: &FilterConfig, w_leaf: f64) -> Result<f64> {
    Ok(children_target(n, &make_cut(p, c, cfg)?, w_leaf))
}

/// Raw local targets of every available cut, row-major.
pub fn local_targets(n: &dyn GlobalEstimator, p: &Position, cfg: &FilterConfig, w_leaf: f64) -> Result<Vec<(CutLocation, f64)>> {
    p.available_cuts()
        .into_iter()
        .map(|c| Ok((c, target_local(n, p, c, cfg, w_leaf)?)))
        .collect()
}

/// Adds the normalized rank `R ∈ [0, 1]` of each raw target. Equal targets
/// rank in row-major order, so the argmin is unchanged.
pub fn rank_modify(raw: &[(CutLocation, f64)]) -> Vec<(CutLocation, f64)> {
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[i].1.total_cmp(&raw[j].1).then(i.cmp(&j)));
    let denom = raw.len().saturating_sub(1).max(1) as f64;
    let mut out = raw.to_vec();
    for (rank, &i) in order.iter().enumerate() {
        out[i].1 += rank as f64 / denom;
    }
    out
}

pub fn rank_modified_targets(
    n: &dyn GlobalEstimator,
    p: &Position,
    cfg: &FilterConfig,
    w_leaf: f64,
) -> Result<Vec<(CutLocation, f64)>> {
    Ok(rank_modify(&local_targets(n, p, cfg, w_leaf)?))
}

/// First available location, row-major, with the least value.
pub fn argmin_cut(p: &Position, values: &[f64]) -> CutLocation {
    let a = p.shape.a;
    let mut best: Option<(CutLocation, f64)> = None;
    for c in p.available_cuts() {
        let v = values[c.x * a + c.y];
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((c, v));
        }
    }
    best.expect("active position has an available cut").0
}

/// `cut^{N₂}`: the available cut minimizing `N₂`, first row-major on ties.
pub struct N2Policy<'a> {
    pub net: &'a dyn LocalEstimator,
}

pub fn policy_from_n2(net: &dyn LocalEstimator) -> N2Policy<'_> {
    N2Policy { net }
}

impl CutPolicy for N2Policy<'_> {
    fn decide(&self, p: &Position, _node: NodeInfo) -> CutLocation {
        argmin_cut(p, &self.net.local(&[p])[0])
    }

    fn decide_batch(&self, items: &[(&Position, NodeInfo)], _exec: Execution) -> Vec<CutLocation> {
        let ps: Vec<&Position> = items.iter().map(|(p, _)| *p).collect();
        let values = self.net.local(&ps);
        ps.iter().zip(&values).map(|(p, v)| argmin_cut(p, v)).collect()
    }

    fn name(&self) -> String {
        "learned".into()
    }
}

/// Estimated subtree sizes of a pruned proof: passive nodes below each
/// node plus `10^N` for every dropped leaf below it. Indexed like `nodes`.
pub fn estimated_subtrees(n: &dyn GlobalEstimator, proof: &ProofResult) -> Vec<f64> {
    let dropped: Vec<usize> = proof.dropped_leaves().collect();
    let ps: Vec<&Position> = dropped.iter().map(|&i| &proof.nodes[i].position).collect();
    let mut est = vec![0.0; proof.nodes.len()];
    for (&i, v) in dropped.iter().zip(n.global(&ps)) {
        est[i] = 10f64.powf(v);
    }
    for i in (0..proof.nodes.len()).rev() {
        let node = &proof.nodes[i];
        est[i] += node.is_passive() as u8 as f64 + node.children.iter().map(|&c| est[c]).sum::<f64>();
    }
    est
}

/// First sample method: a pruned proof under `policy`, then one global
/// sample per sample-eligible passive node.
pub fn target_global_pruned<R: Rng + ?Sized>(
    n: &dyn GlobalEstimator,
    policy: &dyn CutPolicy,
    root: &Position,
    cfg: &FilterConfig,
    dropout: Dropout,
    rng: &mut R,
) -> Result<(ProofResult, Vec<(Position, f64)>)> {
    let value_fn = |ps: &[&Position]| n.global(ps);
    let opts = ProofOptions {
        dropout: Some(dropout),
        value_fn: Some(&value_fn),
        root_stream: rng.gen(),
        ..ProofOptions::default()
    };
    let proof = run_proof_with(root, policy, cfg, opts, rng)?;
    let est = estimated_subtrees(n, &proof);
    let samples = proof
        .nodes
        .iter()
        .zip(&est)
        .filter(|(v, _)| v.is_passive() && v.sample_eligible)
        .map(|(v, &e)| (v.position.clone(), e.log10()))
        .collect();
    Ok((proof, samples))
}

/// Second sample method: one cut chosen by `N₂`, children valued by `N`.
pub fn target_global_onestep(
    n: &dyn GlobalEstimator,
    n2: &dyn LocalEstimator,
    p: &Position,
    cfg: &FilterConfig,
    w_leaf: f64,
) -> Result<f64> {
    let c = argmin_cut(p, &n2.local(&[p])[0]);
    target_local(n, p, c, cfg, w_leaf)
}
