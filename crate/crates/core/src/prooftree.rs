//! Proof trees built by cuts on the product `μ`.
//!
//! Expansion is breadth-layered: every round decides cuts for the whole
//! active frontier, then expands the frontier (in parallel when enabled).
//! Nodes live in an arena in creation order, children ordered by ascending
//! product value, so a tree is a deterministic function of its inputs.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::position::{CutLocation, FilterConfig, Position, PositionStatus};
use crate::propagate::{try_process_skipping, Rule};

/// Per-node context handed to policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeInfo {
    pub depth: usize,
    /// Deterministic per-node random stream, derived from the path.
    pub stream: u64,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn child_stream(parent: u64, z: usize) -> u64 {
    splitmix64(parent ^ (z as u64 + 1).wrapping_mul(0x2545_f491_4f6c_dd1d))
}

/// Chooses the cut at an active position. The result must be available.
pub trait CutPolicy: Sync {
    fn decide(&self, position: &Position, node: NodeInfo) -> CutLocation;

    /// Decisions for a whole frontier. Override for batched evaluation.
    fn decide_batch(&self, items: &[(&Position, NodeInfo)], exec: Execution) -> Vec<CutLocation> {
        par::map(exec, items, |(p, info)| self.decide(p, *info))
    }

    /// Whether nodes at this depth may be used as training samples.
    fn sample_eligible(&self, _depth: usize) -> bool {
        true
    }

    fn name(&self) -> String;
}

impl<P: CutPolicy + ?Sized> CutPolicy for &P {
    fn decide(&self, position: &Position, node: NodeInfo) -> CutLocation {
        (**self).decide(position, node)
    }
    fn decide_batch(&self, items: &[(&Position, NodeInfo)], exec: Execution) -> Vec<CutLocation> {
        (**self).decide_batch(items, exec)
    }
    fn sample_eligible(&self, depth: usize) -> bool {
        (**self).sample_eligible(depth)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<P: CutPolicy + ?Sized> CutPolicy for Box<P> {
    fn decide(&self, position: &Position, node: NodeInfo) -> CutLocation {
        (**self).decide(position, node)
    }
    fn decide_batch(&self, items: &[(&Position, NodeInfo)], exec: Execution) -> Vec<CutLocation> {
        (**self).decide_batch(items, exec)
    }
    fn sample_eligible(&self, depth: usize) -> bool {
        (**self).sample_eligible(depth)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

/// First available location in the order (0,0), (1,1), (1,0), (0,1), then
/// the remaining pairs row-major from (0,2).
#[derive(Debug, Clone, Copy, Default)]
pub struct BenchmarkPolicy;

impl BenchmarkPolicy {
    pub fn order(a: usize) -> Vec<CutLocation> {
        let head = [(0, 0), (1, 1), (1, 0), (0, 1)].map(|(x, y)| CutLocation::new(x, y));
        let mut order = head.to_vec();
        for x in 0..a {
            for y in 0..a {
                let c = CutLocation::new(x, y);
                if !head.contains(&c) {
                    order.push(c);
                }
            }
        }
        order
    }
}

impl CutPolicy for BenchmarkPolicy {
    fn decide(&self, p: &Position, _node: NodeInfo) -> CutLocation {
        Self::order(p.shape.a)
            .into_iter()
            .find(|&c| p.is_available(c))
            .expect("active position has an available cut")
    }

    fn name(&self) -> String {
        "benchmark".into()
    }
}

pub fn benchmark_policy() -> BenchmarkPolicy {
    BenchmarkPolicy
}

fn random_cut(p: &Position, seed: u64, node: NodeInfo) -> CutLocation {
    let cuts = p.available_cuts();
    let k = splitmix64(seed ^ node.stream) % cuts.len() as u64;
    cuts[k as usize]
}

/// Uniformly random available cut, seeded per node.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub seed: u64,
}

impl CutPolicy for RandomPolicy {
    fn decide(&self, p: &Position, node: NodeInfo) -> CutLocation {
        random_cut(p, self.seed, node)
    }

    fn name(&self) -> String {
        format!("random[{}]", self.seed)
    }
}

/// Random cuts above `switch_depth`, the base policy at and below it.
/// Only nodes at or below the switch are sample-eligible.
pub struct RandomPrefixPolicy<P> {
    pub base: P,
    pub switch_depth: usize,
    pub seed: u64,
}

impl<P: CutPolicy> RandomPrefixPolicy<P> {
    pub fn new<R: Rng + ?Sized>(base: P, switch_depth: usize, rng: &mut R) -> Self {
        RandomPrefixPolicy {
            base,
            switch_depth,
            seed: rng.gen(),
        }
    }
}

impl<P: CutPolicy> CutPolicy for RandomPrefixPolicy<P> {
    fn decide(&self, p: &Position, node: NodeInfo) -> CutLocation {
        if node.depth < self.switch_depth {
            random_cut(p, self.seed, node)
        } else {
            self.base.decide(p, node)
        }
    }

    fn decide_batch(&self, items: &[(&Position, NodeInfo)], exec: Execution) -> Vec<CutLocation> {
        let below: Vec<(&Position, NodeInfo)> = items
            .iter()
            .copied()
            .filter(|(_, n)| n.depth >= self.switch_depth)
            .collect();
        let mut base_cuts = self.base.decide_batch(&below, exec).into_iter();
        items
            .iter()
            .map(|(p, n)| {
                if n.depth < self.switch_depth {
                    random_cut(p, self.seed, *n)
                } else {
                    base_cuts.next().expect("one base decision per deep node")
                }
            })
            .collect()
    }

    fn sample_eligible(&self, depth: usize) -> bool {
        depth >= self.switch_depth
    }

    fn name(&self) -> String {
        format!("prefix[{}]+{}", self.switch_depth, self.base.name())
    }
}

pub fn randomized_prefix_policy<P: CutPolicy, R: Rng + ?Sized>(
    base: P,
    switch_depth: usize,
    rng: &mut R,
) -> RandomPrefixPolicy<P> {
    RandomPrefixPolicy::new(base, switch_depth, rng)
}

/// Children of a cut: one per allowed product value, ascending, each
/// propagated and classified.
pub fn make_cut(p: &Position, c: CutLocation, cfg: &FilterConfig) -> Result<Vec<(Position, PositionStatus)>> {
    make_cut_skipping(p, c, cfg, None)
}

fn make_cut_skipping(
    p: &Position,
    c: CutLocation,
    cfg: &FilterConfig,
    skip: Option<Rule>,
) -> Result<Vec<(Position, PositionStatus)>> {
    if !p.is_available(c) {
        return Err(Error::UnavailableCut(c));
    }
    p.cut_values(c)
        .into_iter()
        .map(|z| {
            let child = try_process_skipping(&p.with_product(c, z), skip)?;
            let status = child.filter(cfg);
            Ok((child, status))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofNode {
    pub position: Position,
    pub status: PositionStatus,
    pub cut: Option<CutLocation>,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Product value chosen at the parent's cut.
    pub value: Option<usize>,
    pub depth: usize,
    /// Active leaf left unexpanded by dropout.
    pub dropped: bool,
    pub sample_eligible: bool,
    pub stream: u64,
}

impl ProofNode {
    pub fn is_passive(&self) -> bool {
        self.cut.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofResult {
    /// Arena of nodes; index 0 is the root.
    pub nodes: Vec<ProofNode>,
    pub passive_nodes: u64,
    pub done_leaves: u64,
    pub impossible_leaves: u64,
    pub active_leaves: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProofSummary {
    pub sigma: usize,
    pub policy: String,
    pub filters: String,
    pub passive_nodes: u64,
    pub done: u64,
    pub impossible: u64,
    pub seconds: f64,
}

impl ProofResult {
    pub fn root(&self) -> &ProofNode {
        &self.nodes[0]
    }

    pub fn done_positions(&self) -> Vec<&Position> {
        self.nodes
            .iter()
            .filter(|n| n.status == PositionStatus::Done && n.children.is_empty())
            .map(|n| &n.position)
            .collect()
    }

    /// Classification output: the set of done leaf positions.
    pub fn done_set(&self) -> HashSet<Position> {
        self.done_positions().into_iter().cloned().collect()
    }

    pub fn dropped_leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].dropped)
    }

    /// Passive-node count of every subtree, indexed like `nodes`.
    pub fn subtree_passive(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.nodes.len()];
        // children are always created after their parent
        for i in (0..self.nodes.len()).rev() {
            let n = &self.nodes[i];
            counts[i] = n.is_passive() as u64 + n.children.iter().map(|&c| counts[c]).sum::<u64>();
        }
        counts
    }

    pub fn summary(&self, sigma: usize, policy: &str, filters: &str, seconds: f64) -> ProofSummary {
        ProofSummary {
            sigma,
            policy: policy.to_string(),
            filters: filters.to_string(),
            passive_nodes: self.passive_nodes,
            done: self.done_leaves,
            impossible: self.impossible_leaves,
            seconds,
        }
    }

    fn node_json(&self, i: usize) -> Value {
        let n = &self.nodes[i];
        json!({
            "depth": n.depth,
            "cut": n.cut.map(|c| [c.x, c.y]),
            "value": n.value,
            "status": n.status,
            "dropped": n.dropped,
            "children": n.children.iter().map(|&c| self.node_json(c)).collect::<Vec<_>>(),
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "passive_nodes": self.passive_nodes,
            "done_leaves": self.done_leaves,
            "impossible_leaves": self.impossible_leaves,
            "active_leaves": self.active_leaves,
            "root": self.node_json(0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    /// Keep a uniformly random subset of the frontier.
    Stochastic,
    /// Keep the frontier nodes with the highest value estimates.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dropout {
    pub limit: usize,
    pub mode: DropoutMode,
}

pub type ValueFn<'a> = &'a (dyn Fn(&[&Position]) -> Vec<f64> + Sync);

#[derive(Clone, Copy, Default)]
pub struct ProofOptions<'a> {
    pub exec: Execution,
    pub root_stream: u64,
    pub dropout: Option<Dropout>,
    /// Batched value estimates, needed by adaptive dropout.
    pub value_fn: Option<ValueFn<'a>>,
    /// Fault injection: leave this rule out when propagating children.
    pub skip_rule: Option<Rule>,
}

pub fn run_proof(root: &Position, policy: &dyn CutPolicy, cfg: &FilterConfig) -> Result<ProofResult> {
    run_proof_with(root, policy, cfg, ProofOptions::default(), &mut rand::rngs::mock::StepRng::new(0, 1))
}

pub fn run_pruned_proof<R: Rng + ?Sized>(
    root: &Position,
    policy: &dyn CutPolicy,
    cfg: &FilterConfig,
    dropout: Dropout,
    value_fn: Option<ValueFn<'_>>,
    rng: &mut R,
) -> Result<ProofResult> {
    let opts = ProofOptions {
        dropout: Some(dropout),
        value_fn,
        root_stream: rng.gen(),
        ..ProofOptions::default()
    };
    run_proof_with(root, policy, cfg, opts, rng)
}

pub fn run_proof_with<R: Rng + ?Sized>(
    root: &Position,
    policy: &dyn CutPolicy,
    cfg: &FilterConfig,
    opts: ProofOptions<'_>,
    rng: &mut R,
) -> Result<ProofResult> {
    if let Some(d) = opts.dropout {
        if d.limit == 0 {
            return Err(Error::Config("dropout limit must be at least 1".into()));
        }
        if d.mode == DropoutMode::Adaptive && opts.value_fn.is_none() {
            return Err(Error::Config("adaptive dropout needs a value function".into()));
        }
    }
    let status = root.filter(cfg);
    let mut nodes = vec![ProofNode {
        position: root.clone(),
        status,
        cut: None,
        children: vec![],
        parent: None,
        value: None,
        depth: 0,
        dropped: false,
        sample_eligible: policy.sample_eligible(0),
        stream: opts.root_stream,
    }];
    let mut frontier: Vec<usize> = if status == PositionStatus::Active { vec![0] } else { vec![] };

    while !frontier.is_empty() {
        if let Some(d) = opts.dropout {
            if frontier.len() > d.limit {
                let keep: Vec<usize> = match d.mode {
                    DropoutMode::Stochastic => {
                        let mut picked = index::sample(rng, frontier.len(), d.limit).into_vec();
                        picked.sort_unstable();
                        picked
                    }
                    DropoutMode::Adaptive => {
                        let value_fn = opts.value_fn.expect("checked above");
                        let ps: Vec<&Position> = frontier.iter().map(|&i| &nodes[i].position).collect();
                        let values = value_fn(&ps);
                        let mut order: Vec<usize> = (0..frontier.len()).collect();
                        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
                        order.truncate(d.limit);
                        order.sort_unstable();
                        order
                    }
                };
                let mut kept = Vec::with_capacity(keep.len());
                let mut ki = keep.iter().peekable();
                for (k, &id) in frontier.iter().enumerate() {
                    if ki.peek() == Some(&&k) {
                        ki.next();
                        kept.push(id);
                    } else {
                        nodes[id].dropped = true;
                    }
                }
                frontier = kept;
            }
        }

        let items: Vec<(&Position, NodeInfo)> = frontier
            .iter()
            .map(|&i| {
                let n = &nodes[i];
                (
                    &n.position,
                    NodeInfo {
                        depth: n.depth,
                        stream: n.stream,
                    },
                )
            })
            .collect();
        let cuts = policy.decide_batch(&items, opts.exec);
        let expanded = par::map_indexed(opts.exec, frontier.len(), |k| make_cut_skipping(items[k].0, cuts[k], cfg, opts.skip_rule));

        let mut next = Vec::new();
        for ((&id, cut), children) in frontier.iter().zip(cuts).zip(expanded) {
            let children = children?;
            let values = nodes[id].position.cut_values(cut);
            let (depth, stream) = (nodes[id].depth + 1, nodes[id].stream);
            nodes[id].cut = Some(cut);
            for ((position, status), z) in children.into_iter().zip(values) {
                let child = nodes.len();
                nodes.push(ProofNode {
                    position,
                    status,
                    cut: None,
                    children: vec![],
                    parent: Some(id),
                    value: Some(z),
                    depth,
                    dropped: false,
                    sample_eligible: policy.sample_eligible(depth),
                    stream: child_stream(stream, z),
                });
                nodes[id].children.push(child);
                if status == PositionStatus::Active {
                    next.push(child);
                }
            }
        }
        frontier = next;
    }

    let mut result = ProofResult {
        nodes,
        passive_nodes: 0,
        done_leaves: 0,
        impossible_leaves: 0,
        active_leaves: 0,
    };
    for n in &result.nodes {
        if n.is_passive() {
            result.passive_nodes += 1;
        } else {
            match n.status {
                PositionStatus::Done => result.done_leaves += 1,
                PositionStatus::Impossible => result.impossible_leaves += 1,
                PositionStatus::Active => result.active_leaves += 1,
            }
        }
    }
    Ok(result)
}
