//! Exact minimal proof sizes by expansion, bound propagation and pruning.
//!
//! Every reachable active position gets a [`BoundNode`] holding a bracket
//! `[lower, upper]` on its minimal number of passive nodes. New nodes start
//! at `lower = 1` with `upper` taken from a concrete proof by the upper-bound
//! policy. Expanding a node creates the children of every available cut; the
//! bracket of a cut is the sum over its children and the bracket of a node
//! is one plus the minimum over its live cuts. A cut whose lower bound
//! exceeds the best upper bound at its node is pruned, and a node whose
//! bracket has closed is not expanded further.
//!
//! Identical positions share a node, so the store is a DAG. A cut strictly
//! shrinks `m`, so sorting nodes by the number of set bits of `m` gives a
//! children-first order for propagation.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::position::{CutLocation, FilterConfig, Position, PositionStatus};
use crate::prooftree::{make_cut, run_proof_with, splitmix64, CutPolicy, ProofOptions};

pub type NodeId = usize;

/// Default cap on stored nodes before [`minimize`] gives up with a bracket.
pub const DEFAULT_NODE_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutBranch {
    pub cut: CutLocation,
    /// `(z, node)` per allowed value, ascending; `None` for done or
    /// impossible children, which need no further cuts.
    pub children: Vec<(usize, Option<NodeId>)>,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundNode {
    pub position: Position,
    pub lower: u64,
    pub upper: u64,
    pub expanded: bool,
    pub cuts: Vec<CutBranch>,
    ones: u32,
}

impl BoundNode {
    pub fn resolved(&self) -> bool {
        self.lower == self.upper
    }

    pub fn branch(&self, c: CutLocation) -> Option<&CutBranch> {
        self.cuts.iter().find(|b| b.cut == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimizeOptions {
    pub exec: Execution,
    /// Resolve every first-level child exactly, so the whole root matrix
    /// is exact rather than only its minimal entries.
    pub split_root: bool,
    pub node_limit: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            exec: Execution::Parallel,
            split_root: false,
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

/// Bracket of one cut, with the bracket of each child.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CutBound {
    pub lower: u64,
    pub upper: u64,
    pub pruned: bool,
    /// `(z, lower, upper)` per allowed value.
    pub children: Vec<(usize, u64, u64)>,
}

impl CutBound {
    pub fn exact(&self) -> Option<u64> {
        (self.lower == self.upper).then_some(self.lower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub expanded: usize,
    pub nodes: usize,
    pub pruned_cuts: usize,
    pub root_lower: u64,
    pub root_upper: u64,
}

/// Node store for one root.
#[derive(Debug, Clone)]
pub struct BoundTree {
    pub cfg: FilterConfig,
    pub nodes: Vec<BoundNode>,
    index: HashMap<Position, NodeId>,
    pub root: NodeId,
    pub split_root: bool,
}

impl BoundTree {
    fn new(root: &Position, cfg: FilterConfig, split_root: bool, upper: u64) -> Self {
        let mut tree = BoundTree {
            cfg,
            nodes: Vec::new(),
            index: HashMap::new(),
            root: 0,
            split_root,
        };
        tree.insert(root.clone(), upper);
        tree
    }

    fn insert(&mut self, position: Position, upper: u64) -> NodeId {
        let id = self.nodes.len();
        self.index.insert(position.clone(), id);
        self.nodes.push(BoundNode {
            ones: position.m.ones(),
            position,
            lower: 1,
            upper: upper.max(1),
            expanded: false,
            cuts: Vec::new(),
        });
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, p: &Position) -> Option<NodeId> {
        self.index.get(p).copied()
    }

    pub fn node(&self, id: NodeId) -> &BoundNode {
        &self.nodes[id]
    }

    fn child_bounds(&self, child: Option<NodeId>) -> (u64, u64) {
        child.map_or((0, 0), |c| (self.nodes[c].lower, self.nodes[c].upper))
    }

    fn branch_bounds(&self, b: &CutBranch) -> (u64, u64) {
        b.children.iter().fold((0, 0), |(l, u), &(_, c)| {
            let (cl, cu) = self.child_bounds(c);
            (l + cl, u + cu)
        })
    }

    /// Sum of child brackets for an expanded cut.
    pub fn bound_for_cut(&self, id: NodeId, c: CutLocation) -> Result<(u64, u64)> {
        let b = self.nodes[id].branch(c).ok_or(Error::UnavailableCut(c))?;
        Ok(self.branch_bounds(b))
    }

    /// Bracket per cut at `id`, indexed `[x][y]`; `None` where no cut was
    /// expanded.
    pub fn cut_matrix(&self, id: NodeId) -> Vec<Vec<Option<CutBound>>> {
        let a = self.nodes[id].position.shape.a;
        let mut out = vec![vec![None; a]; a];
        for b in &self.nodes[id].cuts {
            let (lower, upper) = self.branch_bounds(b);
            out[b.cut.x][b.cut.y] = Some(CutBound {
                lower,
                upper,
                pruned: b.pruned,
                children: b
                    .children
                    .iter()
                    .map(|&(z, c)| {
                        let (l, u) = self.child_bounds(c);
                        (z, l, u)
                    })
                    .collect(),
            });
        }
        out
    }

    /// Recomputes every bracket, children first. Brackets only tighten.
    pub fn propagate_bounds(&mut self) -> Result<(u64, u64)> {
        let mut order: Vec<NodeId> = (0..self.nodes.len()).filter(|&i| self.nodes[i].expanded).collect();
        order.sort_by_key(|&i| self.nodes[i].ones);
        for id in order {
            let mut best: Option<(u64, u64)> = None;
            for b in self.nodes[id].cuts.iter().filter(|b| !b.pruned) {
                let (l, u) = self.branch_bounds(b);
                best = Some(best.map_or((l, u), |(bl, bu)| (bl.min(l), bu.min(u))));
            }
            let (l, u) = best.ok_or_else(|| Error::Internal("every cut pruned at a node".into()))?;
            let node = &mut self.nodes[id];
            node.lower = node.lower.max(l + 1);
            node.upper = node.upper.min(u + 1);
            if node.lower > node.upper {
                return Err(Error::Internal(format!(
                    "crossed bracket [{}, {}] at node {id}",
                    node.lower, node.upper
                )));
            }
        }
        let r = &self.nodes[self.root];
        Ok((r.lower, r.upper))
    }

    /// Prunes cuts whose lower bound exceeds the best upper bound at their
    /// node; returns how many were newly pruned. With `split_root` the root
    /// keeps all its cuts.
    pub fn prune(&mut self) -> usize {
        let mut count = 0;
        for id in 0..self.nodes.len() {
            if !self.nodes[id].expanded || (self.split_root && id == self.root) {
                continue;
            }
            let bounds: Vec<(u64, u64)> = self.nodes[id].cuts.iter().map(|b| self.branch_bounds(b)).collect();
            let best_upper = self.nodes[id]
                .cuts
                .iter()
                .zip(&bounds)
                .filter(|(b, _)| !b.pruned)
                .map(|(_, &(_, u))| u)
                .min();
            let Some(best_upper) = best_upper else { continue };
            for (b, &(l, _)) in self.nodes[id].cuts.iter_mut().zip(&bounds) {
                if !b.pruned && l > best_upper {
                    b.pruned = true;
                    count += 1;
                }
            }
        }
        count
    }

    fn root_children(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes[self.root]
            .cuts
            .iter()
            .flat_map(|b| b.children.iter().filter_map(|&(_, c)| c))
    }

    /// Whether the requested values are exact: the root bracket, and with
    /// `split_root` also every first-level child.
    pub fn finished(&self) -> bool {
        let root = &self.nodes[self.root];
        if !self.split_root {
            return root.resolved();
        }
        root.expanded && self.root_children().all(|c| self.nodes[c].resolved())
    }

    /// Unexpanded, unresolved nodes reachable through live cuts, at the
    /// smallest depth where any occur.
    pub fn frontier(&self) -> Vec<NodeId> {
        let mut depth = vec![usize::MAX; self.nodes.len()];
        let mut queue = VecDeque::from([self.root]);
        depth[self.root] = 0;
        let mut found: Vec<NodeId> = Vec::new();
        let mut found_depth = usize::MAX;
        while let Some(id) = queue.pop_front() {
            let d = depth[id];
            if d > found_depth {
                break;
            }
            let node = &self.nodes[id];
            let live = !node.resolved() || (self.split_root && id == self.root);
            if !live {
                continue;
            }
            if !node.expanded {
                found.push(id);
                found_depth = d;
                continue;
            }
            for b in node.cuts.iter().filter(|b| !b.pruned || (self.split_root && id == self.root)) {
                for &(_, c) in &b.children {
                    if let Some(c) = c {
                        if depth[c] == usize::MAX {
                            depth[c] = d + 1;
                            queue.push_back(c);
                        }
                    }
                }
            }
        }
        found
    }

    /// Expands every available cut at each node of `ids`, seeding new
    /// nodes with policy proofs.
    pub fn expand(&mut self, ids: &[NodeId], policy: &dyn CutPolicy, exec: Execution, node_limit: usize) -> Result<usize> {
        let cfg = self.cfg;
        let expansions = par::map(exec, ids, |&id| {
            let p = &self.nodes[id].position;
            p.available_cuts()
                .into_iter()
                .map(|c| Ok((c, p.cut_values(c), make_cut(p, c, &cfg)?)))
                .collect::<Result<Vec<_>>>()
        });

        let mut fresh: Vec<(NodeId, Position)> = Vec::new();
        let mut pending: HashMap<Position, NodeId> = HashMap::new();
        let mut next_id = self.nodes.len();
        let mut plans = Vec::with_capacity(ids.len());
        for (&id, cuts) in ids.iter().zip(expansions) {
            let mut branches = Vec::new();
            for (cut, values, children) in cuts? {
                let mut kids = Vec::with_capacity(children.len());
                for ((child, status), z) in children.into_iter().zip(values) {
                    let slot = if status != PositionStatus::Active {
                        None
                    } else if let Some(existing) = self.find(&child) {
                        Some(existing)
                    } else if let Some(&queued) = pending.get(&child) {
                        Some(queued)
                    } else {
                        pending.insert(child.clone(), next_id);
                        fresh.push((next_id, child));
                        next_id += 1;
                        Some(next_id - 1)
                    };
                    kids.push((z, slot));
                }
                branches.push(CutBranch {
                    cut,
                    children: kids,
                    pruned: false,
                });
            }
            plans.push((id, branches));
        }
        if next_id > node_limit {
            let r = &self.nodes[self.root];
            return Err(Error::Partial {
                lower: r.lower,
                upper: r.upper,
                nodes: next_id,
            });
        }

        let uppers = par::map(exec, &fresh, |(id, p)| {
            let opts = ProofOptions {
                exec: Execution::Sequential,
                root_stream: splitmix64(*id as u64),
                ..ProofOptions::default()
            };
            run_proof_with(p, policy, &cfg, opts, &mut rand::rngs::mock::StepRng::new(0, 1)).map(|r| r.passive_nodes)
        });
        let added = fresh.len();
        for ((id, p), upper) in fresh.into_iter().zip(uppers) {
            let got = self.insert(p, upper?);
            debug_assert_eq!(got, id);
        }
        for (id, branches) in plans {
            let node = &mut self.nodes[id];
            node.cuts = branches;
            node.expanded = true;
        }
        Ok(added)
    }
}

/// Result of [`minimize`].
#[derive(Debug, Clone)]
pub struct Minimum {
    /// Minimal number of passive nodes in a proof from the root.
    pub nu_min: u64,
    pub tree: BoundTree,
    pub trace: Vec<TraceRow>,
}

impl Minimum {
    /// Brackets of the root cuts, `[x][y]`. With `split_root` every entry
    /// is exact; otherwise only unpruned entries are guaranteed exact at
    /// the minimum.
    pub fn root_matrix(&self) -> Vec<Vec<Option<CutBound>>> {
        self.tree.cut_matrix(self.tree.root)
    }

    /// Exact node counts of the root cuts where known, `[x][y]`.
    pub fn root_counts(&self) -> Vec<Vec<Option<u64>>> {
        self.root_matrix()
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.and_then(|c| c.exact())).collect())
            .collect()
    }
}

/// Minimal proof size from `root` (already processed) under `cfg`.
pub fn minimize(root: &Position, cfg: &FilterConfig, upper_policy: &dyn CutPolicy, opts: MinimizeOptions) -> Result<Minimum> {
    let cfg = *cfg;
    if root.filter(&cfg) != PositionStatus::Active {
        let mut tree = BoundTree::new(root, cfg, opts.split_root, 0);
        tree.nodes[0].lower = 0;
        tree.nodes[0].upper = 0;
        return Ok(Minimum {
            nu_min: 0,
            tree,
            trace: Vec::new(),
        });
    }
    let seed = run_proof_with(
        root,
        upper_policy,
        &cfg,
        ProofOptions {
            exec: opts.exec,
            ..ProofOptions::default()
        },
        &mut rand::rngs::mock::StepRng::new(0, 1),
    )?;
    let mut tree = BoundTree::new(root, cfg, opts.split_root, seed.passive_nodes);
    let mut trace = Vec::new();
    while !tree.finished() {
        let frontier = tree.frontier();
        if frontier.is_empty() {
            return Err(Error::Internal("open bracket with nothing left to expand".into()));
        }
        tree.expand(&frontier, upper_policy, opts.exec, opts.node_limit)?;
        let (root_lower, root_upper) = tree.propagate_bounds()?;
        let pruned_cuts = tree.prune();
        trace.push(TraceRow {
            iteration: trace.len(),
            expanded: frontier.len(),
            nodes: tree.len(),
            pruned_cuts,
            root_lower,
            root_upper,
        });
    }
    let (lower, upper) = tree.propagate_bounds()?;
    if lower != upper {
        return Err(Error::Internal(format!("root bracket [{lower}, {upper}] left open")));
    }
    Ok(Minimum {
        nu_min: lower,
        tree,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{enumerate_sigma, initial_position};
    use crate::position::Shape;
    use crate::prooftree::{benchmark_policy, RandomPolicy};

    /// Exhaustive minimum over all cut choices, memoized on positions.
    fn brute(p: &Position, cfg: &FilterConfig, memo: &mut HashMap<Position, u64>) -> u64 {
        if p.filter(cfg) != PositionStatus::Active {
            return 0;
        }
        if let Some(&v) = memo.get(p) {
            return v;
        }
        let best = p
            .available_cuts()
            .into_iter()
            .map(|c| {
                make_cut(p, c, cfg)
                    .unwrap()
                    .into_iter()
                    .map(|(q, _)| brute(&q, cfg, memo))
                    .sum::<u64>()
            })
            .min()
            .unwrap();
        memo.insert(p.clone(), best + 1);
        best + 1
    }

    fn roots(a: usize, b: usize, cfg: FilterConfig) -> Vec<(Position, FilterConfig)> {
        enumerate_sigma(Shape::new(a, b).unwrap())
            .unwrap()
            .iter()
            .map(|inst| initial_position(inst, cfg).unwrap())
            .collect()
    }

    #[test]
    fn matches_brute_force_22() {
        for base in [FilterConfig::all_on(), FilterConfig::all_off()] {
            for (root, cfg) in roots(2, 2, base) {
                let want = brute(&root, &cfg, &mut HashMap::new());
                for split_root in [false, true] {
                    let opts = MinimizeOptions {
                        split_root,
                        ..MinimizeOptions::default()
                    };
                    assert_eq!(minimize(&root, &cfg, &benchmark_policy(), opts).unwrap().nu_min, want);
                }
            }
        }
    }

    #[test]
    fn sigma8_and_trace_32() {
        let (root, cfg) = roots(3, 2, FilterConfig::all_on()).swap_remove(8);
        let m = minimize(&root, &cfg, &benchmark_policy(), MinimizeOptions::default()).unwrap();
        assert_eq!(m.nu_min, 3);
        for w in m.trace.windows(2) {
            assert!(w[1].root_lower >= w[0].root_lower);
            assert!(w[1].root_upper <= w[0].root_upper);
        }
        let split = minimize(
            &root,
            &cfg,
            &benchmark_policy(),
            MinimizeOptions {
                split_root: true,
                ..MinimizeOptions::default()
            },
        )
        .unwrap();
        let counts: Vec<Vec<u64>> = split
            .root_counts()
            .into_iter()
            .map(|r| r.into_iter().map(Option::unwrap).collect())
            .collect();
        assert_eq!(counts, vec![vec![2, 3, 3], vec![3, 2, 3], vec![3, 3, 2]]);
    }

    #[test]
    fn upper_policy_does_not_change_result() {
        for (sigma, (root, cfg)) in roots(3, 2, FilterConfig::all_on()).into_iter().enumerate().skip(4) {
            let a = minimize(&root, &cfg, &benchmark_policy(), MinimizeOptions::default()).unwrap();
            let b = minimize(&root, &cfg, &RandomPolicy { seed: 7 }, MinimizeOptions::default()).unwrap();
            assert_eq!(a.nu_min, b.nu_min, "sigma {sigma}");
        }
    }

    #[test]
    fn bound_for_cut_contract() {
        let (root, cfg) = roots(3, 2, FilterConfig::all_on()).swap_remove(6);
        let m = minimize(&root, &cfg, &benchmark_policy(), MinimizeOptions::default()).unwrap();
        let r = m.tree.root;
        for b in &m.tree.node(r).cuts {
            let (l, u) = m.tree.bound_for_cut(r, b.cut).unwrap();
            assert!(l <= u);
        }
        let missing = CutLocation::new(9, 9);
        assert!(m.tree.bound_for_cut(r, missing).is_err());
    }

    #[test]
    fn node_limit_reports_bracket() {
        let (root, cfg) = roots(3, 2, FilterConfig::all_on()).swap_remove(3);
        let opts = MinimizeOptions {
            node_limit: 5,
            ..MinimizeOptions::default()
        };
        match minimize(&root, &cfg, &benchmark_policy(), opts) {
            Err(Error::Partial { lower, upper, .. }) => assert!(lower <= 37 && 37 <= upper),
            other => panic!("expected partial result, got {other:?}"),
        }
    }

    #[test]
    fn terminal_root() {
        let s = Shape::new(2, 2).unwrap();
        let mut p = Position::full(s);
        p.m.set_col(0, 0);
        let m = minimize(&p, &FilterConfig::all_off(), &benchmark_policy(), MinimizeOptions::default()).unwrap();
        assert_eq!(m.nu_min, 0);
    }
}
