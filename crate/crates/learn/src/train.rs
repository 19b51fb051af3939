//! Sample generation, training segments and the training cycle.
//!
//! One proof index of a cycle runs a full proof per metric σ with the
//! current `N₂` policy and records its size, then generates samples from
//! the training σ, then runs the configured training segments, each one
//! pass of the global schedule followed by one of the local schedule.

use std::collections::{HashSet, VecDeque};
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use nilprove_core::par::{self, Execution};
use nilprove_core::prooftree::{randomized_prefix_policy, Dropout, DropoutMode};
use nilprove_core::{enumerate_sigma, initial_position, run_proof, FilterConfig, Position, Shape};

use crate::model::{Adam, Example, Head, ValueModel};
use crate::pool::{draw, Method, Provenance, Sample, SamplePool};
use crate::targets::{local_targets, policy_from_n2, rank_modify, target_global_onestep, target_global_pruned};
use crate::{Error, Result};

/// `minibatches` draws of `size` samples, each followed by `steps`
/// descent steps on that minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub minibatches: usize,
    pub size: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule(pub Vec<Stage>);

impl Schedule {
    fn from_triples(t: &[(usize, usize, usize)]) -> Self {
        Schedule(
            t.iter()
                .map(|&(minibatches, size, steps)| Stage { minibatches, size, steps })
                .collect(),
        )
    }

    pub fn global_default() -> Self {
        Self::from_triples(&[(2, 20, 20), (1, 30, 30), (2, 40, 10), (5, 60, 10), (3, 20, 8), (3, 40, 5), (5, 30, 3)])
    }

    pub fn local_default() -> Self {
        Self::from_triples(&[(3, 20, 20), (1, 30, 15), (3, 60, 4), (3, 40, 10), (3, 20, 3), (3, 40, 2), (3, 30, 1)])
    }

    pub fn minibatches(&self) -> usize {
        self.0.iter().map(|s| s.minibatches).sum()
    }

    pub fn samples(&self) -> usize {
        self.0.iter().map(|s| s.minibatches * s.size).sum()
    }

    pub fn steps(&self) -> usize {
        self.0.iter().map(|s| s.minibatches * s.steps).sum()
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub width: usize,
    /// Weight of a done or impossible child in targets.
    pub w_leaf: f64,
    /// Frontier limit of pruned sample proofs.
    pub dropout: usize,
    pub learning_rate: f64,
    /// Initial input-noise scale; decays linearly to 0 over the first
    /// third of the cycle.
    pub input_noise: f64,
    /// Relative weight perturbation at each segment start in the first
    /// third of the cycle.
    pub perturbation: f64,
    pub pool_capacity: usize,
    pub segments_per_proof: usize,
    pub proofs: usize,
    pub rank_modified: bool,
    /// Fraction of dropped frontier positions added as extra sample roots.
    pub explore_fraction: f64,
    /// Exploration proofs cut at random above a depth drawn from
    /// `0..=prefix_depth`.
    pub prefix_depth: usize,
    pub filters: FilterConfig,
    pub global_schedule: Schedule,
    pub local_schedule: Schedule,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            width: 4,
            w_leaf: 0.01,
            dropout: 16,
            learning_rate: 1e-3,
            input_noise: 0.05,
            perturbation: 1e-3,
            pool_capacity: 20_000,
            segments_per_proof: 1,
            proofs: 100,
            rank_modified: true,
            explore_fraction: 0.25,
            prefix_depth: 2,
            filters: FilterConfig::all_on(),
            global_schedule: Schedule::global_default(),
            local_schedule: Schedule::local_default(),
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.width == 0 {
            return bad("width must be at least 1");
        }
        if !(self.w_leaf > 0.0 && self.w_leaf.is_finite()) {
            return bad("w_leaf must be positive");
        }
        if self.dropout == 0 {
            return bad("dropout must be at least 1");
        }
        if self.pool_capacity == 0 {
            return bad("pool capacity must be positive");
        }
        if !(0.0..=1.0).contains(&self.explore_fraction) {
            return bad("explore fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRecord {
    pub wall_step: usize,
    pub network: &'static str,
    pub minibatch_size: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeCountRecord {
    pub proof_index: usize,
    pub sigma: usize,
    pub passive_nodes: u64,
    pub done: u64,
    pub impossible: u64,
    pub seconds: f64,
}

/// Runs one schedule on `model`. Returns `false` and does nothing when the
/// pool is empty.
#[allow(clippy::too_many_arguments)]
pub fn train_segment<R: Rng + ?Sized>(
    model: &mut ValueModel,
    opt: &mut Adam,
    samples: &VecDeque<Sample>,
    schedule: &Schedule,
    noise: f64,
    exec: Execution,
    rng: &mut R,
    wall_step: &mut usize,
    log: &mut Vec<LossRecord>,
) -> bool {
    if samples.is_empty() {
        warn!("empty {} pool, segment skipped", model.head.name());
        return false;
    }
    for stage in &schedule.0 {
        for _ in 0..stage.minibatches {
            let batch: Vec<Example<'_>> = draw(samples, stage.size, rng).into_iter().map(Sample::example).collect();
            for _ in 0..stage.steps {
                let (loss, grads) = model.loss_and_grad(&batch, noise, rng.gen(), exec);
                opt.step(model, &grads);
                log.push(LossRecord {
                    wall_step: *wall_step,
                    network: model.head.name(),
                    minibatch_size: stage.size,
                    loss,
                });
                *wall_step += 1;
            }
        }
    }
    true
}

struct Root {
    sigma: usize,
    position: Position,
    cfg: FilterConfig,
}

fn roots(shape: Shape, sigmas: &[usize], filters: FilterConfig) -> Result<Vec<Root>> {
    let list = enumerate_sigma(shape)?;
    sigmas
        .iter()
        .map(|&sigma| {
            let inst = list
                .get(sigma)
                .ok_or_else(|| Error::Config(format!("sigma {sigma} out of range 0..{}", list.len())))?;
            let (position, cfg) = initial_position(inst, filters)?;
            Ok(Root { sigma, position, cfg })
        })
        .collect()
}

/// Models, optimizers, pool and logs of one training run.
pub struct Trainer {
    pub shape: Shape,
    pub cfg: TrainConfig,
    pub global: ValueModel,
    pub local: ValueModel,
    opt_global: Adam,
    opt_local: Adam,
    pub pool: SamplePool,
    pub losses: Vec<LossRecord>,
    pub node_counts: Vec<NodeCountRecord>,
    train_roots: Vec<Root>,
    metric_roots: Vec<Root>,
    rng: ChaCha8Rng,
    wall_step: usize,
    proof_index: usize,
}

impl Trainer {
    /// Samples come only from `train_sigmas`; metric proofs run only on
    /// `metric_sigmas`.
    pub fn new(shape: Shape, train_sigmas: &[usize], metric_sigmas: &[usize], cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train_sigmas.is_empty() {
            return Err(Error::Config("no training instances".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let global = ValueModel::new(shape, cfg.width, Head::Global, &mut rng);
        let local = ValueModel::new(shape, cfg.width, Head::Local, &mut rng);
        Ok(Trainer {
            shape,
            global,
            local,
            opt_global: Adam::new(cfg.learning_rate),
            opt_local: Adam::new(cfg.learning_rate),
            pool: SamplePool::new(cfg.pool_capacity),
            losses: Vec::new(),
            node_counts: Vec::new(),
            train_roots: roots(shape, train_sigmas, cfg.filters)?,
            metric_roots: roots(shape, metric_sigmas, cfg.filters)?,
            rng,
            wall_step: 0,
            proof_index: 0,
            cfg,
        })
    }

    /// Continues from saved networks.
    pub fn with_models(mut self, global: ValueModel, local: ValueModel) -> Result<Self> {
        if global.shape != self.shape || local.shape != self.shape {
            return Err(Error::Config("checkpoint shape differs from the run".into()));
        }
        self.cfg.width = global.width;
        self.global = global;
        self.local = local;
        self.opt_global = Adam::new(self.cfg.learning_rate);
        self.opt_local = Adam::new(self.cfg.learning_rate);
        Ok(self)
    }

    pub fn proof_index(&self) -> usize {
        self.proof_index
    }

    fn early(&self) -> Option<f64> {
        let third = self.cfg.proofs.div_ceil(3);
        (self.proof_index < third).then(|| 1.0 - self.proof_index as f64 / third as f64)
    }

    pub fn noise_scale(&self) -> f64 {
        self.early().map_or(0.0, |f| self.cfg.input_noise * f)
    }

    /// Full proofs with the current `N₂` policy on every metric σ.
    pub fn metric_proofs(&self) -> Result<Vec<NodeCountRecord>> {
        let policy = policy_from_n2(&self.local);
        self.metric_roots
            .iter()
            .map(|r| {
                let t = Instant::now();
                let proof = run_proof(&r.position, &policy, &r.cfg)?;
                Ok(NodeCountRecord {
                    proof_index: self.proof_index,
                    sigma: r.sigma,
                    passive_nodes: proof.passive_nodes,
                    done: proof.done_leaves,
                    impossible: proof.impossible_leaves,
                    seconds: t.elapsed().as_secs_f64(),
                })
            })
            .collect()
    }

    /// Fills the pool from the training σ.
    pub fn generate_samples(&mut self) -> Result<usize> {
        let before = self.pool.global().len() + self.pool.local().len();
        let policy = policy_from_n2(&self.local);
        let mut added = 0;
        for k in 0..self.train_roots.len() {
            let root = &self.train_roots[k];
            let prov = |method| Provenance {
                method,
                sigma: root.sigma,
                proof_index: self.proof_index,
            };
            let mut positions: Vec<Position> = Vec::new();
            let mut seen: HashSet<Position> = HashSet::new();
            let mut global_samples = Vec::new();

            let switch = self.rng.gen_range(0..=self.cfg.prefix_depth);
            let explore = randomized_prefix_policy(&policy, switch, &mut self.rng);
            let runs: [(&dyn nilprove_core::CutPolicy, DropoutMode); 3] = [
                (&policy, DropoutMode::Stochastic),
                (&policy, DropoutMode::Adaptive),
                (&explore, DropoutMode::Stochastic),
            ];
            for (pol, mode) in runs {
                let d = Dropout {
                    limit: self.cfg.dropout,
                    mode,
                };
                let (proof, samples) =
                    target_global_pruned(&self.global, pol, &root.position, &root.cfg, d, &mut self.rng)?;
                global_samples.extend(samples);
                for v in proof.nodes.iter().filter(|v| v.is_passive() && v.sample_eligible) {
                    if seen.insert(v.position.clone()) {
                        positions.push(v.position.clone());
                    }
                }
                let mut dropped: Vec<usize> = proof.dropped_leaves().collect();
                dropped.shuffle(&mut self.rng);
                let take = (dropped.len() as f64 * self.cfg.explore_fraction).ceil() as usize;
                for &i in dropped.iter().take(take) {
                    let p = &proof.nodes[i].position;
                    if seen.insert(p.clone()) {
                        positions.push(p.clone());
                    }
                }
            }

            let (global, local, cfg, w_leaf, rank) =
                (&self.global, &self.local, root.cfg, self.cfg.w_leaf, self.cfg.rank_modified);
            let computed = par::map(self.cfg.exec, &positions, |p| -> Result<_> {
                let onestep = target_global_onestep(global, local, p, &cfg, w_leaf)?;
                let raw = local_targets(global, p, &cfg, w_leaf)?;
                Ok((onestep, if rank { rank_modify(&raw) } else { raw }))
            });

            for (p, t) in global_samples {
                added += usize::from(self.pool.push_global(p, t, prov(Method::Pruned)));
            }
            for (p, c) in positions.into_iter().zip(computed) {
                let (onestep, cuts) = c?;
                added += usize::from(self.pool.push_global(p.clone(), onestep, prov(Method::OneStep)));
                for (cut, t) in cuts {
                    added += usize::from(self.pool.push_local(p.clone(), cut, t, prov(Method::Local)));
                }
            }
        }
        info!(
            "proof {}: {} samples added, pool {} -> {}",
            self.proof_index,
            added,
            before,
            self.pool.global().len() + self.pool.local().len()
        );
        Ok(added)
    }

    /// Training segments for the current proof index.
    pub fn train(&mut self) {
        let noise = self.noise_scale();
        let perturb = self.early().map_or(0.0, |_| self.cfg.perturbation);
        for _ in 0..self.cfg.segments_per_proof {
            self.global.perturb(perturb, &mut self.rng);
            train_segment(
                &mut self.global,
                &mut self.opt_global,
                self.pool.global(),
                &self.cfg.global_schedule,
                noise,
                self.cfg.exec,
                &mut self.rng,
                &mut self.wall_step,
                &mut self.losses,
            );
            self.local.perturb(perturb, &mut self.rng);
            train_segment(
                &mut self.local,
                &mut self.opt_local,
                self.pool.local(),
                &self.cfg.local_schedule,
                noise,
                self.cfg.exec,
                &mut self.rng,
                &mut self.wall_step,
                &mut self.losses,
            );
        }
    }

    /// One proof index: metric proofs, samples, training.
    pub fn step(&mut self) -> Result<Vec<NodeCountRecord>> {
        let counts = self.metric_proofs()?;
        self.node_counts.extend(counts.iter().cloned());
        self.generate_samples()?;
        self.train();
        self.proof_index += 1;
        Ok(counts)
    }
}

#[derive(Debug, Clone)]
pub struct CycleReport {
    pub node_counts: Vec<NodeCountRecord>,
    pub losses: Vec<LossRecord>,
    pub global: ValueModel,
    pub local: ValueModel,
}

fn run(mut t: Trainer) -> Result<CycleReport> {
    for _ in 0..t.cfg.proofs {
        for r in t.step()? {
            info!("proof {} sigma {}: {} passive nodes", r.proof_index, r.sigma, r.passive_nodes);
        }
    }
    Ok(CycleReport {
        node_counts: t.node_counts,
        losses: t.losses,
        global: t.global,
        local: t.local,
    })
}

pub fn training_cycle(shape: Shape, sigmas: &[usize], cfg: TrainConfig) -> Result<CycleReport> {
    run(Trainer::new(shape, sigmas, sigmas, cfg)?)
}

/// Trains on `train_sigmas` and measures only on `held_out`.
pub fn generalization_run(shape: Shape, train_sigmas: &[usize], held_out: usize, cfg: TrainConfig) -> Result<CycleReport> {
    if train_sigmas.contains(&held_out) {
        return Err(Error::Config(format!("held-out sigma {held_out} is among the training instances")));
    }
    run(Trainer::new(shape, train_sigmas, &[held_out], cfg)?)
}
