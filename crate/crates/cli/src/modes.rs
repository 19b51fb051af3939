//! One function per run mode.

use std::io::Write;
use std::time::Instant;

use log::warn;
use serde::Serialize;
use serde_json::json;

use nilprove_core::instances::enumerate_sigma_with;
use nilprove_core::prooftree::{run_proof_with, Dropout, DropoutMode, ProofOptions};
use nilprove_core::{
    benchmark_policy, initial_position, minimize as min_search, CutBound, CutPolicy, Execution, FilterConfig, MinimizeOptions, RandomPolicy,
    SigmaInstance,
};
use nilprove_learn::checkpoint;
use nilprove_learn::{policy_from_n2, TrainConfig, Trainer, ValueModel};

use crate::config::{filters_name, Mode, PolicyKind, RunConfig, SigmaSelection};
use crate::verify::{verify_instance, VerifyOptions};
use crate::{Artifacts, CliError};

fn instances(cfg: &RunConfig) -> Result<Vec<SigmaInstance>, CliError> {
    Ok(enumerate_sigma_with(cfg.shape, cfg.max_enum, Execution::Parallel)?)
}

/// The selected instances, in selection order.
pub fn select(cfg: &RunConfig, list: &[SigmaInstance]) -> Result<Vec<SigmaInstance>, CliError> {
    match &cfg.sigma {
        SigmaSelection::All => Ok(list.to_vec()),
        SigmaSelection::Suggested => Ok(list.iter().filter(|i| i.suggested).cloned().collect()),
        SigmaSelection::List(v) => v
            .iter()
            .map(|&s| {
                list.get(s).cloned().ok_or_else(|| CliError::Usage {
                    field: "sigma".into(),
                    msg: format!("{s} is out of range; ({},{}) has {} instances", cfg.shape.a, cfg.shape.b, list.len()),
                })
            })
            .collect(),
    }
}

fn load_models(cfg: &RunConfig) -> Result<Option<(ValueModel, ValueModel)>, CliError> {
    let Some(path) = &cfg.checkpoint else { return Ok(None) };
    let (g, l) = checkpoint::load(path)?;
    if g.shape != cfg.shape {
        return Err(CliError::Usage {
            field: "checkpoint".into(),
            msg: format!("trained for ({},{}), run is ({},{})", g.shape.a, g.shape.b, cfg.shape.a, cfg.shape.b),
        });
    }
    Ok(Some((g, l)))
}

#[derive(Serialize)]
struct EnumRow {
    sigma: usize,
    keys: Vec<u32>,
    rows: Vec<String>,
    ones: usize,
    suggested: bool,
}

pub fn enumerate(cfg: &RunConfig, art: &mut Artifacts, out: &mut dyn Write) -> Result<(), CliError> {
    let list = instances(cfg)?;
    let rows: Vec<EnumRow> = select(cfg, &list)?
        .into_iter()
        .map(|i| EnumRow {
            rows: i.row_strings(),
            sigma: i.sigma,
            keys: i.keys,
            ones: i.ones,
            suggested: i.suggested,
        })
        .collect();
    if cfg.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?;
    } else {
        for r in &rows {
            let keys: Vec<String> = r.keys.iter().map(u32::to_string).collect();
            writeln!(
                out,
                "{:>4}  keys ({})  {}  ones {}  {}",
                r.sigma,
                keys.join(","),
                r.rows.join(" "),
                r.ones,
                if r.suggested { "suggested" } else { "-" }
            )?;
        }
        writeln!(out, "{} instances", rows.len())?;
    }
    art.json("", &rows)?;
    Ok(())
}

/// `bench` always uses the benchmark policy; `prove` takes `--policy`.
pub fn prove(cfg: &RunConfig, art: &mut Artifacts, out: &mut dyn Write) -> Result<(), CliError> {
    let list = instances(cfg)?;
    let models = load_models(cfg)?;
    let kind = if cfg.mode == Mode::Bench { PolicyKind::Benchmark } else { cfg.policy };
    let learned;
    let policy: Box<dyn CutPolicy> = match kind {
        PolicyKind::Benchmark => Box::new(benchmark_policy()),
        PolicyKind::Random => Box::new(RandomPolicy { seed: cfg.seed }),
        PolicyKind::Learned => {
            learned = models.expect("validated: learned needs a checkpoint").1;
            Box::new(policy_from_n2(&learned))
        }
    };
    let filters = filters_name(&cfg.filters);
    let mut summaries = Vec::new();
    let mut proofs = Vec::new();
    let mut rng = <rand::rngs::StdRng as rand::SeedableRng>::seed_from_u64(cfg.seed);
    for inst in select(cfg, &list)? {
        let (root, icfg) = initial_position(&inst, cfg.filters)?;
        let opts = ProofOptions {
            dropout: (cfg.dropout > 0).then_some(Dropout {
                limit: cfg.dropout,
                mode: DropoutMode::Stochastic,
            }),
            root_stream: cfg.seed,
            ..ProofOptions::default()
        };
        let t = Instant::now();
        let proof = run_proof_with(&root, policy.as_ref(), &icfg, opts, &mut rng)?;
        let secs = t.elapsed().as_secs_f64();
        let row = proof.summary(inst.sigma, &policy.name(), &filters, secs);
        writeln!(
            out,
            "sigma {:>3}: {} passive nodes, {} done, {} impossible ({:.3} s)",
            row.sigma, row.passive_nodes, row.done, row.impossible, secs
        )?;
        summaries.push(row);
        if cfg.mode == Mode::Prove {
            proofs.push(json!({ "sigma": inst.sigma, "policy": policy.name(), "proof": proof.to_json() }));
        }
    }
    let total: u64 = summaries.iter().map(|r| r.passive_nodes).sum();
    writeln!(out, "total {total} passive nodes over {} instances", summaries.len())?;
    art.csv("", &summaries)?;
    if cfg.mode == Mode::Prove {
        art.json("proofs", &proofs)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceCsvRow {
    sigma: usize,
    iteration: usize,
    expanded: usize,
    nodes: usize,
    pruned_cuts: usize,
    root_lower: u64,
    root_upper: u64,
}

fn matrix_text(m: &[Vec<Option<CutBound>>]) -> Vec<String> {
    m.iter()
        .map(|row| {
            row.iter()
                .map(|c| match c {
                    None => format!("{:>7}", "."),
                    Some(c) if c.lower == c.upper => format!("{:>7}", c.lower),
                    Some(c) => format!("{:>7}", format!("{}-{}", c.lower, c.upper)),
                })
                .collect::<String>()
        })
        .collect()
}

pub fn minimize(cfg: &RunConfig, art: &mut Artifacts, out: &mut dyn Write) -> Result<(), CliError> {
    let list = instances(cfg)?;
    let models = load_models(cfg)?;
    let learned = models.map(|m| m.1);
    let upper: Box<dyn CutPolicy> = match &learned {
        Some(l) => Box::new(policy_from_n2(l)),
        None => Box::new(benchmark_policy()),
    };
    let opts = MinimizeOptions {
        split_root: cfg.split_root,
        node_limit: cfg.node_limit,
        ..MinimizeOptions::default()
    };
    let mut table = Vec::new();
    let mut trace = Vec::new();
    let mut total = 0;
    for inst in select(cfg, &list)? {
        let (root, icfg) = initial_position(&inst, cfg.filters)?;
        let t = Instant::now();
        let min = min_search(&root, &icfg, upper.as_ref(), opts)?;
        let matrix = min.root_matrix();
        writeln!(
            out,
            "sigma {:>3}: nu_min {} ({} nodes, {} iterations, {:.2} s)",
            inst.sigma,
            min.nu_min,
            min.tree.len(),
            min.trace.len(),
            t.elapsed().as_secs_f64()
        )?;
        for line in matrix_text(&matrix) {
            writeln!(out, "    {line}")?;
        }
        total += min.nu_min;
        trace.extend(min.trace.iter().map(|r| TraceCsvRow {
            sigma: inst.sigma,
            iteration: r.iteration,
            expanded: r.expanded,
            nodes: r.nodes,
            pruned_cuts: r.pruned_cuts,
            root_lower: r.root_lower,
            root_upper: r.root_upper,
        }));
        table.push(json!({ "sigma": inst.sigma, "nu_min": min.nu_min, "root_matrix": matrix }));
    }
    writeln!(out, "total {total}")?;
    art.json(
        "",
        &json!({
            "a": cfg.shape.a,
            "b": cfg.shape.b,
            "filters": filters_name(&cfg.filters),
            "split_root": cfg.split_root,
            "instances": table,
            "total": total,
        }),
    )?;
    art.csv("trace", &trace)?;
    Ok(())
}

/// `train` measures on the training instances; `generalize` trains on the
/// selection without the held-out σ and measures only on that one.
pub fn train(cfg: &RunConfig, art: &mut Artifacts, out: &mut dyn Write) -> Result<(), CliError> {
    let list = instances(cfg)?;
    let selected: Vec<usize> = select(cfg, &list)?.iter().map(|i| i.sigma).collect();
    let (train_sigmas, metric_sigmas) = match (cfg.mode, cfg.held_out) {
        (Mode::Generalize, Some(h)) => {
            if h >= list.len() {
                return Err(CliError::Usage {
                    field: "held-out".into(),
                    msg: format!("{h} is out of range 0..{}", list.len()),
                });
            }
            (selected.into_iter().filter(|&s| s != h).collect::<Vec<_>>(), vec![h])
        }
        _ => (selected.clone(), selected),
    };
    let tcfg = TrainConfig {
        width: cfg.width,
        w_leaf: cfg.w_leaf,
        dropout: if cfg.dropout == 0 { TrainConfig::default().dropout } else { cfg.dropout },
        learning_rate: cfg.learning_rate,
        proofs: cfg.cycles,
        filters: cfg.filters,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg.shape, &train_sigmas, &metric_sigmas, tcfg)?;
    if let Some((g, l)) = load_models(cfg)? {
        trainer = trainer.with_models(g, l)?;
    }
    for k in 0..cfg.cycles {
        let counts = match trainer.step() {
            Ok(c) => c,
            Err(e) => {
                warn!("proof {k} failed: {e}");
                continue;
            }
        };
        let line: Vec<String> = counts.iter().map(|r| format!("{}:{}", r.sigma, r.passive_nodes)).collect();
        writeln!(out, "proof {k:>4}  {}", line.join(" "))?;
        if cfg.checkpoint_every > 0 && (k + 1) % cfg.checkpoint_every == 0 && k + 1 < cfg.cycles {
            let path = art.path(&format!("proof{:04}", k + 1), "ckpt");
            checkpoint::save(&path, &trainer.global, &trainer.local)?;
            art.written.push(path);
        }
    }
    art.csv("nodes", &trainer.node_counts)?;
    art.csv("loss", &trainer.losses)?;
    let path = art.path("final", "ckpt");
    checkpoint::save(&path, &trainer.global, &trainer.local)?;
    art.written.push(path);
    Ok(())
}

#[derive(Serialize)]
struct VerifyRow {
    sigma: usize,
    done: usize,
    structures: Option<usize>,
    ok: bool,
}

pub fn verify(cfg: &RunConfig, art: &mut Artifacts, out: &mut dyn Write) -> Result<(), CliError> {
    let list = instances(cfg)?;
    let models = load_models(cfg)?;
    let learned_model = models.map(|m| m.1);
    let learned = learned_model.as_ref().map(|m| policy_from_n2(m));
    let opts = VerifyOptions {
        random_seeds: (0..cfg.random_seeds as u64).map(|k| cfg.seed + k).collect(),
        learned: learned.as_ref().map(|p| p as &dyn CutPolicy),
        skip_rule: None,
        // the filters drop symmetric copies on purpose
        brute_force: cfg.filters == FilterConfig::all_off(),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for inst in select(cfg, &list)? {
        let (root, icfg) = initial_position(&inst, cfg.filters)?;
        let r = verify_instance(inst.sigma, &root, &icfg, &opts)?;
        let exhaustive = r.structures.map_or(String::new(), |n| format!(", {n} structures exhaustive"));
        writeln!(
            out,
            "sigma {:>3}: {} done{exhaustive}  {}",
            r.sigma,
            r.done,
            if r.ok() { "ok" } else { "MISMATCH" }
        )?;
        for m in &r.mismatches {
            failures.push(format!("sigma {}: {m}", r.sigma));
        }
        rows.push(VerifyRow {
            sigma: r.sigma,
            done: r.done,
            structures: r.structures,
            ok: r.ok(),
        });
    }
    art.csv("", &rows)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failures.join("\n")))
    }
}
