//! Independent oracles: brute-force structure enumeration, orbit counting,
//! chaotic iteration and nested-loop profile checks.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nilprove_core::instances::{key_tuple, permutations, PhiBits};
use nilprove_core::position::{ONE_I, ZERO_I};
use nilprove_core::propagate::{modify_leftright_step, modify_prod_step, modify_ternary_step};
use nilprove_core::{
    benchmark_policy, enumerate_sigma, initial_position, make_cut, process, run_proof, CutLocation, FilterConfig,
    Position, PositionStatus, RandomPolicy, Shape,
};

/// An associative structure `(μ, φ, ψ)`; τ follows from μ and φ.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
struct Structure {
    mu: Vec<usize>,
    phi: Vec<usize>,
    psi: Vec<usize>,
}

fn all_structures(s: Shape) -> Vec<Structure> {
    let (a, b, bz) = (s.a, s.b, s.bz());
    let mut out = Vec::new();
    let n_mu = bz.pow((a * a) as u32);
    for mu_code in 0..n_mu {
        let mut mu = vec![0; a * a];
        let mut c = mu_code;
        for v in mu.iter_mut() {
            *v = c % bz;
            c /= bz;
        }
        for phi_code in 0..1usize << (a * b) {
            let phi: Vec<usize> = (0..a * b).map(|i| phi_code >> i & 1).collect();
            for psi_code in 0..1usize << (a * b) {
                let psi: Vec<usize> = (0..a * b).map(|i| psi_code >> i & 1).collect();
                let f = |x: usize, p: usize| if p == b { 0 } else { phi[x * b + p] };
                let g = |p: usize, z: usize| if p == b { 0 } else { psi[p * a + z] };
                let assoc = (0..a).all(|x| {
                    (0..a).all(|y| (0..a).all(|z| f(x, mu[y * a + z]) == g(mu[x * a + y], z)))
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

fn covers(p: &Position, st: &Structure) -> bool {
    let s = p.shape;
    let (a, b, bz) = (s.a, s.b, s.bz());
    let bit = |col: u16, v: usize| col >> v & 1 == 1;
    let f = |x: usize, q: usize| if q == b { 0 } else { st.phi[x * b + q] };
    let g = |q: usize, z: usize| if q == b { 0 } else { st.psi[q * a + z] };
    (0..a * a).all(|i| bit(p.m.col(i), st.mu[i]))
        && (0..a).all(|x| (0..bz).all(|q| bit(p.l.col(s.l_idx(x, q)), f(x, q))))
        && (0..bz).all(|q| (0..a).all(|z| bit(p.r.col(s.r_idx(q, z)), g(q, z))))
        && (0..a).all(|x| {
            (0..a).all(|y| (0..a).all(|z| bit(p.t.col(s.t_idx(x, y, z)), f(x, st.mu[y * a + z]))))
        })
}

fn covered(p: &Position, all: &[Structure]) -> BTreeSet<Structure> {
    all.iter().filter(|st| covers(p, st)).cloned().collect()
}

#[test]
fn process_preserves_covered_structures_22() {
    let s = Shape::new(2, 2).unwrap();
    let all = all_structures(s);
    assert!(!all.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut nonempty = 0;
    for i in 0..200 {
        let density = [0.75, 0.85, 0.95][i % 3];
        let p = Position::random(s, &mut rng, density);
        let before = covered(&p, &all);
        let q = process(&p);
        assert!(q.is_subset_of(&p).unwrap());
        assert_eq!(covered(&q, &all), before, "position {i}");
        nonempty += usize::from(!before.is_empty());
    }
    assert!(nonempty >= 20, "only {nonempty} positions cover a structure");
}

#[test]
fn cuts_partition_covered_structures_22() {
    let s = Shape::new(2, 2).unwrap();
    let all = all_structures(s);
    let cfg = FilterConfig::all_off();
    for inst in enumerate_sigma(s).unwrap() {
        let (root, _) = initial_position(&inst, cfg).unwrap();
        let parent = covered(&root, &all);
        for c in root.available_cuts() {
            let mut union = BTreeSet::new();
            let mut total = 0;
            for (child, _) in make_cut(&root, c, &cfg).unwrap() {
                let part = covered(&child, &all);
                total += part.len();
                union.extend(part);
            }
            assert_eq!(total, union.len(), "children overlap at sigma {} cut {c:?}", inst.sigma);
            assert_eq!(union, parent, "sigma {} cut {c:?}", inst.sigma);
        }
    }
}

#[test]
fn done_leaves_classify_every_structure_22() {
    let s = Shape::new(2, 2).unwrap();
    let all = all_structures(s);
    let cfg = FilterConfig::all_off();
    for inst in enumerate_sigma(s).unwrap() {
        let (root, cfg) = initial_position(&inst, cfg).unwrap();
        let proof = run_proof(&root, &benchmark_policy(), &cfg).unwrap();
        let mut from_leaves = BTreeSet::new();
        for p in proof.done_positions() {
            from_leaves.extend(covered(p, &all));
        }
        assert_eq!(from_leaves, covered(&root, &all), "sigma {}", inst.sigma);
    }
}

#[test]
fn any_step_order_reaches_the_same_fixpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let steps: [fn(&Position) -> Position; 3] = [modify_ternary_step, modify_leftright_step, modify_prod_step];
    for (a, b) in [(2, 2), (3, 2), (4, 2), (3, 3)] {
        let s = Shape::new(a, b).unwrap();
        for _ in 0..60 {
            let p = Position::random(s, &mut rng, 0.85);
            if !p.m.is_possible() {
                continue;
            }
            let mut cur = p.clone();
            loop {
                let mut order = [0, 1, 2];
                order.shuffle(&mut rng);
                let mut next = cur.clone();
                for &k in &order {
                    for _ in 0..rng.gen_range(1..3) {
                        next = steps[k](&next);
                    }
                }
                if next == cur {
                    break;
                }
                cur = next;
            }
            let q = process(&p);
            // uniqueness of a product stops holding once its column empties,
            // so only possible outcomes are a greatest fixpoint
            if q.m.is_possible() && cur.m.is_possible() {
                assert_eq!(cur, q);
            } else {
                assert!(!q.all_possible() && !cur.all_possible());
            }
        }
    }
}

/// Orbit representatives by minimizing the key tuple over every row and
/// column permutation.
fn brute_sieve(s: Shape) -> Vec<Vec<u32>> {
    let rows = permutations(s.a);
    let cols = permutations(s.b);
    let mut reps = BTreeSet::new();
    for code in 0..1u64 << (s.a * s.b) {
        let phi = PhiBits(code);
        let mut best: Option<Vec<u32>> = None;
        for rp in &rows {
            for cp in &cols {
                let mut bits = 0u64;
                for x in 0..s.a {
                    for j in 0..s.b {
                        if phi.get(s, rp[x], cp[j]) {
                            bits |= 1 << (x * s.b + j);
                        }
                    }
                }
                let k = key_tuple(s, PhiBits(bits));
                if best.as_ref().is_none_or(|b| k < *b) {
                    best = Some(k);
                }
            }
        }
        reps.insert(best.unwrap());
    }
    reps.into_iter().collect()
}

#[test]
fn sieve_matches_brute_force_orbits() {
    for (a, b) in [(2, 2), (3, 2), (2, 3), (3, 3), (4, 2)] {
        let s = Shape::new(a, b).unwrap();
        let got: Vec<Vec<u32>> = enumerate_sigma(s).unwrap().into_iter().map(|i| i.keys).collect();
        assert_eq!(got, brute_sieve(s), "({a},{b})");
    }
}

/// Nested-loop profile check on a position whose φ is done.
fn brute_profile(p: &Position) -> bool {
    let s = p.shape;
    let fixed = |c: u16| match c {
        ZERO_I => Some(0),
        ONE_I => Some(1),
        _ => None,
    };
    for p1 in 0..s.bz() {
        for p2 in 0..s.bz() {
            if p1 == p2 {
                continue;
            }
            let mut same = true;
            for x in 0..s.a {
                let u = fixed(p.l.col(s.l_idx(x, p1)));
                let v = fixed(p.l.col(s.l_idx(x, p2)));
                same &= u.is_some() && u == v;
            }
            for z in 0..s.a {
                let u = fixed(p.r.col(s.r_idx(p1, z)));
                let v = fixed(p.r.col(s.r_idx(p2, z)));
                same &= u.is_some() && u == v;
            }
            if same {
                return true;
            }
        }
    }
    false
}

#[test]
fn profile_filter_agrees_with_nested_loops_on_leaves() {
    let s = Shape::new(3, 2).unwrap();
    let list = enumerate_sigma(s).unwrap();
    let (root, cfg) = initial_position(&list[3], FilterConfig::all_off()).unwrap();
    let proof = run_proof(&root, &benchmark_policy(), &cfg).unwrap();
    let mut fired = 0;
    for n in proof.nodes.iter().filter(|n| n.status != PositionStatus::Active) {
        let p = &n.position;
        assert_eq!(p.profile_filter(), brute_profile(p));
        fired += usize::from(p.profile_filter());
    }
    assert!(fired > 0);
}

#[test]
fn done_sets_agree_across_policies() {
    for (a, b, sigma) in [(3, 2, 5), (3, 2, 3), (4, 2, 5)] {
        let s = Shape::new(a, b).unwrap();
        let list = enumerate_sigma(s).unwrap();
        let (root, cfg) = initial_position(&list[sigma], FilterConfig::all_on()).unwrap();
        let reference: HashSet<Position> = run_proof(&root, &benchmark_policy(), &cfg).unwrap().done_set();
        for seed in 0..5 {
            let got = run_proof(&root, &RandomPolicy { seed }, &cfg).unwrap().done_set();
            assert_eq!(got, reference, "({a},{b}) sigma {sigma} seed {seed}");
        }
    }
}

#[test]
fn benchmark_first_cut_and_split_counts() {
    let s = Shape::new(3, 2).unwrap();
    let list = enumerate_sigma(s).unwrap();
    let (root, cfg) = initial_position(&list[3], FilterConfig::all_on()).unwrap();
    assert_eq!(root.filter(&cfg), PositionStatus::Active);
    assert_eq!(root.available_cuts().len(), 9);
    assert_eq!(make_cut(&root, CutLocation::new(0, 0), &cfg).unwrap().len(), 3);
}
