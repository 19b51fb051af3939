//! Exact value functions from the minimal-proof prover.
//!
//! `N(p) = log₁₀ ν_min(p)` and `N₂(p; c) = log₁₀(1 + Σ ν_min(child))`, the
//! size of the best proof that cuts at `c` first. This is the quantity the
//! local network is trained towards, and its argmin is a minimizing cut.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nilprove_core::{benchmark_policy, minimize, Execution, FilterConfig, MinimizeOptions, Position};

use crate::targets::{GlobalEstimator, LocalEstimator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactValues {
    pub nu_min: u64,
    /// Best proof size per first cut, indexed `x·a + y`.
    pub by_cut: Vec<Option<u64>>,
}

pub struct MinOracle {
    pub cfg: FilterConfig,
    cache: Mutex<HashMap<Position, Arc<ExactValues>>>,
}

impl MinOracle {
    pub fn new(cfg: FilterConfig) -> Self {
        MinOracle {
            cfg,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn values(&self, p: &Position) -> Arc<ExactValues> {
        if let Some(v) = self.cache.lock().expect("oracle cache").get(p) {
            return v.clone();
        }
        let opts = MinimizeOptions {
            exec: Execution::Sequential,
            split_root: true,
            ..MinimizeOptions::default()
        };
        let min = minimize(p, &self.cfg, &benchmark_policy(), opts).expect("exact minimization");
        let by_cut = min
            .root_counts()
            .into_iter()
            .flatten()
            .map(|c| c.map(|k| k + 1))
            .collect();
        let v = Arc::new(ExactValues {
            nu_min: min.nu_min,
            by_cut,
        });
        self.cache.lock().expect("oracle cache").insert(p.clone(), v.clone());
        v
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("oracle cache").len()
    }
}

impl GlobalEstimator for MinOracle {
    fn global(&self, ps: &[&Position]) -> Vec<f64> {
        ps.iter().map(|p| (self.values(p).nu_min as f64).log10()).collect()
    }
}

impl LocalEstimator for MinOracle {
    fn local(&self, ps: &[&Position]) -> Vec<Vec<f64>> {
        ps.iter()
            .map(|p| {
                self.values(p)
                    .by_cut
                    .iter()
                    .map(|c| c.map_or(f64::INFINITY, |k| (k as f64).log10()))
                    .collect()
            })
            .collect()
    }
}
