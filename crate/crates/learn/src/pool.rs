//! Bounded FIFO sample pools with provenance.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use nilprove_core::{CutLocation, Position};

use crate::encode::{encode, EncodedPosition};
use crate::model::Example;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    /// Estimated subtree size in a pruned proof.
    Pruned,
    /// One cut by `N₂`, children valued by `N`.
    OneStep,
    /// Local target of one cut.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Provenance {
    pub method: Method,
    pub sigma: usize,
    pub proof_index: usize,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub position: Position,
    pub encoded: EncodedPosition,
    /// Output index: 0 for global samples, `x·a + y` for local ones.
    pub output: usize,
    pub target: f64,
    pub provenance: Provenance,
}

impl Sample {
    pub fn example(&self) -> Example<'_> {
        Example {
            features: &self.encoded,
            output: self.output,
            target: self.target,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamplePool {
    pub capacity: usize,
    global: VecDeque<Sample>,
    local: VecDeque<Sample>,
    rejected: usize,
}

fn push_bounded(q: &mut VecDeque<Sample>, cap: usize, s: Sample) {
    if q.len() == cap {
        q.pop_front();
    }
    q.push_back(s);
}

impl SamplePool {
    /// `capacity` bounds each network's pool separately.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "pool capacity must be positive");
        SamplePool {
            capacity,
            global: VecDeque::new(),
            local: VecDeque::new(),
            rejected: 0,
        }
    }

    /// Adds a global sample; non-finite targets are dropped and counted.
    pub fn push_global(&mut self, position: Position, target: f64, provenance: Provenance) -> bool {
        if !target.is_finite() {
            self.rejected += 1;
            return false;
        }
        let encoded = encode(&position);
        push_bounded(
            &mut self.global,
            self.capacity,
            Sample {
                position,
                encoded,
                output: 0,
                target,
                provenance,
            },
        );
        true
    }

    pub fn push_local(&mut self, position: Position, cut: CutLocation, target: f64, provenance: Provenance) -> bool {
        if !target.is_finite() {
            self.rejected += 1;
            return false;
        }
        let encoded = encode(&position);
        let output = cut.x * position.shape.a + cut.y;
        push_bounded(
            &mut self.local,
            self.capacity,
            Sample {
                position,
                encoded,
                output,
                target,
                provenance,
            },
        );
        true
    }

    pub fn global(&self) -> &VecDeque<Sample> {
        &self.global
    }

    pub fn local(&self) -> &VecDeque<Sample> {
        &self.local
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn provenance(&self) -> impl Iterator<Item = &Provenance> {
        self.global.iter().chain(&self.local).map(|s| &s.provenance)
    }
}

/// `size` samples drawn uniformly with replacement.
pub fn draw<'a, R: Rng + ?Sized>(q: &'a VecDeque<Sample>, size: usize, rng: &mut R) -> Vec<&'a Sample> {
    (0..size).map(|_| &q[rng.gen_range(0..q.len())]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nilprove_core::Shape;

    fn prov(sigma: usize) -> Provenance {
        Provenance {
            method: Method::Pruned,
            sigma,
            proof_index: 0,
        }
    }

    #[test]
    fn fifo_eviction() {
        let p = Position::full(Shape::new(2, 2).unwrap());
        let mut pool = SamplePool::new(3);
        for k in 0..5 {
            pool.push_global(p.clone(), k as f64, prov(k));
        }
        let targets: Vec<f64> = pool.global().iter().map(|s| s.target).collect();
        assert_eq!(targets, vec![2.0, 3.0, 4.0]);
        assert!(pool.local().is_empty());
    }

    #[test]
    fn non_finite_targets_rejected() {
        let p = Position::full(Shape::new(2, 2).unwrap());
        let mut pool = SamplePool::new(3);
        assert!(!pool.push_global(p.clone(), f64::NAN, prov(0)));
        assert!(!pool.push_local(p, CutLocation::new(0, 1), f64::INFINITY, prov(0)));
        assert_eq!(pool.rejected(), 2);
        assert!(pool.global().is_empty());
    }

    #[test]
    fn local_output_index() {
        let p = Position::full(Shape::new(3, 2).unwrap());
        let mut pool = SamplePool::new(3);
        pool.push_local(p, CutLocation::new(2, 1), 0.5, prov(1));
        assert_eq!(pool.local()[0].output, 7);
    }
}
