//! Cut-based classification proofs for graded 4-nilpotent semigroups of
//! size `(a, b, 1, 1)`: masks and positions, associativity propagation, the
//! sieve of initial instances, proof trees, and an exact minimal-proof
//! prover.

pub mod error;
pub mod instances;
pub mod mask;
pub mod minprover;
pub mod par;
pub mod position;
pub mod prooftree;
pub mod propagate;

pub use error::{Error, Result};
pub use instances::{enumerate_sigma, initial_position, SigmaInstance};
pub use mask::Mask;
pub use minprover::{minimize, BoundTree, CutBound, MinimizeOptions, Minimum};
pub use par::Execution;
pub use position::{CutLocation, FilterConfig, Position, PositionStatus, Shape};
pub use prooftree::{
    benchmark_policy, make_cut, run_proof, run_pruned_proof, BenchmarkPolicy, CutPolicy, NodeInfo,
    ProofResult, RandomPolicy,
};
pub use propagate::{process, process_batch, Batch};
