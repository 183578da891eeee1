//! DC optimal transmission switching toolkit.
//!
//! The crate stacks three layers:
//!
//! * generic math kernels — a bounded-variable simplex LP solver ([`lp`]),
//!   a branch-and-bound binary MILP engine ([`milp`]), and graph path
//!   machinery ([`paths`]) — all generic over the floating scalar;
//! * the power-system layer — network data ([`grid`]), DC optimal power
//!   flow with duals ([`opf`]), and the switching MILP itself ([`ots`]);
//! * big-M tightening ([`bigm`]) and a benchmark harness ([`bench`]).
//!
//! Concrete `f64` aliases for the generic types live at the crate root.

pub mod bench;
pub mod bigm;
pub mod grid;
pub mod lp;
pub mod milp;
pub mod opf;
pub mod ots;
pub mod paths;
pub mod scalar;

pub use scalar::Scalar;

/// Default-precision LP problem.
pub type LpProblem = lp::LpProblem<f64>;
/// Default-precision LP solution.
pub type LpSolution = lp::LpSolution<f64>;
/// Default-precision LP solver options.
pub type SolverOptions = lp::SolverOptions<f64>;
