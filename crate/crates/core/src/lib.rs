//! Equilibrium solvers for Nash-Cournot oligopoly models with separable
//! concave production costs.
//!
//! Firms `0..n` carry increasing concave costs, firms `n..N` increasing
//! affine costs, and the inverse demand is `alpha - beta * sum(x)`. In this
//! setting a local equilibrium need not be global, so the crate provides:
//!
//! * [`gap`] -- a nonnegative gap function that vanishes exactly at
//!   equilibria, plus its restricted, piecewise-model and box-bound variants.
//! * [`qp`] -- the strongly convex box QP that every affine-cost model
//!   reduces to, solved by a scalar root search on the total output.
//! * [`solvers`] -- search-and-check over a piecewise-linear model, and the
//!   search-check-branch loops for global and local equilibria, which refine
//!   chord envelopes of the concave costs by adaptive rectangular bisection.
//! * [`harness`] -- seeded instance generation, brute-force oracles and the
//!   benchmark driver used by the `cournot` CLI.
//!
//! ```
//! use cournot::model::{CostFunction, Instance, Interval};
//! use cournot::solvers::{solve_global, SolveOptions, SolveStatus};
//!
//! let inst = Instance::new(
//!     25.0,
//!     0.004,
//!     1,
//!     vec![Interval::new(0.0, 400.0), Interval::new(0.0, 300.0)],
//!     vec![
//!         CostFunction::LogConcave { a: 3.0, gamma: 9.0 },
//!         CostFunction::Affine { mu: 12.0, xi: 0.0 },
//!     ],
//! )
//! .unwrap();
//! let eps = 1e-4 * inst.scale();
//! let report = solve_global(&inst, &SolveOptions::new(eps));
//! assert_eq!(report.status, SolveStatus::EpsEquilibrium);
//! assert!(report.gap_value <= eps);
//! ```

pub mod error;
pub mod gap;
pub mod harness;
pub mod model;
pub mod qp;
pub mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{CostFunction, Instance, Interval, StrategyProfile};
