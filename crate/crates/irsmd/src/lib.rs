//! First-order toolkit for ill-posed bilevel ("selection") convex problems.
//!
//! The central algorithm is iterative regularized stochastic mirror descent
//! (IR-SMD): a single-loop scheme that follows a stochastic subgradient of the
//! inner objective `f` regularized by a decaying multiple of a subgradient of
//! the outer objective `h`, taking prox steps in a Bregman geometry and
//! returning a weighted average of the iterates. The crate bundles
//!
//! * [`geometry`] — distance-generating functions, Bregman distances, prox
//!   mappings, and feasible-set projections;
//! * [`schedules`] — the coupled power-law stepsize/regularization sequences
//!   and their validators;
//! * [`oracles`] — stochastic first-order oracles (least squares, hinge loss,
//!   elastic net, quadratics) with certified subgradient bounds;
//! * [`solver`] — the IR-SMD iteration with weighted-average recursion and
//!   trace capture;
//! * [`twostage`] — a compiler from scenario-based two-stage stochastic
//!   programs into penalty-form bilevel problems;
//! * [`mod@reference`] — brute-force and high-accuracy baselines plus runtime
//!   diagnostics for the regularization-path and recursive-error bounds;
//! * [`config`] / [`experiment`] — the experiment harness behind the `irsmd`
//!   binary.

pub mod config;
pub mod data;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod oracles;
pub mod reference;
pub mod schedules;
pub mod solver;
pub mod synth;
pub mod twostage;

pub use geometry::{DistanceGenerator, FeasibleSet, GeometryError};
pub use oracles::{BilevelProblem, FirstOrderOracle, OracleError, SampleSource};
pub use schedules::{Schedule, ScheduleError, ValidationReport};
pub use solver::{RunReport, SolverError, SolverOptions, SolverState};
