//! Near-optimal feasible solutions for separable nonconvex problems
//!
//! ```text
//!   minimize  Σ_i f_i(x_i)   subject to  Σ_i A_i x_i ≤ b,  x_i ∈ X_i
//! ```
//!
//! The pipeline:
//!
//! 1. [`dual`] computes the dual value `v*` by projected subgradient ascent.
//! 2. [`fw`] runs Frank-Wolfe on `½‖z − (v*, b)‖₊²` over the Minkowski sum of
//!    the blocks' lifted sets, producing a convex combination of oracle atoms.
//! 3. [`trim`] lifts that combination and reduces it with an exact
//!    ([`caratheodory`]) or approximate ([`approx`]) Carathéodory step so only
//!    a few blocks keep a nontrivial mixture.
//! 4. [`reconstruct`] turns the per-block mixtures into a primal point, with
//!    an optional right-hand-side perturbation loop.
//!
//! [`pipeline`] wires the stages together.

pub mod approx;
pub mod apps;
pub mod caratheodory;
pub mod dual;
pub mod fw;
pub mod instance_io;
pub mod model;
pub mod pipeline;
pub mod qr_update;
pub mod reconstruct;
pub mod trim;

pub use model::{
    evaluate, plus_norm, Atom, BlockOracle, BlockSpec, Conjugate, Evaluation, ExtReal, ModelError,
    OracleError, ProblemInstance, SolverConfig, WeightedAtoms,
};
