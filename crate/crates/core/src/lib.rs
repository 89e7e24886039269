//! First-passage ("ruin") solvers for piecewise deterministic processes with
//! phase-type downward jumps.
//!
//! The crate is organised around the objects a user touches in order:
//!
//! * [`phase_type`]: jump-size laws `(β, B, b)` with evaluation and sampling.
//! * [`lie_algebra`]: commutator closure of the system generators and a
//!   solvability verdict (the integrability gate).
//! * [`passage`]: the first-passage linear system, its closed forms for the
//!   exponential-jump case, and a numerical boundary-value solver for any
//!   number of phases.
//! * [`riccati`]: the scalar Riccati reduction, the Allen–Stein integrability
//!   test and the closed-form solution family for the `φ_K` drift.
//! * [`mc_sim`]: an independent Monte Carlo oracle.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lie_algebra;
pub mod mc_sim;
pub mod numeric;
pub mod passage;
pub mod phase_type;
pub mod riccati;
mod serde_util;

pub use error::{PassageError, Result};
pub use lie_algebra::{build_generators, closure, commutator, is_solvable, ClosureReport};
pub use mc_sim::{estimate, simulate_path, PassageEstimate, PathOutcome, SimConfig};
pub use passage::{
    assemble_system, constant_drift_solution, segerdahl_q0_solution, solve_bvp, DriftKind,
    DriftSpec, Estimand, Interpolation, JumpDirection, Method, ModelSpec, PassageProblem,
    SolutionCurve,
};
pub use phase_type::{matrix_exp, PhaseType, ValidationReport};
