//! Minimum-norm open-loop control synthesis for ensembles of linear
//! time-varying systems.
//!
//! An ensemble is a continuum of systems
//!
//! ```text
//! dX/dt (t, β) = A(t, β) X(t, β) + B(t, β) u(t),    β ∈ K ⊂ ℝᵈ
//! ```
//!
//! driven by one shared control `u`. Steering every member from `X₀(β)` to
//! `X_F(β)` at time `T` reduces to the first-kind Fredholm equation
//!
//! ```text
//! (L u)(β) = ∫₀ᵀ Φ(0, σ, β) B(σ, β) u(σ) dσ = Φ(0, T, β) X_F(β) − X₀(β) =: ξ(β)
//! ```
//!
//! The pipeline discretizes `L` with a right-endpoint Riemann rule into a
//! block matrix `W`, solves `W ĝ = ξ̂` in the minimum-norm sense with a
//! truncated SVD, then checks the transfer by simulating every member.
//!
//! Modules, in pipeline order:
//!
//! - [`model`]: systems, grids, transfer specifications, built-in examples.
//! - [`flow`]: adaptive integration of state-transition matrices.
//! - [`operator`]: assembly of `W` and `ξ̂`.
//! - [`synthesis`]: SVD, truncation rule, control synthesis, Picard table.
//! - [`verify`]: forward simulation and K-norm transfer error.
//! - [`export`]: CSV tables and binary dumps.

pub mod error;
pub mod export;
pub mod flow;
pub mod model;
pub mod operator;
pub mod synthesis;
pub mod verify;

mod ode;

pub use error::{Error, Result};
pub use flow::{build_flow_table, FlowTable, IntegratorConfig};
pub use model::{
    harmonic_oscillator_system, random_timevarying_system, LinearEnsembleSystem, ParameterBox,
    ParameterGrid, PlanarCurve, TimeGrid, TransferSpec,
};
pub use operator::{assemble_operator, assemble_target, OperatorMatrix, TargetVector};
pub use synthesis::{
    choose_truncation, compute_svd, synthesize_control, ControlSignal, SingularSystemApprox,
    SynthesisReport,
};
pub use verify::{evaluate_transfer, simulate_member, EnsembleOutcome};
