//! Ensemble systems, discretization grids and transfer specifications.

mod builtin;
mod curve;
mod grid;
mod system;
mod transfer;

pub use builtin::{
    harmonic_oscillator_system, random_timevarying_system, HarmonicOscillator, RandomCoefficients,
    RandomTimeVarying, TabulatedSystem,
};
pub use curve::PlanarCurve;
pub use grid::{ParameterBox, ParameterGrid, TimeGrid};
pub use system::{Dynamics, LinearEnsembleSystem};
pub use transfer::TransferSpec;
