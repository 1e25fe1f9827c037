//! Forward simulation of the ensemble under a synthesized control.
//!
//! Each member integrates `dX/dt = A(t,β) X + B(t,β) u(t)` adaptively, with
//! `u` evaluated through the control's interpolation rule. The integrator is
//! independent of the Riemann rule used to build the operator, so the
//! reported error includes the discretization error of the synthesis.

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{integration_failure, IntegratorConfig};
use crate::model::{LinearEnsembleSystem, ParameterGrid, TransferSpec};
use crate::ode::Dopri5;
use crate::synthesis::ControlSignal;

fn check_control(system: &LinearEnsembleSystem, control: &ControlSignal) -> Result<()> {
    if control.input_dim() != system.input_dim() {
        return Err(Error::mismatch(format!(
            "control has {} channels, system `{}` has {} inputs",
            control.input_dim(),
            system.label(),
            system.input_dim()
        )));
    }
    Ok(())
}

/// Integrates one member from `x0` at `t = 0`, stopping at each time in
/// `stops` (ascending, within `[0, T]`) and finally at `T`.
fn integrate_member(
    system: &LinearEnsembleSystem,
    beta: &[f64],
    x0: &[f64],
    control: &ControlSignal,
    cfg: &IntegratorConfig,
    stops: &[f64],
    mut record: impl FnMut(f64, &[f64]),
) -> Result<DVector<f64>> {
    let (n, m) = (system.state_dim(), system.input_dim());
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut u = vec![0.0; m];
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        system.fill_a(t, beta, &mut a);
        system.fill_b(t, beta, &mut b);
        control.eval_into(t, &mut u);
        let x = DVectorView::from_slice(y, n);
        let mut dx = nalgebra::DVectorViewMut::from_slice(dy, n);
        dx.gemv(1.0, &a, &x, 0.0);
        dx.gemv(1.0, &b, &DVectorView::from_slice(&u, m), 1.0);
    };
    let horizon = control.time_grid().horizon();
    let mut solver = Dopri5::new(rhs, 0.0, x0, cfg.tolerances());
    for &t in stops.iter().filter(|&&t| t <= horizon) {
        solver
            .advance_to(t)
            .map_err(|f| integration_failure(beta, f))?;
        record(t, solver.state());
    }
    solver
        .advance_to(horizon)
        .map_err(|f| integration_failure(beta, f))?;
    let x = DVector::from_column_slice(solver.state());
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationFailure {
            beta: beta.to_vec(),
            t: horizon,
            reason: "non-finite terminal state".into(),
        });
    }
    Ok(x)
}

/// Terminal state `X(T, β)` of one member starting from `x0`.
pub fn simulate_member(
    system: &LinearEnsembleSystem,
    beta: &[f64],
    x0: &DVector<f64>,
    control: &ControlSignal,
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    system.check_param_dim(beta.len())?;
    check_control(system, control)?;
    if x0.len() != system.state_dim() {
        return Err(Error::mismatch(format!(
            "initial state has length {}, system state dimension is {}",
            x0.len(),
            system.state_dim()
        )));
    }
    integrate_member(system, beta, x0.as_slice(), control, cfg, &[], |_, _| {})
}

/// Downsampled state history of one member.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per time, `n` columns.
    pub states: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleOutcome {
    /// Row `j` is `X(T, β_j)`.
    pub terminal_states: DMatrix<f64>,
    /// Row `j` is `X_F(β_j)`.
    pub target_states: DMatrix<f64>,
    /// `‖X(T, β_j) − X_F(β_j)‖₂`.
    pub member_errors: Vec<f64>,
    /// Quadrature approximation of `‖X_T − X_F‖_K`.
    pub k_norm_error: f64,
    pub mean_error: f64,
    pub max_error: f64,
    /// Present when trajectory recording was requested; one per member.
    pub trajectories: Option<Vec<Trajectory>>,
}

/// Simulates every grid member and reduces the errors in ascending `j`.
pub fn evaluate_transfer(
    system: &LinearEnsembleSystem,
    pgrid: &ParameterGrid,
    transfer: &TransferSpec,
    control: &ControlSignal,
    cfg: &IntegratorConfig,
) -> Result<EnsembleOutcome> {
    evaluate_transfer_recording(system, pgrid, transfer, control, cfg, None)
}

/// Like [`evaluate_transfer`], additionally recording each member's state at
/// every `stride`-th time node when `stride` is given.
pub fn evaluate_transfer_recording(
    system: &LinearEnsembleSystem,
    pgrid: &ParameterGrid,
    transfer: &TransferSpec,
    control: &ControlSignal,
    cfg: &IntegratorConfig,
    stride: Option<usize>,
) -> Result<EnsembleOutcome> {
    cfg.validate()?;
    system.check_param_dim(pgrid.dim())?;
    check_control(system, control)?;
    transfer.check_against(system)?;
    if stride == Some(0) {
        return Err(Error::invalid("trajectory stride must be positive"));
    }
    let n = system.state_dim();
    let stops: Vec<f64> = match stride {
        Some(s) => control
            .time_grid()
            .nodes()
            .iter()
            .step_by(s)
            .copied()
            .collect(),
        None => Vec::new(),
    };

    let results: Vec<Result<(DVector<f64>, DVector<f64>, Option<Trajectory>)>> = (0..pgrid.len())
        .into_par_iter()
        .map(|j| {
            let beta = pgrid.point(j);
            let x0 = transfer.initial(beta);
            let xf = transfer.target(beta);
            if x0.len() != n || xf.len() != n {
                return Err(Error::mismatch(format!(
                    "transfer states at point {j} have the wrong length"
                )));
            }
            let mut times = Vec::with_capacity(stops.len());
            let mut states = Vec::with_capacity(stops.len() * n);
            let xt =
                integrate_member(system, beta, x0.as_slice(), control, cfg, &stops, |t, x| {
                    times.push(t);
                    states.extend_from_slice(x);
                })?;
            let traj = stride.map(|_| Trajectory {
                states: DMatrixView::from_slice(&states, n, times.len()).transpose(),
                times,
            });
            Ok((xt, xf, traj))
        })
        .collect();

    let mut failures = Vec::new();
    let mut terminal_states = DMatrix::zeros(pgrid.len(), n);
    let mut target_states = DMatrix::zeros(pgrid.len(), n);
    let mut member_errors = Vec::with_capacity(pgrid.len());
    let mut trajectories = stride.map(|_| Vec::with_capacity(pgrid.len()));
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok((xt, xf, traj)) => {
                member_errors.push((&xt - &xf).norm());
                terminal_states.set_row(j, &xt.transpose());
                target_states.set_row(j, &xf.transpose());
                if let (Some(all), Some(t)) = (trajectories.as_mut(), traj) {
                    all.push(t);
                }
            }
            Err(e) => failures.push((j, Box::new(e))),
        }
    }
    if !failures.is_empty() {
        return Err(Error::EnsembleFailure { failures });
    }

    let weight = pgrid.cell_measure();
    let k_norm_error = member_errors
        .iter()
        .map(|e| weight * e * e)
        .sum::<f64>()
        .sqrt();
    let mean_error = member_errors.iter().sum::<f64>() / member_errors.len() as f64;
    let max_error = member_errors.iter().copied().fold(0.0, f64::max);
    Ok(EnsembleOutcome {
        terminal_states,
        target_states,
        member_errors,
        k_norm_error,
        mean_error,
        max_error,
        trajectories,
    })
}
