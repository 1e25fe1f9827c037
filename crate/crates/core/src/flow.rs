//! State-transition matrices along the time grid.
//!
//! The operator kernel needs `Φ(0, t_k, β)`, the inverse of the forward flow
//! `Φ(t_k, 0, β)`. Rather than inverting, we integrate the adjoint equation
//!
//! ```text
//! dΨ/dt = −Ψ A(t, β),    Ψ(0) = I,
//! ```
//!
//! whose solution is `Ψ(t) = Φ(0, t, β)`. One pass per parameter point
//! yields every grid node.

use nalgebra::{DMatrix, DMatrixView};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LinearEnsembleSystem, ParameterGrid, TimeGrid};
use crate::ode::{Dopri5, StepFailure, Tolerances};

/// Adaptive integrator settings shared by flow computation and verification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            max_step: None,
            initial_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.rel_tol) || !positive(self.abs_tol) {
            return Err(Error::invalid(format!(
                "integrator tolerances must be positive, got rel_tol={}, abs_tol={}",
                self.rel_tol, self.abs_tol
            )));
        }
        if let Some(h) = self.max_step {
            if !positive(h) {
                return Err(Error::invalid(format!(
                    "max_step must be positive, got {h}"
                )));
            }
        }
        if let Some(h) = self.initial_step {
            if !positive(h) {
                return Err(Error::invalid(format!(
                    "initial_step must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel: self.rel_tol,
            abs: self.abs_tol,
            max_step: self.max_step,
            initial_step: self.initial_step,
        }
    }
}

pub(crate) fn integration_failure(beta: &[f64], failure: StepFailure) -> Error {
    Error::IntegrationFailure {
        beta: beta.to_vec(),
        t: failure.t,
        reason: failure.reason,
    }
}

/// `Φ(0, t_k, β)` for every node `t_k` of `tgrid`, by adjoint integration.
pub fn inverse_flow_trajectory(
    system: &LinearEnsembleSystem,
    beta: &[f64],
    tgrid: &TimeGrid,
    cfg: &IntegratorConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let n = system.state_dim();
    let mut out = Vec::with_capacity(tgrid.nodes().len());
    inverse_flow_into(system, beta, tgrid, cfg, |_, psi| {
        out.push(DMatrix::from_column_slice(n, n, psi))
    })?;
    Ok(out)
}

/// Drives the adjoint integration and hands each node's `Ψ` (column-major)
/// to `sink`.
fn inverse_flow_into(
    system: &LinearEnsembleSystem,
    beta: &[f64],
    tgrid: &TimeGrid,
    cfg: &IntegratorConfig,
    mut sink: impl FnMut(usize, &[f64]),
) -> Result<()> {
    cfg.validate()?;
    system.check_param_dim(beta.len())?;
    let n = system.state_dim();
    let mut a = DMatrix::zeros(n, n);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        system.fill_a(t, beta, &mut a);
        let psi = DMatrixView::from_slice(y, n, n);
        let mut dpsi = nalgebra::DMatrixViewMut::from_slice(dy, n, n);
        dpsi.gemm(-1.0, &psi, &a, 0.0);
    };
    let identity = DMatrix::<f64>::identity(n, n);
    let mut solver = Dopri5::new(rhs, 0.0, identity.as_slice(), cfg.tolerances());
    sink(0, solver.state());
    for (k, &t) in tgrid.nodes().iter().enumerate().skip(1) {
        solver
            .advance_to(t)
            .map_err(|f| integration_failure(beta, f))?;
        sink(k, solver.state());
    }
    Ok(())
}

/// Propagates `dM/dt = A(t, β) M` from `t_a` to `t_b`, returning
/// `Φ(t_b, t_a, β) · M0`. `M0` may have any number of columns.
pub fn forward_flow_step(
    system: &LinearEnsembleSystem,
    beta: &[f64],
    t_a: f64,
    t_b: f64,
    m0: &DMatrix<f64>,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    system.check_param_dim(beta.len())?;
    let n = system.state_dim();
    if m0.nrows() != n {
        return Err(Error::mismatch(format!(
            "initial matrix has {} rows, system state dimension is {n}",
            m0.nrows()
        )));
    }
    if t_b < t_a {
        return Err(Error::invalid(format!("need t_a ≤ t_b, got {t_a} > {t_b}")));
    }
    if t_a == t_b {
        return Ok(m0.clone());
    }
    let cols = m0.ncols();
    let mut a = DMatrix::zeros(n, n);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        system.fill_a(t, beta, &mut a);
        let m = DMatrixView::from_slice(y, n, cols);
        let mut dm = nalgebra::DMatrixViewMut::from_slice(dy, n, cols);
        dm.gemm(1.0, &a, &m, 0.0);
    };
    let mut solver = Dopri5::new(rhs, t_a, m0.as_slice(), cfg.tolerances());
    solver
        .advance_to(t_b)
        .map_err(|f| integration_failure(beta, f))?;
    Ok(DMatrix::from_column_slice(n, cols, solver.state()))
}

/// `Φ(0, t_k, β_j)` for all parameter points `j` and nodes `k = 0..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTable {
    n: usize,
    points: usize,
    steps: usize,
    /// Column-major `n×n` blocks ordered by `(j, k)`, `k` fastest.
    data: Vec<f64>,
}

impl FlowTable {
    /// Wraps raw column-major data laid out as described on the type.
    pub fn from_raw(n: usize, points: usize, steps: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n * points * (steps + 1) {
            return Err(Error::mismatch(format!(
                "flow table data has {} entries, expected {}",
                data.len(),
                n * n * points * (steps + 1)
            )));
        }
        Ok(Self {
            n,
            points,
            steps,
            data,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// Number of parameter points `P_total`.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn offset(&self, j: usize, k: usize) -> usize {
        assert!(
            j < self.points && k <= self.steps,
            "flow index ({j}, {k}) out of range"
        );
        (j * (self.steps + 1) + k) * self.n * self.n
    }

    /// `Φ(0, t_k, β_j)`.
    pub fn inverse_flow(&self, j: usize, k: usize) -> DMatrixView<'_, f64> {
        let o = self.offset(j, k);
        DMatrixView::from_slice(&self.data[o..o + self.n * self.n], self.n, self.n)
    }

    /// `Φ(0, T, β_j)`.
    pub fn terminal_inverse_flow(&self, j: usize) -> DMatrixView<'_, f64> {
        self.inverse_flow(j, self.steps)
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn check_grids(&self, pgrid: &ParameterGrid, tgrid: &TimeGrid) -> Result<()> {
        if self.points != pgrid.len() || self.steps != tgrid.steps() {
            return Err(Error::mismatch(format!(
                "flow table covers {} points × {} steps, grids have {} × {}",
                self.points,
                self.steps,
                pgrid.len(),
                tgrid.steps()
            )));
        }
        Ok(())
    }
}

/// Integrates the adjoint flow for every parameter point, in parallel over
/// points.
pub fn build_flow_table(
    system: &LinearEnsembleSystem,
    pgrid: &ParameterGrid,
    tgrid: &TimeGrid,
    cfg: &IntegratorConfig,
) -> Result<FlowTable> {
    cfg.validate()?;
    system.check_param_dim(pgrid.dim())?;
    let n = system.state_dim();
    let per_point = n * n * (tgrid.steps() + 1);
    let mut data = vec![0.0; per_point * pgrid.len()];
    data.par_chunks_mut(per_point)
        .enumerate()
        .try_for_each(|(j, row)| {
            inverse_flow_into(system, pgrid.point(j), tgrid, cfg, |k, psi| {
                row[k * n * n..(k + 1) * n * n].copy_from_slice(psi)
            })
        })?;
    if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
        let j = pos / per_point;
        let k = (pos % per_point) / (n * n);
        return Err(Error::IntegrationFailure {
            beta: pgrid.point(j).to_vec(),
            t: tgrid.node(k),
            reason: "non-finite transition matrix entry".into(),
        });
    }
    FlowTable::from_raw(n, pgrid.len(), tgrid.steps(), data)
}
