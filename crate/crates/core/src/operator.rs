//! Discretization of the ensemble operator
//!
//! ```text
//! (L g)(β) = ∫₀ᵀ Φ(0, t, β) B(t, β) g(t) dt  ≈  Σ_{k=1}^{N} δ Φ(0, t_k, β) B(t_k, β) g(t_k)
//! ```
//!
//! into the block matrix `W` with `n×m` blocks `W_jk = δ Φ(0,t_k,β_j) B(t_k,β_j)`.
//! Row `r` of `W` is state component `r mod n` of parameter point `r div n`;
//! column `c` is input channel `c mod m` at node `t_{1 + c div m}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowTable;
use crate::model::{LinearEnsembleSystem, ParameterGrid, TimeGrid, TransferSpec};

/// Rejects grids for which `W` would have more rows than columns.
pub fn check_shape(n: usize, m: usize, points: usize, steps: usize) -> Result<()> {
    let rows = n * points;
    let cols = m * steps;
    if rows > cols {
        return Err(Error::OverdeterminedShape { rows, cols });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    data: DMatrix<f64>,
    n: usize,
    m: usize,
    points: usize,
    steps: usize,
    delta: f64,
}

impl OperatorMatrix {
    /// Wraps a dense matrix with the given block layout.
    pub fn from_dense(data: DMatrix<f64>, n: usize, m: usize, delta: f64) -> Result<Self> {
        if n == 0 || m == 0 || !data.nrows().is_multiple_of(n) || !data.ncols().is_multiple_of(m) {
            return Err(Error::mismatch(format!(
                "a {}×{} matrix cannot hold {n}×{m} blocks",
                data.nrows(),
                data.ncols()
            )));
        }
        let (points, steps) = (data.nrows() / n, data.ncols() / m);
        check_shape(n, m, points, steps)?;
        Ok(Self {
            data,
            n,
            m,
            points,
            steps,
            delta,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Block `W_jk` for `k = 1..=N`.
    pub fn block(&self, j: usize, k: usize) -> DMatrix<f64> {
        assert!(
            j < self.points && (1..=self.steps).contains(&k),
            "block ({j}, {k}) out of range"
        );
        self.data
            .view((j * self.n, (k - 1) * self.m), (self.n, self.m))
            .into_owned()
    }
}

/// Stacked target `ξ̂` with block `j` equal to `Φ(0,T,β_j) X_F(β_j) − X₀(β_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetVector {
    data: DVector<f64>,
    n: usize,
}

impl TargetVector {
    pub fn from_vector(data: DVector<f64>, n: usize) -> Result<Self> {
        if n == 0 || !data.len().is_multiple_of(n) {
            return Err(Error::mismatch(format!(
                "vector of length {} cannot hold blocks of length {n}",
                data.len()
            )));
        }
        Ok(Self { data, n })
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn block(&self, j: usize) -> &[f64] {
        &self.data.as_slice()[j * self.n..(j + 1) * self.n]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            data: &self.data * alpha,
            n: self.n,
        }
    }
}

/// `δ Φ(0,t_k,β_j) B(t_k,β_j)`, evaluated in the same order wherever a block
/// is needed so that results agree bitwise.
pub fn kernel_block(
    system: &LinearEnsembleSystem,
    flow: &FlowTable,
    tgrid: &TimeGrid,
    pgrid: &ParameterGrid,
    j: usize,
    k: usize,
) -> DMatrix<f64> {
    let b = system.eval_b(tgrid.node(k), pgrid.point(j));
    (flow.inverse_flow(j, k) * b) * tgrid.delta()
}

fn check_inputs(
    system: &LinearEnsembleSystem,
    flow: &FlowTable,
    pgrid: &ParameterGrid,
    tgrid: &TimeGrid,
) -> Result<()> {
    system.check_param_dim(pgrid.dim())?;
    flow.check_grids(pgrid, tgrid)?;
    if flow.state_dim() != system.state_dim() {
        return Err(Error::mismatch(format!(
            "flow table has state dimension {}, system has {}",
            flow.state_dim(),
            system.state_dim()
        )));
    }
    Ok(())
}

pub fn assemble_operator(
    system: &LinearEnsembleSystem,
    flow: &FlowTable,
    tgrid: &TimeGrid,
    pgrid: &ParameterGrid,
) -> Result<OperatorMatrix> {
    let (n, m) = (system.state_dim(), system.input_dim());
    let (points, steps) = (pgrid.len(), tgrid.steps());
    check_shape(n, m, points, steps)?;
    check_inputs(system, flow, pgrid, tgrid)?;

    let rows = n * points;
    let delta = tgrid.delta();
    let mut data = DMatrix::<f64>::zeros(rows, m * steps);
    // Column-major storage: the m columns of time block k are contiguous.
    data.as_mut_slice()
        .par_chunks_mut(rows * m)
        .enumerate()
        .for_each(|(col_block, chunk)| {
            let k = col_block + 1;
            let t = tgrid.node(k);
            let mut b = DMatrix::zeros(n, m);
            for j in 0..points {
                system.fill_b(t, pgrid.point(j), &mut b);
                let block = (flow.inverse_flow(j, k) * &b) * delta;
                for l in 0..m {
                    let col = &mut chunk[l * rows..(l + 1) * rows];
                    col[j * n..(j + 1) * n].copy_from_slice(block.column(l).as_slice());
                }
            }
        });

    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("operator matrix has non-finite entries"));
    }
    Ok(OperatorMatrix {
        data,
        n,
        m,
        points,
        steps,
        delta,
    })
}

pub fn assemble_target(
    system: &LinearEnsembleSystem,
    flow: &FlowTable,
    transfer: &TransferSpec,
    pgrid: &ParameterGrid,
    tgrid: &TimeGrid,
) -> Result<TargetVector> {
    check_inputs(system, flow, pgrid, tgrid)?;
    transfer.check_against(system)?;
    let n = system.state_dim();
    let mut data = DVector::zeros(n * pgrid.len());
    for (j, beta) in pgrid.points().enumerate() {
        let x0 = transfer.initial(beta);
        let xf = transfer.target(beta);
        if x0.len() != n || xf.len() != n {
            return Err(Error::mismatch(format!(
                "transfer states at point {j} have lengths {} and {}, expected {n}",
                x0.len(),
                xf.len()
            )));
        }
        let xi = flow.terminal_inverse_flow(j) * xf - x0;
        data.rows_mut(j * n, n).copy_from(&xi);
    }
    Ok(TargetVector { data, n })
}
