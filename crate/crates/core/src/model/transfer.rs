use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::curve::PlanarCurve;
use super::grid::ParameterGrid;
use super::system::LinearEnsembleSystem;
use crate::error::{Error, Result};

type StateFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;

/// Initial and target state functions `X₀(β)`, `X_F(β)`.
#[derive(Clone)]
pub struct TransferSpec {
    n: usize,
    initial: StateFn,
    target: StateFn,
}

impl fmt::Debug for TransferSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransferSpec")
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}

impl TransferSpec {
    pub fn from_fns(
        n: usize,
        initial: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
        target: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            initial: Arc::new(initial),
            target: Arc::new(target),
        }
    }

    /// Parameter-independent transfer `x0 → xf`.
    pub fn constant(x0: DVector<f64>, xf: DVector<f64>) -> Result<Self> {
        if x0.len() != xf.len() || x0.is_empty() {
            return Err(Error::mismatch(format!(
                "initial state has length {}, target has length {}",
                x0.len(),
                xf.len()
            )));
        }
        let n = x0.len();
        Ok(Self::from_fns(n, move |_| x0.clone(), move |_| xf.clone()))
    }

    /// Places the ensemble on planar curves: grid point `j` starts at
    /// `curve0(j / P_total)` and should end at `curve_f(j / P_total)`.
    /// Off-grid parameters use the grid's fractional index.
    pub fn curves(
        system: &LinearEnsembleSystem,
        curve0: PlanarCurve,
        curve_f: PlanarCurve,
        grid: &ParameterGrid,
    ) -> Result<Self> {
        if system.state_dim() != 2 {
            return Err(Error::invalid(format!(
                "curve transfers need a planar system, `{}` has state dimension {}",
                system.label(),
                system.state_dim()
            )));
        }
        system.check_param_dim(grid.dim())?;
        let total = grid.len() as f64;
        let g0 = grid.clone();
        let gf = grid.clone();
        fn sample(
            curve: &PlanarCurve,
            grid: &ParameterGrid,
            total: f64,
            beta: &[f64],
        ) -> DVector<f64> {
            let s = (grid.fractional_index(beta) / total).rem_euclid(1.0);
            DVector::from_row_slice(&curve.point(s))
        }
        Ok(Self::from_fns(
            2,
            move |beta| sample(&curve0, &g0, total, beta),
            move |beta| sample(&curve_f, &gf, total, beta),
        ))
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn initial(&self, beta: &[f64]) -> DVector<f64> {
        (self.initial)(beta)
    }

    pub fn target(&self, beta: &[f64]) -> DVector<f64> {
        (self.target)(beta)
    }

    pub(crate) fn check_against(&self, system: &LinearEnsembleSystem) -> Result<()> {
        if self.n != system.state_dim() {
            return Err(Error::mismatch(format!(
                "transfer has state dimension {}, system `{}` has {}",
                self.n,
                system.label(),
                system.state_dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{harmonic_oscillator_system, random_timevarying_system, ParameterBox};

    fn grid(p: usize) -> ParameterGrid {
        ParameterGrid::new(ParameterBox::interval(-10.0, 10.0).unwrap(), vec![p]).unwrap()
    }

    #[test]
    fn constant_transfer_ignores_parameter() {
        let spec =
            TransferSpec::constant(DVector::from_vec(vec![1.0, 0.0]), DVector::zeros(2)).unwrap();
        assert_eq!(spec.initial(&[3.0]), DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(spec.target(&[-9.0]), DVector::zeros(2));
        assert!(TransferSpec::constant(DVector::zeros(2), DVector::zeros(3)).is_err());
    }

    #[test]
    fn identical_curves_give_null_transfer() {
        let sys = harmonic_oscillator_system();
        let g = grid(17);
        let spec =
            TransferSpec::curves(&sys, PlanarCurve::circle(1.0), PlanarCurve::circle(1.0), &g)
                .unwrap();
        for p in g.points() {
            assert_eq!(spec.initial(p), spec.target(p));
        }
    }

    #[test]
    fn curve_samples_follow_grid_order() {
        let sys = harmonic_oscillator_system();
        let g = grid(89);
        let star = PlanarCurve::star();
        let spec = TransferSpec::curves(&sys, star.clone(), PlanarCurve::leaf(), &g).unwrap();
        for j in 0..g.len() {
            let expected = star.point(j as f64 / 89.0);
            let got = spec.initial(g.point(j));
            assert_eq!(got.as_slice(), &expected);
        }
    }

    #[test]
    fn curves_need_planar_system() {
        let sys = random_timevarying_system(0);
        let g = ParameterGrid::new(
            ParameterBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![2, 2],
        )
        .unwrap();
        let err =
            TransferSpec::curves(&sys, PlanarCurve::star(), PlanarCurve::leaf(), &g).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
