use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Coefficient evaluators of an ensemble `dX/dt = A(t,β) X + B(t,β) u`.
///
/// Implementations must be pure: equal `(t, β)` give bitwise-equal output.
/// `out` arrives with the declared shape (`n×n` for `A`, `n×m` for `B`) and
/// every entry must be overwritten.
pub trait Dynamics: Send + Sync {
    fn fill_a(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>);
    fn fill_b(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>);
}

/// Adapter for plain closures returning freshly allocated matrices.
struct FnDynamics<FA, FB> {
    a: FA,
    b: FB,
}

impl<FA, FB> Dynamics for FnDynamics<FA, FB>
where
    FA: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync,
    FB: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync,
{
    fn fill_a(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        let a = (self.a)(t, beta);
        assert_eq!(a.shape(), out.shape(), "A(t, β) returned the wrong shape");
        out.copy_from(&a);
    }

    fn fill_b(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        let b = (self.b)(t, beta);
        assert_eq!(b.shape(), out.shape(), "B(t, β) returned the wrong shape");
        out.copy_from(&b);
    }
}

/// A parameterized family of linear time-varying systems with state
/// dimension `n`, input dimension `m` and parameter dimension `d`.
///
/// Cloning is cheap; the evaluators are shared.
#[derive(Clone)]
pub struct LinearEnsembleSystem {
    label: String,
    n: usize,
    m: usize,
    d: usize,
    dynamics: Arc<dyn Dynamics>,
}

impl fmt::Debug for LinearEnsembleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearEnsembleSystem")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("d", &self.d)
            .finish_non_exhaustive()
    }
}

impl LinearEnsembleSystem {
    pub fn new(
        label: impl Into<String>,
        n: usize,
        m: usize,
        d: usize,
        dynamics: impl Dynamics + 'static,
    ) -> Result<Self> {
        if n == 0 || m == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "system dimensions must be positive, got n={n}, m={m}, d={d}"
            )));
        }
        Ok(Self {
            label: label.into(),
            n,
            m,
            d,
            dynamics: Arc::new(dynamics),
        })
    }

    /// Builds a system from closures. Shape violations panic at evaluation.
    pub fn from_fns<FA, FB>(
        label: impl Into<String>,
        n: usize,
        m: usize,
        d: usize,
        a: FA,
        b: FB,
    ) -> Result<Self>
    where
        FA: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        FB: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::new(label, n, m, d, FnDynamics { a, b })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn param_dim(&self) -> usize {
        self.d
    }

    pub fn eval_a(&self, t: f64, beta: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        self.fill_a(t, beta, &mut out);
        out
    }

    pub fn eval_b(&self, t: f64, beta: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.m);
        self.fill_b(t, beta, &mut out);
        out
    }

    /// Allocation-free variant of [`eval_a`](Self::eval_a) for inner loops.
    #[inline]
    pub fn fill_a(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        debug_assert_eq!(beta.len(), self.d);
        debug_assert_eq!(out.shape(), (self.n, self.n));
        self.dynamics.fill_a(t, beta, out);
    }

    #[inline]
    pub fn fill_b(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        debug_assert_eq!(beta.len(), self.d);
        debug_assert_eq!(out.shape(), (self.n, self.m));
        self.dynamics.fill_b(t, beta, out);
    }

    pub(crate) fn check_param_dim(&self, d: usize) -> Result<()> {
        if d != self.d {
            return Err(Error::mismatch(format!(
                "system `{}` has parameter dimension {}, grid has {d}",
                self.label, self.d
            )));
        }
        Ok(())
    }
}
