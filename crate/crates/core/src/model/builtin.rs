//! Built-in ensembles.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::system::{Dynamics, LinearEnsembleSystem};
use crate::error::{Error, Result};

/// Planar harmonic oscillators with frequency `ω`, fully actuated:
/// `A(t,ω) = [[0, −ω], [ω, 0]]`, `B = I₂`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HarmonicOscillator;

impl Dynamics for HarmonicOscillator {
    fn fill_a(&self, _t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        let w = beta[0];
        out[(0, 0)] = 0.0;
        out[(0, 1)] = -w;
        out[(1, 0)] = w;
        out[(1, 1)] = 0.0;
    }

    fn fill_b(&self, _t: f64, _beta: &[f64], out: &mut DMatrix<f64>) {
        out.fill_with_identity();
    }
}

pub fn harmonic_oscillator_system() -> LinearEnsembleSystem {
    LinearEnsembleSystem::new("harmonic-oscillator", 2, 2, 1, HarmonicOscillator)
        .expect("static dimensions are valid")
}

/// Coefficients of the four-state, three-input, two-parameter ensemble
///
/// ```text
/// A(t, r, c) = A₀ + A₁ sin(2πt) + A₂ r
/// B(t, r, c) = B₀ + B₁ / (1 + t) + B₂ c
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct RandomCoefficients {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
}

impl RandomCoefficients {
    pub const STATES: usize = 4;
    pub const INPUTS: usize = 3;

    /// Standard-normal entries from `ChaCha8Rng::seed_from_u64(seed)`
    /// (`rand_chacha`) through `rand_distr::StandardNormal`. Draw order:
    /// `A₀, A₁, A₂, B₀, B₁, B₂`, each filled row by row.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| {
            let mut m = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    m[(i, j)] = StandardNormal.sample(&mut rng);
                }
            }
            m
        };
        let (n, m) = (Self::STATES, Self::INPUTS);
        let a0 = draw(n, n);
        let a1 = draw(n, n);
        let a2 = draw(n, n);
        let b0 = draw(n, m);
        let b1 = draw(n, m);
        let b2 = draw(n, m);
        Self {
            a0,
            a1,
            a2,
            b0,
            b1,
            b2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RandomTimeVarying {
    pub coefficients: RandomCoefficients,
}

impl Dynamics for RandomTimeVarying {
    fn fill_a(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        let c = &self.coefficients;
        let s = (2.0 * PI * t).sin();
        let r = beta[0];
        for (o, ((a0, a1), a2)) in out
            .iter_mut()
            .zip(c.a0.iter().zip(c.a1.iter()).zip(c.a2.iter()))
        {
            *o = a0 + a1 * s + a2 * r;
        }
    }

    fn fill_b(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        let c = &self.coefficients;
        let decay = 1.0 / (1.0 + t);
        let p = beta[1];
        for (o, ((b0, b1), b2)) in out
            .iter_mut()
            .zip(c.b0.iter().zip(c.b1.iter()).zip(c.b2.iter()))
        {
            *o = b0 + b1 * decay + b2 * p;
        }
    }
}

/// Random time-varying ensemble with parameters `β = (r, c)`; see
/// [`RandomCoefficients::from_seed`] for the generator.
pub fn random_timevarying_system(seed: u64) -> LinearEnsembleSystem {
    LinearEnsembleSystem::new(
        format!("random-timevarying(seed={seed})"),
        RandomCoefficients::STATES,
        RandomCoefficients::INPUTS,
        2,
        RandomTimeVarying {
            coefficients: RandomCoefficients::from_seed(seed),
        },
    )
    .expect("static dimensions are valid")
}

/// System given by matrix tables: coefficients tabulated at time knots,
/// linearly interpolated in time (constant outside the knot range), plus
/// terms affine in each parameter:
///
/// ```text
/// A(t, β) = A_tab(t) + Σᵢ βᵢ A_param[i]
/// B(t, β) = B_tab(t) + Σᵢ βᵢ B_param[i]
/// ```
#[derive(Clone, Debug)]
pub struct TabulatedSystem {
    times: Vec<f64>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    a_param: Vec<DMatrix<f64>>,
    b_param: Vec<DMatrix<f64>>,
}

impl TabulatedSystem {
    /// Empty `a_param`/`b_param` mean no parameter dependence; otherwise each
    /// must have one matrix per parameter axis.
    pub fn new(
        times: Vec<f64>,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        a_param: Vec<DMatrix<f64>>,
        b_param: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if times.is_empty() || a.len() != times.len() || b.len() != times.len() {
            return Err(Error::invalid(
                "tabulated system needs one A and one B table per time knot",
            ));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid(
                "time knots must be finite and strictly increasing",
            ));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        let a_ok = a.iter().chain(&a_param).all(|x| x.shape() == (n, n));
        let b_ok = b.iter().chain(&b_param).all(|x| x.shape() == (n, m));
        if n == 0 || m == 0 || !a_ok || !b_ok {
            return Err(Error::mismatch(format!(
                "all A tables must be {n}×{n} and all B tables {n}×{m}"
            )));
        }
        if !a_param.is_empty() && !b_param.is_empty() && a_param.len() != b_param.len() {
            return Err(Error::mismatch(
                "A and B parameter tables disagree on the parameter dimension",
            ));
        }
        Ok(Self {
            times,
            a,
            b,
            a_param,
            b_param,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b[0].ncols()
    }

    /// Parameter dimension implied by the tables (at least one).
    pub fn param_dim(&self) -> usize {
        self.a_param.len().max(self.b_param.len()).max(1)
    }

    pub fn into_system(self, label: impl Into<String>) -> Result<LinearEnsembleSystem> {
        let (n, m, d) = (self.state_dim(), self.input_dim(), self.param_dim());
        LinearEnsembleSystem::new(label, n, m, d, self)
    }

    fn interpolate(times: &[f64], tables: &[DMatrix<f64>], t: f64, out: &mut DMatrix<f64>) {
        let last = times.len() - 1;
        if t <= times[0] {
            out.copy_from(&tables[0]);
        } else if t >= times[last] {
            out.copy_from(&tables[last]);
        } else {
            let k = times.partition_point(|&x| x <= t) - 1;
            let theta = (t - times[k]) / (times[k + 1] - times[k]);
            for (o, (lo, hi)) in out
                .iter_mut()
                .zip(tables[k].iter().zip(tables[k + 1].iter()))
            {
                *o = lo + theta * (hi - lo);
            }
        }
    }

    fn add_params(params: &[DMatrix<f64>], beta: &[f64], out: &mut DMatrix<f64>) {
        for (p, &b) in params.iter().zip(beta) {
            out.zip_apply(p, |o, x| *o += b * x);
        }
    }
}

impl Dynamics for TabulatedSystem {
    fn fill_a(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        Self::interpolate(&self.times, &self.a, t, out);
        Self::add_params(&self.a_param, beta, out);
    }

    fn fill_b(&self, t: f64, beta: &[f64], out: &mut DMatrix<f64>) {
        Self::interpolate(&self.times, &self.b, t, out);
        Self::add_params(&self.b_param, beta, out);
    }
}
