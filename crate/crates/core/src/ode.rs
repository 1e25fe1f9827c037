//! Dormand–Prince 5(4) explicit integrator with embedded error control.
//!
//! The local error estimate is accepted when every component satisfies
//! `|err_i| ≤ abs_tol + rel_tol · max(|y_i|, |y_new_i|)`.

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order minus fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_STEPS: u64 = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct StepFailure {
    pub t: f64,
    pub reason: String,
}

pub(crate) struct Dopri5<F> {
    rhs: F,
    tol: Tolerances,
    t: f64,
    y: Vec<f64>,
    /// Step size proposed by the controller; zero until first use.
    h: f64,
    steps: u64,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    fsal: bool,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(rhs: F, t0: f64, y0: &[f64], tol: Tolerances) -> Self {
        let dim = y0.len();
        Self {
            rhs,
            tol,
            t: t0,
            y: y0.to_vec(),
            h: tol.initial_step.unwrap_or(0.0),
            steps: 0,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
            fsal: false,
        }
    }

    #[cfg(test)]
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    fn scale(&self, i: usize, other: f64) -> f64 {
        self.tol.abs + self.tol.rel * self.y[i].abs().max(other.abs())
    }

    /// Hairer–Nørsett–Wanner starting step heuristic.
    fn initial_step(&mut self, span: f64) -> f64 {
        let dim = self.y.len().max(1) as f64;
        let t = self.t;
        (self.rhs)(t, &self.y, &mut self.k[0]);
        self.fsal = true;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.scale(i, self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k[0][i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / dim).sqrt(), (d1 / dim).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(span);
        for i in 0..self.y.len() {
            self.stage[i] = self.y[i] + h0 * self.k[0][i];
        }
        (self.rhs)(t + h0, &self.stage, &mut self.k[1]);
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.scale(i, self.y[i]);
            d2 += ((self.k[1][i] - self.k[0][i]) / sc).powi(2);
        }
        let d2 = (d2 / dim).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    /// Attempts one step of size `h`; returns the scaled error norm.
    fn try_step(&mut self, h: f64) -> f64 {
        let t = self.t;
        let n = self.y.len();
        if !self.fsal {
            (self.rhs)(t, &self.y, &mut self.k[0]);
            self.fsal = true;
        }
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let (y, s) = (&self.y, &mut self.stage);

        for i in 0..n {
            s[i] = y[i] + h * A21 * k1[i];
        }
        (self.rhs)(t + C2 * h, s, k2);
        for i in 0..n {
            s[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        (self.rhs)(t + C3 * h, s, k3);
        for i in 0..n {
            s[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        (self.rhs)(t + C4 * h, s, k4);
        for i in 0..n {
            s[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        (self.rhs)(t + C5 * h, s, k5);
        for i in 0..n {
            s[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        (self.rhs)(t + h, s, k6);
        for i in 0..n {
            self.y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        (self.rhs)(t + h, &self.y_new, k7);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.tol.abs + self.tol.rel * y[i].abs().max(self.y_new[i].abs());
            let ratio = e.abs() / sc;
            if !ratio.is_finite() || !self.y_new[i].is_finite() {
                return f64::INFINITY;
            }
            err = err.max(ratio);
        }
        err
    }

    /// Integrates adaptively until `t_end` and lands on it exactly.
    pub fn advance_to(&mut self, t_end: f64) -> Result<(), StepFailure> {
        let span = t_end - self.t;
        if span < 0.0 {
            return Err(StepFailure {
                t: self.t,
                reason: format!("cannot integrate backwards to {t_end}"),
            });
        }
        if span <= 4.0 * f64::EPSILON * t_end.abs().max(self.t.abs()) {
            self.t = t_end;
            return Ok(());
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(span);
        }
        if let Some(cap) = self.tol.max_step {
            self.h = self.h.min(cap);
        }

        loop {
            let remaining = t_end - self.t;
            let landing = self.h >= remaining;
            let h = if landing { remaining } else { self.h };
            let min_h = 16.0 * f64::EPSILON * self.t.abs().max(t_end.abs()).max(1.0);
            if h < min_h && !landing {
                return Err(StepFailure {
                    t: self.t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            self.steps += 1;
            if self.steps > MAX_STEPS {
                return Err(StepFailure {
                    t: self.t,
                    reason: format!("exceeded {MAX_STEPS} steps"),
                });
            }

            let err = self.try_step(h);
            if err <= 1.0 {
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k.swap(0, 6);
                self.t = if landing { t_end } else { self.t + h };
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // A short landing step should not shrink the next proposal.
                self.h = (h * factor).max(if landing { self.h } else { 0.0 });
                if let Some(cap) = self.tol.max_step {
                    self.h = self.h.min(cap);
                }
                if landing {
                    return Ok(());
                }
            } else {
                let factor = if err.is_finite() {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
                } else {
                    MIN_FACTOR
                };
                self.h = h * factor;
                if self.h < min_h {
                    return Err(StepFailure {
                        t: self.t,
                        reason: if err.is_finite() {
                            format!("step size underflow (h = {:e})", self.h)
                        } else {
                            "solution became non-finite".to_string()
                        },
                    });
                }
            }
        }
    }
}
