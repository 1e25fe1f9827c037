//! Truncated-SVD synthesis of the minimum-norm control.
//!
//! With `W = Σ s_j ū_j v̄_jᵀ`, the minimum-norm solution of `W ĝ = ξ̂`
//! restricted to the `J` leading singular triples is
//!
//! ```text
//! ĝ* = Σ_{j ≤ J} (ū_jᵀ ξ̂ / s_j) v̄_j
//! ```
//!
//! `J` is the largest index with `s_1 / s_J < ratio_cap` (default `10⁴`),
//! clamped to `m · P_total`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::TimeGrid;
use crate::operator::{OperatorMatrix, TargetVector};

/// Default conditioning cap for [`choose_truncation`].
pub const DEFAULT_RATIO_CAP: f64 = 1e4;

/// Thin SVD of `W` restricted to its numerically nonzero singular values.
#[derive(Clone, Debug)]
pub struct SingularSystemApprox {
    singular_values: Vec<f64>,
    /// `ū_j` as columns, length `n·P_total`.
    left: DMatrix<f64>,
    /// `v̄_j` as columns, length `m·N`.
    right: DMatrix<f64>,
}

impl SingularSystemApprox {
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn left_vectors(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right_vectors(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// Count of singular values kept by the decomposition.
    pub fn rank_bound(&self) -> usize {
        self.singular_values.len()
    }
}

const SVD_EPS: f64 = f64::EPSILON;
const SVD_MAX_ITER: usize = 0;

fn svd_of(matrix: DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let svd = nalgebra::SVD::try_new(matrix, true, true, SVD_EPS, SVD_MAX_ITER)
        .ok_or_else(|| Error::Decomposition("SVD iteration did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    Ok((u, svd.singular_values, v))
}

/// Thin SVD with singular values in descending order.
///
/// Wide matrices (the usual case, `n·P_total ≪ m·N`) are first reduced by a
/// QR factorization `Wᵀ = Q R`, so the SVD iteration runs on the small
/// square factor: `W = Rᵀ Qᵀ = U_r S (Q V_r)ᵀ`.
pub fn compute_svd(w: &OperatorMatrix) -> Result<SingularSystemApprox> {
    let mat = w.matrix();
    let (rows, cols) = mat.shape();
    if rows == 0 || cols == 0 {
        return Ok(SingularSystemApprox {
            singular_values: Vec::new(),
            left: DMatrix::zeros(rows, 0),
            right: DMatrix::zeros(cols, 0),
        });
    }

    let (u, s, v) = if cols > rows {
        let qr = mat.transpose().qr();
        let q = qr.q();
        let r = qr.r();
        let (u, s, vr) = svd_of(r.transpose())?;
        (u, s, q * vr)
    } else {
        svd_of(mat.clone())?
    };

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let s_max = order.first().map_or(0.0, |&i| s[i]);
    let cutoff = rows.max(cols) as f64 * f64::EPSILON * s_max;
    let kept: Vec<usize> = order
        .into_iter()
        .take_while(|&i| s[i] > cutoff && s[i] > 0.0)
        .collect();

    let singular_values = kept.iter().map(|&i| s[i]).collect();
    let left = u.select_columns(&kept);
    let right = v.select_columns(&kept);
    Ok(SingularSystemApprox {
        singular_values,
        left,
        right,
    })
}

/// Largest `J` with `s_1 / s_J < ratio_cap`, clamped to `hard_cap`.
///
/// Returns zero only for an empty spectrum.
pub fn choose_truncation(
    singular_values: &[f64],
    ratio_cap: f64,
    hard_cap: Option<usize>,
) -> usize {
    let Some(&s1) = singular_values.first() else {
        return 0;
    };
    let j = singular_values
        .iter()
        .take_while(|&&s| s1 / s < ratio_cap)
        .count()
        .max(1);
    hard_cap.map_or(j, |cap| j.min(cap.max(1)))
}

/// The discrete analogue of `q ≤ P`: at most `m · P_total` retained values.
pub fn default_hard_cap(w: &OperatorMatrix) -> usize {
    w.input_dim() * w.points()
}

/// Synthesized control `û*(t_k)`, `k = 1..=N`.
///
/// Evaluation between nodes is piecewise linear; on `[0, t_1]` the first
/// sample is held constant.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    /// Row `k − 1` holds `û*(t_k)`.
    samples: DMatrix<f64>,
    tgrid: TimeGrid,
}

impl ControlSignal {
    pub fn new(samples: DMatrix<f64>, tgrid: TimeGrid) -> Result<Self> {
        if samples.nrows() != tgrid.steps() || samples.ncols() == 0 {
            return Err(Error::mismatch(format!(
                "control has {} samples of width {}, time grid has {} steps",
                samples.nrows(),
                samples.ncols(),
                tgrid.steps()
            )));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("control samples must be finite"));
        }
        Ok(Self { samples, tgrid })
    }

    pub fn zeros(inputs: usize, tgrid: TimeGrid) -> Self {
        Self {
            samples: DMatrix::zeros(tgrid.steps(), inputs),
            tgrid,
        }
    }

    /// Unstacks `ĝ` (length `m·N`, node-major) into per-node samples.
    pub fn from_stacked(stacked: &DVector<f64>, inputs: usize, tgrid: TimeGrid) -> Result<Self> {
        if inputs == 0 || stacked.len() != inputs * tgrid.steps() {
            return Err(Error::mismatch(format!(
                "stacked control of length {} does not match {} inputs × {} steps",
                stacked.len(),
                inputs,
                tgrid.steps()
            )));
        }
        let samples = DMatrix::from_row_slice(tgrid.steps(), inputs, stacked.as_slice());
        Self::new(samples, tgrid)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn input_dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Node-major stacking, the column layout of the operator matrix.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_column_slice(self.samples.transpose().as_slice())
    }

    /// Writes `u(t)` into `out`; `t` outside `[0, T]` is clamped.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let steps = self.tgrid.steps();
        let delta = self.tgrid.delta();
        let k = (t / delta).floor();
        if k.is_nan() || k < 1.0 {
            out.copy_from_slice(self.row(1).as_slice());
            return;
        }
        let k = k as usize;
        if k >= steps {
            out.copy_from_slice(self.row(steps).as_slice());
            return;
        }
        let theta = ((t - self.tgrid.node(k)) / delta).clamp(0.0, 1.0);
        let (lo, hi) = (self.row(k), self.row(k + 1));
        for (o, (a, b)) in out.iter_mut().zip(lo.iter().zip(hi.iter())) {
            *o = a + theta * (b - a);
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.input_dim());
        self.eval_into(t, out.as_mut_slice());
        out
    }

    /// Sample at node `k ∈ 1..=N`.
    fn row(&self, k: usize) -> nalgebra::DVector<f64> {
        self.samples.row(k - 1).transpose()
    }

    /// Riemann-sum approximation of the `L₂[0,T]` norm, `√(δ Σ_k |û_k|²)`.
    pub fn l2_norm(&self) -> f64 {
        (self.tgrid.delta() * self.samples.norm_squared()).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisReport {
    /// Number of retained singular triples `J`.
    pub truncation_count: usize,
    /// Input dimension `m`, so that `J / m` can be read as a per-channel count.
    pub inputs: usize,
    /// `s_1 / s_J`; `None` when nothing was retained.
    pub condition_ratio: Option<f64>,
    pub singular_values: Vec<f64>,
    /// `ū_jᵀ ξ̂` for every retained-by-decomposition `j`.
    pub coefficients: Vec<f64>,
    /// Running `Σ_{i ≤ j} (ū_iᵀ ξ̂)² / s_i²`.
    pub picard_partial_sums: Vec<f64>,
    /// `‖W ĝ* − ξ̂‖`.
    pub residual_norm: f64,
    /// `‖(I − U Uᵀ) ξ̂‖`: the part of `ξ̂` outside the computed range.
    pub out_of_range_norm: f64,
    pub target_norm: f64,
}

impl SynthesisReport {
    /// `⌈J / m⌉`, the retained count per input channel.
    pub fn per_channel_count(&self) -> usize {
        self.truncation_count.div_ceil(self.inputs)
    }

    /// Residual predicted from the spectrum:
    /// `√(Σ_{j>J} (ū_jᵀξ̂)² + ‖(I − UUᵀ)ξ̂‖²)`.
    pub fn predicted_residual(&self) -> f64 {
        let discarded: f64 = self.coefficients[self.truncation_count..]
            .iter()
            .map(|c| c * c)
            .sum();
        (discarded + self.out_of_range_norm.powi(2)).sqrt()
    }
}

pub fn synthesize_control(
    w: &OperatorMatrix,
    svd: &SingularSystemApprox,
    xi: &TargetVector,
    truncation: usize,
    tgrid: &TimeGrid,
) -> Result<(ControlSignal, SynthesisReport)> {
    let mat = w.matrix();
    if xi.vector().len() != mat.nrows() {
        return Err(Error::mismatch(format!(
            "target has length {}, operator has {} rows",
            xi.vector().len(),
            mat.nrows()
        )));
    }
    if svd.left.nrows() != mat.nrows() || svd.right.nrows() != mat.ncols() {
        return Err(Error::mismatch(
            "singular system does not belong to this operator",
        ));
    }
    if w.steps() != tgrid.steps() {
        return Err(Error::mismatch(format!(
            "operator has {} time blocks, time grid has {} steps",
            w.steps(),
            tgrid.steps()
        )));
    }
    if truncation > svd.rank_bound() {
        return Err(Error::invalid(format!(
            "truncation {truncation} exceeds the {} available singular values",
            svd.rank_bound()
        )));
    }

    let target = xi.vector();
    let coefficients: Vec<f64> = svd.left.tr_mul(target).iter().copied().collect();
    let s = &svd.singular_values;

    let weights = DVector::from_iterator(
        truncation,
        coefficients[..truncation].iter().zip(s).map(|(c, s)| c / s),
    );
    let stacked = svd.right.columns(0, truncation) * weights;

    let mut running = 0.0;
    let picard_partial_sums = coefficients
        .iter()
        .zip(s)
        .map(|(c, s)| {
            running += (c / s).powi(2);
            running
        })
        .collect();

    let residual_norm = (mat * &stacked - target).norm();
    let in_range = &svd.left * DVector::from_column_slice(&coefficients);
    let out_of_range_norm = (target - in_range).norm();

    let report = SynthesisReport {
        truncation_count: truncation,
        inputs: w.input_dim(),
        condition_ratio: (truncation > 0).then(|| s[0] / s[truncation - 1]),
        singular_values: s.clone(),
        coefficients,
        picard_partial_sums,
        residual_norm,
        out_of_range_norm,
        target_norm: target.norm(),
    };
    let control = ControlSignal::from_stacked(&stacked, w.input_dim(), tgrid.clone())?;
    Ok((control, report))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardRow {
    pub index: usize,
    pub singular_value: f64,
    pub coefficient: f64,
    pub partial_sum: f64,
}

/// Coefficient-decay table `(j, s_j, |ū_jᵀξ̂|, Σ_{i≤j} (ū_iᵀξ̂)²/s_i²)`,
/// one-based. Purely diagnostic: no controllability verdict is drawn.
pub fn picard_diagnostic(report: &SynthesisReport) -> Vec<PicardRow> {
    report
        .singular_values
        .iter()
        .zip(&report.coefficients)
        .zip(&report.picard_partial_sums)
        .enumerate()
        .map(|(i, ((&s, &c), &p))| PicardRow {
            index: i + 1,
            singular_value: s,
            coefficient: c.abs(),
            partial_sum: p,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn operator(
        data: DMatrix<f64>,
        n: usize,
        m: usize,
        steps: usize,
    ) -> (OperatorMatrix, TimeGrid) {
        let tgrid = TimeGrid::new(1.0, steps).unwrap();
        (
            OperatorMatrix::from_dense(data, n, m, tgrid.delta()).unwrap(),
            tgrid,
        )
    }

    #[test]
    fn truncation_rule() {
        assert_eq!(choose_truncation(&[1.0, 1e-1, 1e-5], 1e4, None), 2);
        assert_eq!(choose_truncation(&[1.0, 1.0, 1.0], 1e4, None), 3);
        assert_eq!(choose_truncation(&[1.0, 1.0, 1.0], 1e4, Some(2)), 2);
        assert_eq!(choose_truncation(&[5.0, 1e-3], 1e4, None), 2);
        // s_1/s_J must be strictly below the cap
        assert_eq!(choose_truncation(&[1.0, 1e-4], 1e4, None), 1);
        assert_eq!(choose_truncation(&[], 1e4, None), 0);
        assert_eq!(choose_truncation(&[2.0], 1e4, Some(0)), 1);
    }

    #[test]
    fn zero_operator_has_empty_spectrum() {
        let (w, tg) = operator(DMatrix::zeros(2, 6), 1, 1, 6);
        let svd = compute_svd(&w).unwrap();
        assert_eq!(svd.rank_bound(), 0);
        let xi = TargetVector::from_vector(DVector::from_vec(vec![1.0, 2.0]), 1).unwrap();
        let (u, report) = synthesize_control(&w, &svd, &xi, 0, &tg).unwrap();
        assert_eq!(u.samples(), &DMatrix::zeros(6, 1));
        assert_eq!(report.condition_ratio, None);
    }

    #[test]
    fn constant_row_singular_value() {
        let steps = 16;
        let tg = TimeGrid::new(2.0, steps).unwrap();
        let w = OperatorMatrix::from_dense(
            DMatrix::from_element(1, steps, tg.delta()),
            1,
            1,
            tg.delta(),
        )
        .unwrap();
        let svd = compute_svd(&w).unwrap();
        assert_eq!(svd.rank_bound(), 1);
        let expected = 2.0 / (steps as f64).sqrt();
        assert!((svd.singular_values()[0] - expected).abs() < 1e-14);
        // minimum-norm solution of a row of δ's is the constant ξ / T
        let xi = TargetVector::from_vector(DVector::from_vec(vec![3.0]), 1).unwrap();
        let (u, report) = synthesize_control(&w, &svd, &xi, 1, &tg).unwrap();
        assert!(u.samples().iter().all(|&x| (x - 1.5).abs() < 1e-13));
        assert!(report.residual_norm < 1e-13);
    }

    #[test]
    fn control_interpolation() {
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let samples = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, -1.0, 4.0, 0.0, 0.0, 8.0]);
        let u = ControlSignal::new(samples, tg).unwrap();
        assert_eq!(u.eval(0.0).as_slice(), &[1.0, 0.0]);
        assert_eq!(u.eval(0.1).as_slice(), &[1.0, 0.0]);
        assert_eq!(u.eval(0.25).as_slice(), &[1.0, 0.0]);
        assert_eq!(u.eval(0.375).as_slice(), &[1.5, -0.5]);
        assert_eq!(u.eval(0.5).as_slice(), &[2.0, -1.0]);
        assert_eq!(u.eval(0.875).as_slice(), &[2.0, 4.0]);
        assert_eq!(u.eval(1.0).as_slice(), &[0.0, 8.0]);
        assert_eq!(u.eval(3.0).as_slice(), &[0.0, 8.0]);
        assert_eq!(
            u.stacked().as_slice(),
            &[1.0, 0.0, 2.0, -1.0, 4.0, 0.0, 0.0, 8.0]
        );
    }

    #[test]
    fn control_shape_checked() {
        let tg = TimeGrid::new(1.0, 4).unwrap();
        assert!(ControlSignal::new(DMatrix::zeros(3, 2), tg.clone()).is_err());
        assert!(ControlSignal::new(DMatrix::from_element(4, 1, f64::NAN), tg.clone()).is_err());
        assert!(ControlSignal::from_stacked(&DVector::zeros(7), 2, tg).is_err());
    }

    #[test]
    fn picard_table_for_leading_direction() {
        let data = DMatrix::from_row_slice(2, 4, &[3.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let (w, tg) = operator(data, 1, 1, 4);
        let svd = compute_svd(&w).unwrap();
        let s1 = svd.singular_values()[0];
        let u1 = svd.left_vectors().column(0) * s1;
        let xi = TargetVector::from_vector(u1.into_owned(), 1).unwrap();
        let (_, report) = synthesize_control(&w, &svd, &xi, 2, &tg).unwrap();
        let table = picard_diagnostic(&report);
        assert_eq!(table.len(), 2);
        assert!((table[0].partial_sum - 1.0).abs() < 1e-14);
        assert!((table[0].coefficient - s1).abs() < 1e-14);
        assert!(table[1].coefficient < 1e-14);
        assert_eq!(table[0].index, 1);
    }

    #[test]
    fn target_outside_range_has_no_coefficients() {
        let data = DMatrix::from_row_slice(
            3,
            4,
            &[1.0, 2.0, 0.0, 0.0, 0.5, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        let (w, tg) = operator(data, 1, 1, 4);
        let svd = compute_svd(&w).unwrap();
        assert_eq!(svd.rank_bound(), 2);
        let xi = TargetVector::from_vector(DVector::from_vec(vec![0.0, 0.0, 2.0]), 1).unwrap();
        let (u, report) = synthesize_control(&w, &svd, &xi, 2, &tg).unwrap();
        assert!(report.coefficients.iter().all(|c| c.abs() <= 1e-10 * 2.0));
        assert!(u.samples().amax() < 1e-10);
        assert!((report.out_of_range_norm - 2.0).abs() < 1e-12);
        assert!((report.residual_norm - 2.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_beyond_spectrum_rejected() {
        let (w, tg) = operator(DMatrix::identity(2, 4), 1, 1, 4);
        let svd = compute_svd(&w).unwrap();
        let xi = TargetVector::from_vector(DVector::zeros(2), 1).unwrap();
        assert!(synthesize_control(&w, &svd, &xi, 3, &tg).is_err());
    }
}
