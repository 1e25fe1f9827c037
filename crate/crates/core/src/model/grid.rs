use crate::error::{Error, Result};

/// Uniform time discretization `t_k = k·δ`, `k = 0..=N`, of `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    delta: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::invalid("number of time steps must be at least 1"));
        }
        let delta = horizon / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|k| k as f64 * delta).collect();
        nodes[steps] = horizon;
        Ok(Self {
            horizon,
            steps,
            delta,
            nodes,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `N`; there are `N + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }
}

/// Axis-aligned compact parameter set `K = Π [lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "parameter box bounds must be non-empty and of equal length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::invalid(format!(
                    "parameter axis {i}: need finite lower ≤ upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// One-dimensional box `[lower, upper]`.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Lebesgue measure of the non-degenerate projection; degenerate axes
    /// contribute a factor of one.
    pub fn measure(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.width(i))
            .filter(|&w| w > 0.0)
            .product()
    }
}

/// Midpoint tensor grid over a [`ParameterBox`].
///
/// Points are the centres of a uniform partition, flattened row-major (last
/// axis fastest). Every point carries the same quadrature weight
/// [`cell_measure`](Self::cell_measure).
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGrid {
    bounds: ParameterBox,
    counts: Vec<usize>,
    points: Vec<f64>,
    cell_measure: f64,
}

impl ParameterGrid {
    pub fn new(bounds: ParameterBox, counts: Vec<usize>) -> Result<Self> {
        let d = bounds.dim();
        if counts.len() != d {
            return Err(Error::invalid(format!(
                "parameter grid needs {d} per-axis counts, got {}",
                counts.len()
            )));
        }
        if let Some(axis) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!(
                "parameter axis {axis} has a zero point count"
            )));
        }

        let total: usize = counts.iter().product();
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let h = bounds.width(i) / counts[i] as f64;
                (0..counts[i])
                    .map(|c| bounds.lower[i] + (c as f64 + 0.5) * h)
                    .collect()
            })
            .collect();

        let mut points = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            points.extend(idx.iter().zip(&axes).map(|(&c, axis)| axis[c]));
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < counts[i] {
                    break;
                }
                idx[i] = 0;
            }
        }

        let cell_measure = (0..d)
            .map(|i| {
                let w = bounds.width(i);
                if w > 0.0 {
                    w / counts[i] as f64
                } else {
                    1.0
                }
            })
            .product();

        Ok(Self {
            bounds,
            counts,
            points,
            cell_measure,
        })
    }

    pub fn bounds(&self) -> &ParameterBox {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Total point count `P_total`.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.points[j * d..(j + 1) * d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim())
    }

    pub fn cell_measure(&self) -> f64 {
        self.cell_measure
    }

    /// Per-axis indices of the flattened point `j`.
    pub fn axis_indices(&self, j: usize) -> Vec<usize> {
        let mut rem = j;
        let mut idx = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            idx[i] = rem % self.counts[i];
            rem /= self.counts[i];
        }
        idx
    }

    /// Continuous extension of the flattened index: exactly `j` at point `j`,
    /// affine along each axis in between.
    pub fn fractional_index(&self, beta: &[f64]) -> f64 {
        let mut flat = 0.0;
        let mut stride = 1.0;
        for i in (0..self.dim()).rev() {
            let w = self.bounds.width(i);
            let c = self.counts[i] as f64;
            let local = if w > 0.0 {
                (beta[i] - self.bounds.lower[i]) / w * c - 0.5
            } else {
                0.0
            };
            flat += local * stride;
            stride *= c;
        }
        let nearest = flat.round();
        if (flat - nearest).abs() < 1e-9 {
            nearest
        } else {
            flat
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_quarter_steps() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.delta(), 0.25);
    }

    #[test]
    fn time_grid_experiment_scales() {
        let g = TimeGrid::new(1.0, 20000).unwrap();
        assert!((g.delta() - 5e-5).abs() < 1e-18);
        assert_eq!(g.nodes().len(), 20001);
        let g = TimeGrid::new(40.0, 20000).unwrap();
        assert!((g.delta() - 2e-3).abs() < 1e-16);
        assert_eq!(*g.nodes().last().unwrap(), 40.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn time_grid_rejects_bad_input() {
        assert!(matches!(
            TimeGrid::new(0.0, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            TimeGrid::new(-1.0, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            TimeGrid::new(f64::NAN, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            TimeGrid::new(1.0, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn midpoint_grid_on_interval() {
        let g = ParameterGrid::new(ParameterBox::interval(-10.0, 10.0).unwrap(), vec![4]).unwrap();
        let pts: Vec<f64> = g.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![-7.5, -2.5, 2.5, 7.5]);
        assert_eq!(g.cell_measure(), 5.0);
    }

    #[test]
    fn degenerate_axis_has_unit_weight() {
        let g = ParameterGrid::new(ParameterBox::interval(0.0, 0.0).unwrap(), vec![1]).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.point(0), &[0.0]);
        assert_eq!(g.cell_measure(), 1.0);
    }

    #[test]
    fn two_axis_grid_count_and_order() {
        let b = ParameterBox::new(vec![-0.01, -0.1], vec![0.01, 0.1]).unwrap();
        let g = ParameterGrid::new(b, vec![8, 13]).unwrap();
        assert_eq!(g.len(), 104);
        for j in 0..g.len() {
            assert_eq!(g.axis_indices(j), vec![j / 13, j % 13]);
        }
        // last axis varies fastest
        assert_eq!(g.point(0)[0], g.point(12)[0]);
        assert!(g.point(1)[1] > g.point(0)[1]);
        assert!(g.point(13)[0] > g.point(12)[0]);
        let total = g.cell_measure() * g.len() as f64;
        assert!((total - g.bounds().measure()).abs() <= 1e-12 * g.bounds().measure());
    }

    #[test]
    fn zero_count_rejected() {
        let b = ParameterBox::interval(0.0, 1.0).unwrap();
        assert!(matches!(
            ParameterGrid::new(b, vec![0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn inverted_box_rejected() {
        assert!(ParameterBox::interval(1.0, 0.0).is_err());
        assert!(ParameterBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn fractional_index_is_exact_on_points() {
        let b = ParameterBox::new(vec![-1.0, 0.0, 2.0], vec![1.0, 0.0, 5.0]).unwrap();
        let g = ParameterGrid::new(b, vec![3, 1, 4]).unwrap();
        for j in 0..g.len() {
            assert_eq!(g.fractional_index(g.point(j)), j as f64);
        }
    }
}
