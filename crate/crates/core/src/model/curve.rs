use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

/// Closed planar curve parameterized over `s ∈ [0, 1)`, one-periodic.
#[derive(Clone)]
pub struct PlanarCurve {
    name: String,
    f: Arc<dyn Fn(f64) -> [f64; 2] + Send + Sync>,
}

impl fmt::Debug for PlanarCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("PlanarCurve").field(&self.name).finish()
    }
}

impl PlanarCurve {
    pub fn from_fn(
        name: impl Into<String>,
        f: impl Fn(f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        (self.f)(s)
    }

    /// Curves available by name: `circle`, `star`, `leaf`.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "circle" => Some(Self::circle(1.0)),
            "star" => Some(Self::star()),
            "leaf" => Some(Self::leaf()),
            _ => None,
        }
    }

    pub fn circle(radius: f64) -> Self {
        Self::from_fn("circle", move |s| {
            let th = 2.0 * PI * s;
            [radius * th.cos(), radius * th.sin()]
        })
    }

    /// Smoothed five-pointed star centred at the origin, tips at radius 1,
    /// notches at radius 0.4, first tip pointing up:
    ///
    /// ```text
    /// θ = π/2 + 2πs,   r = 0.4 + 0.6 · ((1 + cos 5(θ − π/2)) / 2)³
    /// ```
    pub fn star() -> Self {
        Self::from_fn("star", |s| {
            let phase = 2.0 * PI * s;
            let th = FRAC_PI_2 + phase;
            let lobe = 0.5 * (1.0 + (5.0 * phase).cos());
            let r = 0.4 + 0.6 * lobe.powi(3);
            [r * th.cos(), r * th.sin()]
        })
    }

    /// Leaf outline: a cardioid opening upward, modulated by six lobes, with
    /// the stem cusp at `s = 0`:
    ///
    /// ```text
    /// θ = −π/2 + 2πs,   r = 0.5 · (1 + sin θ) · (1 + 0.25 cos 6(θ − π/2))
    /// (x, y) = (r cos θ, r sin θ − 0.6)
    /// ```
    pub fn leaf() -> Self {
        Self::from_fn("leaf", |s| {
            let th = -FRAC_PI_2 + 2.0 * PI * s;
            let r = 0.5 * (1.0 + th.sin()) * (1.0 + 0.25 * (6.0 * (th - FRAC_PI_2)).cos());
            [r * th.cos(), r * th.sin() - 0.6]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotate(p: [f64; 2], angle: f64) -> [f64; 2] {
        let (s, c) = angle.sin_cos();
        [c * p[0] - s * p[1], s * p[0] + c * p[1]]
    }

    #[test]
    fn star_has_fivefold_symmetry() {
        let star = PlanarCurve::star();
        for i in 0..200 {
            let s = i as f64 / 200.0;
            let p = rotate(star.point(s), 2.0 * PI / 5.0);
            let q = star.point(s + 0.2);
            assert!(
                (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12,
                "s={s}"
            );
        }
        // tips and notches
        let tip = star.point(0.0);
        assert!((tip[0]).abs() < 1e-15 && (tip[1] - 1.0).abs() < 1e-15);
        let notch = star.point(0.1);
        assert!(((notch[0].powi(2) + notch[1].powi(2)).sqrt() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn builtin_curves_are_closed() {
        for name in ["circle", "star", "leaf"] {
            let c = PlanarCurve::builtin(name).unwrap();
            let a = c.point(0.0);
            let b = c.point(1.0);
            assert!(
                (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12,
                "{name}"
            );
            // every sample finite and bounded
            for i in 0..89 {
                let p = c.point(i as f64 / 89.0);
                assert!(p.iter().all(|x| x.is_finite() && x.abs() < 2.0));
            }
        }
        assert!(PlanarCurve::builtin("maple").is_none());
    }

    #[test]
    fn leaf_stem_is_a_cusp() {
        let leaf = PlanarCurve::leaf();
        let stem = leaf.point(0.0);
        assert!(stem[0].abs() < 1e-15 && (stem[1] + 0.6).abs() < 1e-15);
    }
}
