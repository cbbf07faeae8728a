//! Disturbance distributions with bounded support.
//!
//! Two families are supported, both products of independent one-dimensional
//! marginals on known boxes:
//!
//! * `UniformBox`: uniform on a box `[a_1,b_1] x .. x [a_m,b_m]`.
//! * `TriangularProduct`: each axis has the symmetric triangular density
//!   `rho(t) = (1 - |t|/c) / c` on `[-c, c]`.
//!
//! Bounded support is load-bearing: the verifier needs a compact noise box for
//! interval images, and the quadrature rule needs finite axes. Expectation
//! grids fold the density into the weights, so every grid satisfies
//! `sum(w_k) = 1` and `E[g] ~= sum(w_k * g(theta_k))`.

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::quadrature::GaussLegendre;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    /// Uniform on the product box given by per-axis `[lo, hi]` pairs.
    UniformBox { support: Vec<[f64; 2]> },
    /// Per-axis symmetric triangular density on `[-half_width, half_width]`.
    TriangularProduct { half_widths: Vec<f64> },
}

/// Deterministic expectation rule: `E[g(theta)] ~= sum(w_k * g(theta_k))`.
#[derive(Clone, Debug)]
pub struct ExpectationGrid {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Disturbance {
    pub fn dim(&self) -> usize {
        match self {
            Disturbance::UniformBox { support } => support.len(),
            Disturbance::TriangularProduct { half_widths } => half_widths.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Disturbance::UniformBox { support } => {
                if support.is_empty() {
                    return Err(Error::invalid("disturbance must have dimension >= 1"));
                }
                for (j, [lo, hi]) in support.iter().enumerate() {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::invalid(format!(
                            "uniform support axis {} must satisfy lo < hi, got [{lo}, {hi}]",
                            j + 1
                        )));
                    }
                }
            }
            Disturbance::TriangularProduct { half_widths } => {
                if half_widths.is_empty() {
                    return Err(Error::invalid("disturbance must have dimension >= 1"));
                }
                for (j, c) in half_widths.iter().enumerate() {
                    if !(c.is_finite() && *c > 0.0) {
                        return Err(Error::invalid(format!(
                            "triangular half-width axis {} must be positive, got {c}",
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Support box as intervals, one per axis.
    pub fn support_box(&self) -> Vec<Interval> {
        match self {
            Disturbance::UniformBox { support } => {
                support.iter().map(|[lo, hi]| Interval::new(*lo, *hi)).collect()
            }
            Disturbance::TriangularProduct { half_widths } => {
                half_widths.iter().map(|c| Interval::new(-c, *c)).collect()
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            Disturbance::UniformBox { support } => support
                .iter()
                .map(|[lo, hi]| rng.random_range(*lo..*hi))
                .collect(),
            Disturbance::TriangularProduct { half_widths } => half_widths
                .iter()
                .map(|c| {
                    // Sum of two independent U[-c/2, c/2] is triangular on [-c, c].
                    let u1: f64 = rng.random_range(-0.5..0.5);
                    let u2: f64 = rng.random_range(-0.5..0.5);
                    c * (u1 + u2)
                })
                .collect(),
        }
    }

    /// Tensor-product expectation grid with `order` Gauss-Legendre nodes per
    /// smooth piece of each axis. The triangular density has a kink at 0, so
    /// its axes are split into `[-c, 0]` and `[0, c]` (2 * order nodes/axis);
    /// on each half the density is linear and the rule is exact for axis
    /// polynomials of degree `<= 2 * order - 2`.
    pub fn expectation_grid(&self, order: usize) -> Result<ExpectationGrid> {
        self.validate()?;
        let gl = GaussLegendre::new(order)?;
        let axes: Vec<Vec<(f64, f64)>> = match self {
            Disturbance::UniformBox { support } => support
                .iter()
                .map(|[lo, hi]| {
                    let density = 1.0 / (hi - lo);
                    gl.scaled_to(*lo, *hi)
                        .into_iter()
                        .map(|(t, w)| (t, w * density))
                        .collect()
                })
                .collect(),
            Disturbance::TriangularProduct { half_widths } => half_widths
                .iter()
                .map(|&c| {
                    let density = |t: f64| (1.0 - t.abs() / c) / c;
                    let mut pts = gl.scaled_to(-c, 0.0);
                    pts.extend(gl.scaled_to(0.0, c));
                    pts.into_iter().map(|(t, w)| (t, w * density(t))).collect()
                })
                .collect(),
        };
        let mut points = vec![Vec::new()];
        let mut weights = vec![1.0];
        for axis in &axes {
            let mut next_points = Vec::with_capacity(points.len() * axis.len());
            let mut next_weights = Vec::with_capacity(points.len() * axis.len());
            for (p, w) in points.iter().zip(&weights) {
                for &(t, wt) in axis {
                    let mut q = p.clone();
                    q.push(t);
                    next_points.push(q);
                    next_weights.push(w * wt);
                }
            }
            points = next_points;
            weights = next_weights;
        }
        Ok(ExpectationGrid { points, weights })
    }

    /// Composite variant: each smooth axis piece is first split into `panels`
    /// equal subintervals. Used by the value-iteration oracle, whose integrand
    /// is only piecewise smooth (multilinear interpolation has kinks).
    pub fn composite_expectation_grid(&self, panels: usize, order: usize) -> Result<ExpectationGrid> {
        if panels == 0 {
            return Err(Error::invalid("panel count must be >= 1"));
        }
        self.validate()?;
        let gl = GaussLegendre::new(order)?;
        let split = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
            let mut out = Vec::with_capacity(panels * order);
            for k in 0..panels {
                let a = lo + (hi - lo) * k as f64 / panels as f64;
                let b = lo + (hi - lo) * (k + 1) as f64 / panels as f64;
                out.extend(gl.scaled_to(a, b));
            }
            out
        };
        let axes: Vec<Vec<(f64, f64)>> = match self {
            Disturbance::UniformBox { support } => support
                .iter()
                .map(|[lo, hi]| {
                    let density = 1.0 / (hi - lo);
                    split(*lo, *hi).into_iter().map(|(t, w)| (t, w * density)).collect()
                })
                .collect(),
            Disturbance::TriangularProduct { half_widths } => half_widths
                .iter()
                .map(|&c| {
                    let density = |t: f64| (1.0 - t.abs() / c) / c;
                    let mut pts = split(-c, 0.0);
                    pts.extend(split(0.0, c));
                    pts.into_iter().map(|(t, w)| (t, w * density(t))).collect()
                })
                .collect(),
        };
        let mut points = vec![Vec::new()];
        let mut weights = vec![1.0];
        for axis in &axes {
            let mut next_points = Vec::with_capacity(points.len() * axis.len());
            let mut next_weights = Vec::with_capacity(points.len() * axis.len());
            for (p, w) in points.iter().zip(&weights) {
                for &(t, wt) in axis {
                    let mut q = p.clone();
                    q.push(t);
                    next_points.push(q);
                    next_weights.push(w * wt);
                }
            }
            points = next_points;
            weights = next_weights;
        }
        Ok(ExpectationGrid { points, weights })
    }
}

impl ExpectationGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn expect(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * g(p))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grids_have_unit_mass() {
        let u = Disturbance::UniformBox { support: vec![[-10.0, 10.0], [0.0, 3.0]] };
        let t = Disturbance::TriangularProduct { half_widths: vec![1.0, 0.25] };
        for order in [1, 2, 4, 8] {
            assert_abs_diff_eq!(u.expectation_grid(order).unwrap().total_weight(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(t.expectation_grid(order).unwrap().total_weight(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            t.composite_expectation_grid(7, 3).unwrap().total_weight(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn uniform_second_moment() {
        // E[(x + theta)^2] at x = 0 with theta ~ U[-1, 1] is 1/3.
        let u = Disturbance::UniformBox { support: vec![[-1.0, 1.0]] };
        let g = u.expectation_grid(8).unwrap();
        assert_abs_diff_eq!(g.expect(|t| t[0] * t[0]), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn triangular_second_moment() {
        // E[(x + theta)^2] at x = 0 with theta triangular on [-1, 1] is 1/6.
        let t = Disturbance::TriangularProduct { half_widths: vec![1.0] };
        let g = t.expectation_grid(8).unwrap();
        assert_abs_diff_eq!(g.expect(|t| t[0] * t[0]), 1.0 / 6.0, epsilon = 1e-12);
        // Already exact at low order: density * t^2 is cubic per half.
        let g3 = t.expectation_grid(3).unwrap();
        assert_abs_diff_eq!(g3.expect(|t| t[0] * t[0]), 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn product_moments_factorize() {
        let t = Disturbance::TriangularProduct { half_widths: vec![1.0, 2.0] };
        let g = t.expectation_grid(6).unwrap();
        // Independent axes: E[t1^2 * t2^2] = (1/6) * (4/6).
        assert_abs_diff_eq!(
            g.expect(|t| t[0] * t[0] * t[1] * t[1]),
            (1.0 / 6.0) * (4.0 / 6.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(g.expect(|t| t[0]), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn sampling_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = Disturbance::TriangularProduct { half_widths: vec![1.0] };
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let s = t.sample(&mut rng)[0];
            assert!((-1.0..=1.0).contains(&s));
            sum += s;
            sum_sq += s * s;
        }
        // Var = 1/6; tolerances are ~6 standard errors.
        assert_abs_diff_eq!(sum / n as f64, 0.0, epsilon = 6.0 * (1.0f64 / 6.0 / n as f64).sqrt());
        assert_abs_diff_eq!(sum_sq / n as f64, 1.0 / 6.0, epsilon = 3e-3);

        let u = Disturbance::UniformBox { support: vec![[-10.0, 10.0]] };
        let mut sum = 0.0;
        for _ in 0..n {
            let s = u.sample(&mut rng)[0];
            assert!((-10.0..=10.0).contains(&s));
            sum += s;
        }
        assert_abs_diff_eq!(sum / n as f64, 0.0, epsilon = 6.0 * (100.0f64 / 3.0 / n as f64).sqrt());
    }

    #[test]
    fn validation_rejects_degenerate_supports() {
        assert!(Disturbance::UniformBox { support: vec![[1.0, 1.0]] }.validate().is_err());
        assert!(Disturbance::UniformBox { support: vec![] }.validate().is_err());
        assert!(Disturbance::TriangularProduct { half_widths: vec![0.0] }.validate().is_err());
        assert!(Disturbance::TriangularProduct { half_widths: vec![1.0, -2.0] }
            .validate()
            .is_err());
    }

    #[test]
    fn serde_round_trip() {
        let d = Disturbance::TriangularProduct { half_widths: vec![1.0, 0.5] };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Disturbance>(&s).unwrap(), d);
        let u: Disturbance = serde_json::from_str(
            r#"{"kind":"uniform_box","support":[[-10.0,10.0]]}"#,
        )
        .unwrap();
        assert_eq!(u.dim(), 1);
    }
}
