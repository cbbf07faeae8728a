//! Gauss-Legendre quadrature on `[-1, 1]`.
//!
//! Nodes are roots of the Legendre polynomial `P_q`, found by Newton iteration
//! from the Chebyshev-based initial guess; weights `w_k = 2 / ((1 - x_k^2) *
//! P_q'(x_k)^2)`. Exact for polynomials of degree `<= 2q - 1`.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Evaluate `(P_q(x), P_q'(x))` by the three-term recurrence.
fn legendre(q: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=q {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if q == 0 {
        return (1.0, 0.0);
    }
    let d = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || order > 64 {
            return Err(Error::invalid(format!(
                "quadrature order must be in 1..=64, got {order}"
            )));
        }
        if order == 1 {
            return Ok(GaussLegendre { nodes: vec![0.0], weights: vec![2.0] });
        }
        let q = order;
        let mut nodes = vec![0.0; q];
        let mut weights = vec![0.0; q];
        for k in 0..q {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (q as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre(q, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(q, x);
            // Newton guesses descend from +1; store in ascending order.
            nodes[q - 1 - k] = x;
            weights[q - 1 - k] = 2.0 / ((1.0 - x * x) * d * d);
        }
        Ok(GaussLegendre { nodes, weights })
    }

    /// Nodes and weights rescaled to integrate over `[a, b]`.
    pub fn scaled_to(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (mid + half * x, w * half))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn low_order_nodes_match_closed_forms() {
        let g2 = GaussLegendre::new(2).unwrap();
        assert_abs_diff_eq!(g2.nodes[0], -(1.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(g2.nodes[1], (1.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(g2.weights[0], 1.0, epsilon = 1e-14);

        let g3 = GaussLegendre::new(3).unwrap();
        assert_abs_diff_eq!(g3.nodes[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g3.nodes[2], (0.6f64).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(g3.weights[1], 8.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g3.weights[0], 5.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_for_polynomials_up_to_2q_minus_1() {
        for q in 1..=12usize {
            let g = GaussLegendre::new(q).unwrap();
            for d in 0..2 * q {
                let approx_val: f64 = g
                    .nodes
                    .iter()
                    .zip(&g.weights)
                    .map(|(&x, &w)| w * x.powi(d as i32))
                    .sum();
                // integral of x^d over [-1,1]
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
                assert_abs_diff_eq!(approx_val, exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn scaled_interval_integrates_affine_exactly() {
        let g = GaussLegendre::new(4).unwrap();
        let pts = g.scaled_to(0.25, 1.75);
        let total: f64 = pts.iter().map(|&(x, w)| w * (3.0 * x - 1.0)).sum();
        // integral of 3x-1 over [0.25, 1.75] = 3/2*(1.75^2-0.25^2) - 1.5
        assert_abs_diff_eq!(total, 1.5 * (1.75f64.powi(2) - 0.0625) - 1.5, epsilon = 1e-13);
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(GaussLegendre::new(0).is_err());
        assert!(GaussLegendre::new(65).is_err());
        assert!(GaussLegendre::new(64).is_ok());
    }

    #[test]
    fn high_order_weights_sum_to_two() {
        for q in [8, 16, 32, 64] {
            let g = GaussLegendre::new(q).unwrap();
            let s: f64 = g.weights.iter().sum();
            assert_abs_diff_eq!(s, 2.0, epsilon = 1e-12);
            for w in &g.weights {
                assert!(*w > 0.0);
            }
        }
    }
}
