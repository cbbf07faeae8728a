//! The stochastic difference equation `x(l+1) = f(x(l), theta(l))`.
//!
//! A [`SystemModel`] bundles the dynamics expression trees with the
//! disturbance distribution and precomputes the symbolic state Jacobian, so
//! a per-cell certified Lipschitz bound is one interval sweep.

use crate::certificate::Certificate;
use crate::distribution::{Disturbance, ExpectationGrid};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::interval::Interval;
use crate::region::AxisBox;
use std::cell::RefCell;

thread_local! {
    /// Reusable image-point buffer for the expectation quadrature loop.
    static STEP_SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

#[derive(Clone, Debug)]
pub struct SystemModel {
    state_dim: usize,
    noise_dim: usize,
    dynamics: Vec<Expr>,
    /// `jacobian[i][j] = d f_i / d x_j`, symbolic.
    jacobian: Vec<Vec<Expr>>,
    disturbance: Disturbance,
}

impl SystemModel {
    pub fn new(dynamics: Vec<Expr>, disturbance: Disturbance) -> Result<Self> {
        let n = dynamics.len();
        if n == 0 {
            return Err(Error::invalid("system needs at least one state coordinate"));
        }
        disturbance.validate()?;
        let m = disturbance.dim();
        for (i, f) in dynamics.iter().enumerate() {
            if f.min_state_dim() > n {
                return Err(Error::dimension(format!(
                    "coordinate {} references x{} but the system has {n} states",
                    i + 1,
                    f.min_state_dim()
                )));
            }
            if f.min_noise_dim() > m {
                return Err(Error::dimension(format!(
                    "coordinate {} references th{} but the disturbance has {m} axes",
                    i + 1,
                    f.min_noise_dim()
                )));
            }
        }
        let jacobian = dynamics
            .iter()
            .map(|f| (0..n).map(|j| f.diff_state(j)).collect())
            .collect();
        Ok(SystemModel { state_dim: n, noise_dim: m, dynamics, jacobian, disturbance })
    }

    pub fn parse(dynamics: &[&str], disturbance: Disturbance) -> Result<Self> {
        let exprs = dynamics
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        SystemModel::new(exprs, disturbance)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn disturbance(&self) -> &Disturbance {
        &self.disturbance
    }

    pub fn dynamics(&self) -> &[Expr] {
        &self.dynamics
    }

    pub fn step(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::dimension(format!(
                "state has {} coordinates, system expects {}",
                x.len(),
                self.state_dim
            )));
        }
        if theta.len() != self.noise_dim {
            return Err(Error::dimension(format!(
                "disturbance has {} coordinates, system expects {}",
                theta.len(),
                self.noise_dim
            )));
        }
        Ok(self.step_unchecked(x, theta))
    }

    pub fn step_unchecked(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        self.dynamics.iter().map(|f| f.eval(x, theta)).collect()
    }

    /// Interval image of `cell x Theta` under one step.
    pub fn image_box(&self, cell: &AxisBox) -> AxisBox {
        let xb = cell.to_intervals();
        let tb = self.disturbance.support_box();
        let images: Vec<Interval> =
            self.dynamics.iter().map(|f| f.eval_interval(&xb, &tb)).collect();
        let bounds: Vec<[f64; 2]> = images.iter().map(|i| [i.lo(), i.hi()]).collect();
        AxisBox::from_bounds(&bounds).expect("interval image is a valid box")
    }

    /// Certified bound on the infinity-norm induced Jacobian norm of
    /// `x -> f(x, theta)` over `cell x Theta`: max row sum of `|df_i/dx_j|`.
    pub fn lipschitz_bound(&self, cell: &AxisBox) -> f64 {
        let xb = cell.to_intervals();
        let tb = self.disturbance.support_box();
        self.jacobian
            .iter()
            .map(|row| {
                row.iter()
                    .map(|d| d.eval_interval(&xb, &tb).mag())
                    .sum::<f64>()
            })
            .fold(0.0f64, f64::max)
    }

    /// Deterministic quadrature approximation of `E_theta[g(f(x, theta))]`.
    pub fn expectation(&self, g: &Certificate, x: &[f64], grid: &ExpectationGrid) -> f64 {
        STEP_SCRATCH.with(|buf| {
            let img = &mut *buf.borrow_mut();
            let mut acc = 0.0;
            for (point, w) in grid.points.iter().zip(&grid.weights) {
                img.clear();
                img.extend(self.dynamics.iter().map(|f| f.eval(x, point)));
                acc += w * g.evaluate(img);
            }
            acc
        })
    }

    pub fn expectation_grid(&self, quad_order: usize) -> Result<ExpectationGrid> {
        self.disturbance.expectation_grid(quad_order)
    }
}
