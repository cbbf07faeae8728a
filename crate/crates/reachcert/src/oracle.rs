//! Statistical and numerical probability oracles.
//!
//! The Monte Carlo path estimates the reach-avoid probability by simulating
//! seeded trajectories and wrapping the hit count in an exact Clopper-Pearson
//! interval; truncation at the horizon is surfaced as an explicit undecided
//! fraction rather than folded into the point estimate. For one- and
//! two-dimensional problems a discretized value iteration provides an
//! independent reference. Certificate comparisons always go through the
//! sandwich inequality (`hi + undecided` against lower bounds, `lo` against
//! upper bounds), never the point estimate alone.

use crate::conditions::Bound;
use crate::error::{Error, Result};
use crate::exec;
use crate::problem::{
    derive_seed, sample_stay, sample_trajectory, ReachAvoidProblem, StayRegion, TrajectoryOutcome,
};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

/// Truncated-horizon estimate with exact binomial confidence bounds.
///
/// Reaching by step `K` implies reaching eventually, so `lo` bounds the
/// infinite-horizon probability from below; trajectories still undecided at
/// the horizon can contribute at most `undecided`, so `hi + undecided`
/// bounds it from above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub undecided: f64,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "K")]
    pub horizon: u64,
    pub seed: u64,
}

/// Exact two-sided Clopper-Pearson interval for `successes` out of `n` at
/// confidence `1 - alpha`.
pub fn clopper_pearson(successes: u64, n: u64, alpha: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("confidence interval needs at least one sample"));
    }
    if successes > n {
        return Err(Error::invalid(format!("{successes} successes out of {n} samples")));
    }
    if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
        return Err(Error::scalar(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (k, n_f) = (successes as f64, n as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n_f - k + 1.0)
            .map_err(|e| Error::invalid(format!("beta parameters: {e}")))?
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        Beta::new(k + 1.0, n_f - k)
            .map_err(|e| Error::invalid(format!("beta parameters: {e}")))?
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

fn validate_mc_args(problem: &ReachAvoidProblem, x0: &[f64], n: u64) -> Result<()> {
    if x0.len() != problem.dim() {
        return Err(Error::dimension(format!(
            "x0 has dimension {}, problem has {}",
            x0.len(),
            problem.dim()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    Ok(())
}

/// Monte Carlo estimate of the probability of reaching the target within
/// `horizon` steps while staying safe. Trajectory `i` is driven by the
/// derived seed `mix(seed, i)`, so the estimate is independent of execution
/// order and worker count.
pub fn estimate_reach_avoid(
    problem: &ReachAvoidProblem,
    x0: &[f64],
    n: u64,
    horizon: u64,
    alpha: f64,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    validate_mc_args(problem, x0, n)?;
    let counts: Vec<(u64, u64)> = exec::map_range(n as usize, |i| {
        match sample_trajectory(problem, x0, horizon as usize, derive_seed(seed, i as u64)) {
            TrajectoryOutcome::ReachedTarget(_) => (1, 0),
            TrajectoryOutcome::LeftSafe(_) => (0, 0),
            TrajectoryOutcome::Undecided => (0, 1),
        }
    });
    let successes: u64 = counts.iter().map(|c| c.0).sum();
    let undecided: u64 = counts.iter().map(|c| c.1).sum();
    let (lo, hi) = clopper_pearson(successes, n, alpha)?;
    Ok(ProbabilityEstimate {
        p_hat: successes as f64 / n as f64,
        lo,
        hi,
        undecided: undecided as f64 / n as f64,
        n,
        horizon,
        seed,
    })
}

/// Monte Carlo estimate of the probability of remaining in the given region
/// for every step up to the horizon. This upper-bounds the infinite-horizon
/// stay probability (staying forever implies staying through `K`).
pub fn estimate_stay_probability(
    problem: &ReachAvoidProblem,
    x0: &[f64],
    region: StayRegion,
    n: u64,
    horizon: u64,
    alpha: f64,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    validate_mc_args(problem, x0, n)?;
    let stays: Vec<u64> = exec::map_range(n as usize, |i| {
        sample_stay(problem, x0, region, horizon as usize, derive_seed(seed, i as u64)) as u64
    });
    let successes: u64 = stays.iter().sum();
    let (lo, hi) = clopper_pearson(successes, n, alpha)?;
    Ok(ProbabilityEstimate {
        p_hat: successes as f64 / n as f64,
        lo,
        hi,
        undecided: 0.0,
        n,
        horizon,
        seed,
    })
}

/// The consistency check between a certified bound and an estimate: a
/// genuine lower bound can never exceed every probability consistent with
/// the simulation, and dually for upper bounds. A `false` here means a bug
/// in the verifier or the condition encodings, not in the oracle.
pub fn sandwich_consistent(bound: Bound, estimate: &ProbabilityEstimate) -> bool {
    match bound {
        Bound::Lower(p) => estimate.hi + estimate.undecided >= p,
        Bound::Upper(p) => estimate.lo <= p,
    }
}

#[derive(Clone, Debug)]
pub struct ValueIterationSettings {
    /// Node spacing of the state grid over the working box.
    pub grid_step: f64,
    /// Number of Bellman iterations (the reachability horizon).
    pub horizon: u64,
    /// Composite quadrature panels per noise axis; the integrand is only
    /// piecewise smooth (interpolation kinks), so one high-order rule is not
    /// enough.
    pub panels: usize,
    /// Gauss-Legendre order inside each panel.
    pub quad_order: usize,
}

impl Default for ValueIterationSettings {
    fn default() -> Self {
        ValueIterationSettings { grid_step: 0.01, horizon: 200, panels: 32, quad_order: 4 }
    }
}

/// Discretized finite-horizon reachability iteration
/// `V_0 = 1_T`, `V_{k+1}(x) = 1_T(x) + 1_{X \ T}(x) E_theta[V_k(f(x,
/// theta))]` on a vertex grid over the working box with multilinear
/// interpolation between vertices.
#[derive(Clone, Debug)]
pub struct ValueIterationOracle {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
    pub horizon: u64,
    /// Largest value difference between adjacent vertices; multilinear
    /// interpolation error is bounded by this, so treat results with a large
    /// value here as coarse.
    pub max_adjacent_diff: f64,
    /// Worst observed violation of `V_k <= V_{k+1}` during iteration;
    /// anything beyond interpolation noise indicates a bug.
    pub monotone_defect: f64,
}

impl ValueIterationOracle {
    /// Multilinear interpolation of the final iterate, clamped to the grid.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        interpolate(&self.axes, &self.values, x)
    }
}

fn interpolate(axes: &[Vec<f64>], values: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(axes.len(), x.len());
    let dim = axes.len();
    // per-axis cell index and fractional offset
    let mut base = Vec::with_capacity(dim);
    let mut frac = Vec::with_capacity(dim);
    for (axis, &xi) in axes.iter().zip(x) {
        let m = axis.len();
        let h = axis[1] - axis[0];
        let t = ((xi - axis[0]) / h).clamp(0.0, (m - 1) as f64);
        let i = (t.floor() as usize).min(m - 2);
        base.push(i);
        frac.push((t - i as f64).clamp(0.0, 1.0));
    }
    let strides: Vec<usize> = {
        let mut s = vec![1usize; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * axes[i + 1].len();
        }
        s
    };
    let mut acc = 0.0;
    for corner in 0u32..(1 << dim) {
        let mut w = 1.0;
        let mut idx = 0usize;
        for d in 0..dim {
            let up = corner >> d & 1 == 1;
            w *= if up { frac[d] } else { 1.0 - frac[d] };
            idx += (base[d] + up as usize) * strides[d];
        }
        acc += w * values[idx];
    }
    acc
}

pub fn value_iteration_oracle(
    problem: &ReachAvoidProblem,
    settings: &ValueIterationSettings,
) -> Result<ValueIterationOracle> {
    let dim = problem.dim();
    if dim > 2 {
        return Err(Error::unsupported(format!(
            "value iteration supports dimension <= 2, problem has {dim}"
        )));
    }
    if !(settings.grid_step.is_finite() && settings.grid_step > 0.0) {
        return Err(Error::invalid(format!("grid step must be > 0, got {}", settings.grid_step)));
    }
    let wb = &problem.working_box;
    let mut axes = Vec::with_capacity(dim);
    for i in 0..dim {
        let width = wb.width(i);
        let segments = ((width / settings.grid_step).ceil() as usize).max(1);
        let h = width / segments as f64;
        let nodes: Vec<f64> = (0..=segments).map(|j| wb.lo()[i] + h * j as f64).collect();
        axes.push(nodes);
    }
    let total: usize = axes.iter().map(Vec::len).product();
    if total > 50_000_000 {
        return Err(Error::resource(format!("value iteration grid has {total} vertices")));
    }

    let vertex = |flat: usize| -> Vec<f64> {
        let mut x = Vec::with_capacity(dim);
        let mut rem = flat;
        let mut strides: Vec<usize> = vec![1; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].len();
        }
        for d in 0..dim {
            let i = rem / strides[d];
            rem %= strides[d];
            x.push(axes[d][i]);
        }
        x
    };

    // classify vertices once: 1 = target, 0 = elsewhere, recurse on X \ T
    let classes: Vec<u8> = exec::map_range(total, |flat| {
        let x = vertex(flat);
        if problem.target.contains(&x) {
            2
        } else if problem.safe.contains(&x) {
            1
        } else {
            0
        }
    });
    let quad = problem
        .system
        .disturbance()
        .composite_expectation_grid(settings.panels, settings.quad_order)?;
    let mut values: Vec<f64> =
        classes.iter().map(|&c| if c == 2 { 1.0 } else { 0.0 }).collect();
    let mut monotone_defect = 0.0f64;
    for _ in 0..settings.horizon {
        let prev = values;
        let next: Vec<f64> = exec::map_range(total, |flat| match classes[flat] {
            2 => 1.0,
            1 => {
                let x = vertex(flat);
                let mut acc = 0.0;
                for (theta, w) in quad.points.iter().zip(&quad.weights) {
                    let y = problem.system.step_unchecked(&x, theta);
                    acc += w * interpolate(&axes, &prev, &y);
                }
                acc
            }
            _ => 0.0,
        });
        let defect = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| a - b)
            .fold(0.0f64, f64::max);
        monotone_defect = monotone_defect.max(defect);
        values = next;
    }

    let mut max_adjacent_diff = 0.0f64;
    let mut strides: Vec<usize> = vec![1; dim];
    for i in (0..dim.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * axes[i + 1].len();
    }
    for flat in 0..total {
        let mut rem = flat;
        for d in 0..dim {
            let i = rem / strides[d];
            rem %= strides[d];
            if i + 1 < axes[d].len() {
                let diff = (values[flat] - values[flat + strides[d]]).abs();
                max_adjacent_diff = max_adjacent_diff.max(diff);
            }
        }
    }

    Ok(ValueIterationOracle {
        axes,
        values,
        horizon: settings.horizon,
        max_adjacent_diff,
        monotone_defect,
    })
}
