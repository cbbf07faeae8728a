//! Reach-avoid problem instances and trajectory simulation.
//!
//! A problem fixes the system, the four regions (initial `X0`, safe `X`,
//! target `T`, optional robust invariant `Omega`), the one-step working box
//! `Xhat` that stands in for `R^n`, and the probability threshold. Region
//! inclusions are validated statistically by rejection sampling; the working
//! box is user-supplied and sanity-checked the same way, never computed.

use crate::distribution::Disturbance;
use crate::error::{Error, Result};
use crate::exec;
use crate::region::{AxisBox, Region};
use crate::system::SystemModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct ReachAvoidProblem {
    pub system: SystemModel,
    pub init: Region,
    pub safe: Region,
    pub target: Region,
    pub invariant: Option<Region>,
    pub working_box: AxisBox,
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct SystemDto {
    dim: usize,
    dynamics: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RegionsDto {
    init: Region,
    safe: Region,
    target: Region,
    #[serde(skip_serializing_if = "Option::is_none")]
    invariant: Option<Region>,
    working_box: AxisBox,
}

#[derive(Serialize, Deserialize)]
struct ProblemDto {
    system: SystemDto,
    disturbance: Disturbance,
    regions: RegionsDto,
    threshold: f64,
}

impl ReachAvoidProblem {
    pub fn new(
        system: SystemModel,
        init: Region,
        safe: Region,
        target: Region,
        invariant: Option<Region>,
        working_box: AxisBox,
        threshold: f64,
    ) -> Result<Self> {
        let n = system.state_dim();
        for (name, region) in [("init", &init), ("safe", &safe), ("target", &target)] {
            region.validate()?;
            if region.dim() != n {
                return Err(Error::dimension(format!(
                    "region '{name}' has dimension {}, system has {n}",
                    region.dim()
                )));
            }
        }
        if let Some(omega) = &invariant {
            omega.validate()?;
            if omega.dim() != n {
                return Err(Error::dimension(format!(
                    "region 'invariant' has dimension {}, system has {n}",
                    omega.dim()
                )));
            }
        }
        if working_box.dim() != n {
            return Err(Error::dimension(format!(
                "working_box has dimension {}, system has {n}",
                working_box.dim()
            )));
        }
        if !(threshold.is_finite() && 0.0 < threshold && threshold <= 1.0) {
            return Err(Error::scalar(format!("threshold must lie in (0, 1], got {threshold}")));
        }
        Ok(ReachAvoidProblem { system, init, safe, target, invariant, working_box, threshold })
    }

    pub fn dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: ProblemDto = serde_json::from_str(text)?;
        if dto.system.dim != dto.system.dynamics.len() {
            return Err(Error::dimension(format!(
                "system.dim is {} but {} dynamics expressions given",
                dto.system.dim,
                dto.system.dynamics.len()
            )));
        }
        let dynamics: Vec<&str> = dto.system.dynamics.iter().map(String::as_str).collect();
        let system = SystemModel::parse(&dynamics, dto.disturbance)?;
        ReachAvoidProblem::new(
            system,
            dto.regions.init,
            dto.regions.safe,
            dto.regions.target,
            dto.regions.invariant,
            dto.regions.working_box,
            dto.threshold,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let dto = ProblemDto {
            system: SystemDto {
                dim: self.system.state_dim(),
                dynamics: self.system.dynamics().iter().map(render_expr).collect(),
            },
            disturbance: self.system.disturbance().clone(),
            regions: RegionsDto {
                init: self.init.clone(),
                safe: self.safe.clone(),
                target: self.target.clone(),
                invariant: self.invariant.clone(),
                working_box: self.working_box.clone(),
            },
            threshold: self.threshold,
        };
        Ok(serde_json::to_string_pretty(&dto)?)
    }

    /// Statistical well-formedness audit: `X0 subset X\T`, `T subset X`,
    /// `X subset Xhat`, one-step images land in `Xhat`, and when an invariant
    /// is declared, `X subset Omega`, `T subset Omega`, and one-step images of
    /// `Omega` stay in `Omega`. Each inclusion is probed with `samples`
    /// rejection-sampled members.
    pub fn validate_by_sampling(&self, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tries = 10_000;
        for _ in 0..samples {
            if let Some(x) = self.init.sample(&mut rng, tries) {
                if !self.safe.contains(&x) {
                    return Err(Error::invalid(format!("init point {x:?} is outside safe")));
                }
                if self.target.contains(&x) {
                    return Err(Error::invalid(format!("init point {x:?} is inside target")));
                }
            }
            if let Some(x) = self.target.sample(&mut rng, tries) {
                if !self.safe.contains(&x) {
                    return Err(Error::invalid(format!("target point {x:?} is outside safe")));
                }
            }
            if let Some(x) = self.safe.sample(&mut rng, tries) {
                if !self.working_box.contains(&x) {
                    return Err(Error::invalid(format!(
                        "safe point {x:?} is outside the working box"
                    )));
                }
                let th = self.system.disturbance().sample(&mut rng);
                let y = self.system.step_unchecked(&x, &th);
                if !self.working_box.contains(&y) {
                    return Err(Error::invalid(format!(
                        "one-step image {y:?} of safe point {x:?} leaves the working box"
                    )));
                }
                if let Some(omega) = &self.invariant {
                    if !omega.contains(&x) {
                        return Err(Error::invalid(format!(
                            "safe point {x:?} is outside the invariant"
                        )));
                    }
                }
            }
            if let Some(omega) = &self.invariant {
                if let Some(x) = self.target.sample(&mut rng, tries) {
                    if !omega.contains(&x) {
                        return Err(Error::invalid(format!(
                            "target point {x:?} is outside the invariant"
                        )));
                    }
                }
                if let Some(x) = omega.sample(&mut rng, tries) {
                    let th = self.system.disturbance().sample(&mut rng);
                    let y = self.system.step_unchecked(&x, &th);
                    if !omega.contains(&y) {
                        return Err(Error::invalid(format!(
                            "invariant is not robust: {x:?} steps to {y:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn render_expr(e: &crate::expr::Expr) -> String {
    use crate::expr::Expr;
    match e {
        Expr::Const(c) => {
            if *c < 0.0 {
                format!("({c})")
            } else {
                format!("{c}")
            }
        }
        Expr::State(i) => format!("x{}", i + 1),
        Expr::Noise(j) => format!("th{}", j + 1),
        Expr::Neg(a) => format!("-({})", render_expr(a)),
        Expr::Add(a, b) => format!("({} + {})", render_expr(a), render_expr(b)),
        Expr::Sub(a, b) => format!("({} - {})", render_expr(a), render_expr(b)),
        Expr::Mul(a, b) => format!("({} * {})", render_expr(a), render_expr(b)),
        Expr::Sin(a) => format!("sin({})", render_expr(a)),
        Expr::Cos(a) => format!("cos({})", render_expr(a)),
    }
}

/// Outcome of one simulated trajectory, with the step index of the decisive
/// event. Step 0 is the initial state itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryOutcome {
    ReachedTarget(usize),
    LeftSafe(usize),
    Undecided,
}

/// Which set a stay-probability trajectory must remain in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StayRegion {
    Safe,
    SafeMinusTarget,
}

fn classify(problem: &ReachAvoidProblem, x: &[f64], k: usize) -> Option<TrajectoryOutcome> {
    if problem.target.contains(x) {
        Some(TrajectoryOutcome::ReachedTarget(k))
    } else if !problem.safe.contains(x) {
        Some(TrajectoryOutcome::LeftSafe(k))
    } else {
        None
    }
}

/// Simulate one trajectory of at most `horizon` steps with disturbances drawn
/// from a generator seeded by `seed` alone.
pub fn sample_trajectory(
    problem: &ReachAvoidProblem,
    x0: &[f64],
    horizon: usize,
    seed: u64,
) -> TrajectoryOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(outcome) = classify(problem, x0, 0) {
        return outcome;
    }
    let mut x = x0.to_vec();
    for k in 1..=horizon {
        let th = problem.system.disturbance().sample(&mut rng);
        x = problem.system.step_unchecked(&x, &th);
        if let Some(outcome) = classify(problem, &x, k) {
            return outcome;
        }
    }
    TrajectoryOutcome::Undecided
}

/// As [`sample_trajectory`], but returns every visited state (including `x0`
/// and the decisive state).
pub fn trajectory_path(
    problem: &ReachAvoidProblem,
    x0: &[f64],
    horizon: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, TrajectoryOutcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = vec![x0.to_vec()];
    if let Some(outcome) = classify(problem, x0, 0) {
        return (states, outcome);
    }
    let mut x = x0.to_vec();
    for k in 1..=horizon {
        let th = problem.system.disturbance().sample(&mut rng);
        x = problem.system.step_unchecked(&x, &th);
        states.push(x.clone());
        if let Some(outcome) = classify(problem, &x, k) {
            return (states, outcome);
        }
    }
    (states, TrajectoryOutcome::Undecided)
}

/// True when the trajectory stays in the chosen region for every step up to
/// and including `horizon`.
pub fn sample_stay(
    problem: &ReachAvoidProblem,
    x0: &[f64],
    region: StayRegion,
    horizon: usize,
    seed: u64,
) -> bool {
    let inside = |x: &[f64]| match region {
        StayRegion::Safe => problem.safe.contains(x),
        StayRegion::SafeMinusTarget => problem.safe.contains(x) && !problem.target.contains(x),
    };
    if !inside(x0) {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0.to_vec();
    for _ in 1..=horizon {
        let th = problem.system.disturbance().sample(&mut rng);
        x = problem.system.step_unchecked(&x, &th);
        if !inside(&x) {
            return false;
        }
    }
    true
}

/// Deterministic per-trajectory seed stream: splitmix64 finalizer over
/// `base ^ index`, so parallel workers derive identical randomness regardless
/// of scheduling.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    exec_mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1))))
}

fn exec_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Parallel-safe batch simulation; outcome list is ordered by trajectory
/// index, so any fold over it is deterministic.
pub fn sample_trajectories(
    problem: &ReachAvoidProblem,
    x0: &[f64],
    horizon: usize,
    n: usize,
    seed: u64,
) -> Vec<TrajectoryOutcome> {
    exec::map_range(n, |i| sample_trajectory(problem, x0, horizon, derive_seed(seed, i as u64)))
}
