//! The built-in benchmark problems.
//!
//! Four two-dimensional case studies (`ex1`..`ex4`) plus a one-dimensional
//! random walk used to cross-validate the probability oracles. Each
//! constructor returns a fully validated [`ReachAvoidProblem`]; the working
//! boxes are sized so that one step from the safe set (or the invariant,
//! when present) provably stays inside.

use crate::distribution::Disturbance;
use crate::problem::ReachAvoidProblem;
use crate::region::{AxisBox, Region};
use crate::system::SystemModel;

fn build(
    dynamics: &[&str],
    disturbance: Disturbance,
    init: Region,
    safe: Region,
    target: Region,
    invariant: Option<Region>,
    working_box: AxisBox,
    threshold: f64,
) -> ReachAvoidProblem {
    let system = SystemModel::parse(dynamics, disturbance).expect("benchmark dynamics parse");
    ReachAvoidProblem::new(system, init, safe, target, invariant, working_box, threshold)
        .expect("benchmark problem is well formed")
}

/// Perturbed planar polynomial drift toward an ellipsoidal target above the
/// origin; heavy additive noise on the second coordinate.
pub fn ex1() -> ReachAvoidProblem {
    build(
        &[
            "x1 + 0.01*(-0.5*x1 - 0.5*x2 + 0.5*x1*x2)",
            "x2 + 0.01*(-0.5*x2 + 1 + th1)",
        ],
        Disturbance::UniformBox { support: vec![[-10.0, 10.0]] },
        Region::ball(&[-0.2, -0.8], 0.01),
        Region::ball(&[0.0, 0.0], 1.0),
        Region::Ellipsoid { center: vec![0.0, 0.5], weights: vec![10.0, 10.0], level: 1.0 },
        None,
        AxisBox::from_bounds(&[[-1.015, 1.015], [-1.085, 1.105]]).unwrap(),
        0.9,
    )
}

/// Discrete-time Lotka-Volterra predator-prey model with multiplicative
/// noise on the predator decay rate.
pub fn ex2() -> ReachAvoidProblem {
    build(
        &["0.5*x1 - x2*x1", "(-0.5 + th1)*x2 + x2*x1"],
        Disturbance::UniformBox { support: vec![[-1.0, 1.0]] },
        Region::ball(&[-0.6, -0.5], 0.01),
        Region::ball(&[0.0, 0.0], 2.0),
        Region::Ellipsoid { center: vec![0.0, 0.0], weights: vec![100.0, 100.0], level: 1.0 },
        None,
        AxisBox::from_bounds(&[[-5.0, 5.0], [-7.0, 7.0]]).unwrap(),
        0.9,
    )
}

/// Stable linear system with triangular noise; the only benchmark with a
/// robust invariant set, so every condition family applies.
pub fn ex3() -> ReachAvoidProblem {
    let left = Region::aligned_box(&[[-0.15, -0.1], [-0.1, 0.1]]).unwrap();
    let right = Region::aligned_box(&[[0.1, 0.15], [-0.1, 0.1]]).unwrap();
    build(
        &["0.6*x1 + 0.05*x2 + 0.01*th1", "0.6*x2 + 0.005*th2"],
        Disturbance::TriangularProduct { half_widths: vec![1.0, 1.0] },
        Region::Union { parts: vec![left, right] },
        Region::aligned_box(&[[-0.6, 0.6], [-0.6, 0.6]]).unwrap(),
        Region::aligned_box(&[[-0.1, 0.1], [-0.1, 0.1]]).unwrap(),
        Some(Region::aligned_box(&[[-1.0, 1.0], [-1.0, 1.0]]).unwrap()),
        AxisBox::from_bounds(&[[-1.0, 1.0], [-1.0, 1.0]]).unwrap(),
        0.6,
    )
}

/// Closed-loop pendulum-like system with the state feedback
/// `u = -3x - y/2` substituted into the dynamics; non-polynomial.
pub fn ex4() -> ReachAvoidProblem {
    build(
        &[
            "x1 + 0.2*x2",
            "x2 + 0.2*(sin(x1) - x2 + (-3*x1 - 0.5*x2) + th1)",
        ],
        Disturbance::UniformBox { support: vec![[-0.05, 0.05]] },
        Region::aligned_box(&[[0.2, 0.3], [-0.1, 0.1]]).unwrap(),
        Region::aligned_box(&[[-1.0, 1.0], [-1.0, 1.0]]).unwrap(),
        Region::aligned_box(&[[-0.2, 0.2], [-0.2, 0.2]]).unwrap(),
        None,
        AxisBox::from_bounds(&[[-1.2, 1.2], [-1.51, 1.51]]).unwrap(),
        0.4,
    )
}

/// One-dimensional random walk with uniform steps; small enough that the
/// value-iteration oracle is essentially exact, which makes it the reference
/// problem for oracle cross-validation.
pub fn walk_1d() -> ReachAvoidProblem {
    build(
        &["x1 + th1"],
        Disturbance::UniformBox { support: vec![[-0.5, 0.5]] },
        Region::aligned_box(&[[-0.9, 0.4]]).unwrap(),
        Region::aligned_box(&[[-1.0, 1.0]]).unwrap(),
        Region::aligned_box(&[[0.5, 1.0]]).unwrap(),
        None,
        AxisBox::from_bounds(&[[-1.5, 1.5]]).unwrap(),
        0.5,
    )
}

pub const NAMES: [&str; 5] = ["ex1", "ex2", "ex3", "ex4", "walk"];

pub fn by_name(name: &str) -> Option<ReachAvoidProblem> {
    match name {
        "ex1" => Some(ex1()),
        "ex2" => Some(ex2()),
        "ex3" => Some(ex3()),
        "ex4" => Some(ex4()),
        "walk" => Some(walk_1d()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{sample_trajectory, trajectory_path};

    #[test]
    fn ex3_probe() {
        let p = ex3();
        let y = p.system.step(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![0.01, 0.005]);
    }

    #[test]
    fn ex2_origin_is_fixed() {
        let p = ex2();
        for th in [-1.0, 0.0, 0.7] {
            assert_eq!(p.system.step(&[0.0, 0.0], &[th]).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn ex4_probe_matches_feedback_law() {
        let p = ex4();
        let y = p.system.step(&[0.25, 0.0], &[0.0]).unwrap();
        assert!((y[0] - 0.25).abs() < 1e-15);
        assert!((y[1] - 0.2 * (0.25f64.sin() - 0.75)).abs() < 1e-15);
    }

    #[test]
    fn ex1_probe() {
        let p = ex1();
        let y = p.system.step(&[1.0, 1.0], &[10.0]).unwrap();
        assert!((y[0] - (1.0 + 0.01 * (-0.5 - 0.5 + 0.5))).abs() < 1e-15);
        assert!((y[1] - (1.0 + 0.01 * (-0.5 + 1.0 + 10.0))).abs() < 1e-15);
    }

    #[test]
    fn all_benchmarks_validate() {
        for name in NAMES {
            let p = by_name(name).unwrap();
            p.validate_by_sampling(300, 11)
                .unwrap_or_else(|e| panic!("{name} failed validation: {e}"));
        }
    }

    #[test]
    fn unknown_name_is_none() {
        assert!(by_name("ex9").is_none());
    }

    #[test]
    fn ex1_trajectory_reproducible() {
        let p = ex1();
        let x0 = [-0.2, -0.8];
        let a = sample_trajectory(&p, &x0, 10_000, 1234);
        let b = sample_trajectory(&p, &x0, 10_000, 1234);
        assert_eq!(a, b);
        let (pa, _) = trajectory_path(&p, &x0, 1000, 1234);
        let (pb, _) = trajectory_path(&p, &x0, 1000, 1234);
        assert_eq!(pa, pb);
    }

    #[test]
    fn json_round_trip_is_idempotent() {
        for name in NAMES {
            let p = by_name(name).unwrap();
            let once = p.to_json().unwrap();
            let twice = ReachAvoidProblem::from_json(&once).unwrap().to_json().unwrap();
            assert_eq!(once, twice, "{name} JSON not idempotent");
        }
    }
}
