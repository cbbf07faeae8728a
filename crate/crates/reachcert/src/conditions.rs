//! The barrier-like conditions as residual clause lists.
//!
//! Every condition is normalized to a finite list of constraints of the form
//! `residual(x) <= 0 for all x in domain` (positive residual = violation),
//! where the residual is an affine combination of certificate evaluations and
//! one-step expectations. Two conditions restrict their drift clause further
//! with a sublevel or superlevel guard on the certificate itself.
//!
//! Everywhere the mathematical statement quantifies over all of `R^n`, the
//! complement is taken within the problem's one-step working box instead;
//! trajectories leaving the safe set land there after one step, so this is
//! sound and makes grid verification finite. This is the single deliberate
//! domain strengthening in the crate.

use crate::certificate::Certificate;
use crate::distribution::ExpectationGrid;
use crate::error::{Error, Result};
use crate::problem::ReachAvoidProblem;
use crate::region::{AxisBox, GridCell, Region};
use crate::system::SystemModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Identifier of a barrier-like condition family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionId {
    #[serde(rename = "BC1")]
    Bc1,
    #[serde(rename = "AS")]
    As,
    #[serde(rename = "BC2")]
    Bc2,
    #[serde(rename = "BC3")]
    Bc3,
    #[serde(rename = "BC4")]
    Bc4,
    #[serde(rename = "BC4_SINGLETON")]
    Bc4Singleton,
    #[serde(rename = "BC4_RESTRICTED")]
    Bc4Restricted,
    #[serde(rename = "BC5")]
    Bc5,
    #[serde(rename = "BC5_UPPER")]
    Bc5Upper,
}

impl ConditionId {
    pub const ALL: [ConditionId; 9] = [
        ConditionId::Bc1,
        ConditionId::As,
        ConditionId::Bc2,
        ConditionId::Bc3,
        ConditionId::Bc4,
        ConditionId::Bc4Singleton,
        ConditionId::Bc4Restricted,
        ConditionId::Bc5,
        ConditionId::Bc5Upper,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ConditionId::Bc1 => "BC1",
            ConditionId::As => "AS",
            ConditionId::Bc2 => "BC2",
            ConditionId::Bc3 => "BC3",
            ConditionId::Bc4 => "BC4",
            ConditionId::Bc4Singleton => "BC4_SINGLETON",
            ConditionId::Bc4Restricted => "BC4_RESTRICTED",
            ConditionId::Bc5 => "BC5",
            ConditionId::Bc5Upper => "BC5_UPPER",
        }
    }

    pub fn parse(name: &str) -> Option<ConditionId> {
        ConditionId::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Conditions that only make sense relative to a robust invariant set.
    pub fn needs_invariant(&self) -> bool {
        matches!(self, ConditionId::Bc2 | ConditionId::Bc3 | ConditionId::Bc4Restricted)
    }

    pub fn roles(&self) -> &'static [Role] {
        match self {
            ConditionId::Bc1 => &[Role::H1, Role::H2],
            ConditionId::As => &[Role::SubV],
            ConditionId::Bc2 | ConditionId::Bc3 => &[Role::SupV],
            ConditionId::Bc4 | ConditionId::Bc4Singleton | ConditionId::Bc4Restricted => {
                &[Role::H]
            }
            ConditionId::Bc5 | ConditionId::Bc5Upper => &[Role::H1, Role::H2],
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Function slot a condition refers to. `SubV` is the submartingale witness
/// "v" of the equivalence condition; `SupV` is the supermartingale "V" of the
/// invariant-set conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "h1")]
    H1,
    #[serde(rename = "h2")]
    H2,
    #[serde(rename = "v")]
    SubV,
    #[serde(rename = "V")]
    SupV,
    #[serde(rename = "h")]
    H,
}

impl Role {
    pub fn name(&self) -> &'static str {
        match self {
            Role::H1 => "h1",
            Role::H2 => "h2",
            Role::SubV => "v",
            Role::SupV => "V",
            Role::H => "h",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar parameters; each condition requires an exact subset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scalars {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<f64>,
}

impl Scalars {
    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_lambda_prime(mut self, lambda_prime: f64) -> Self {
        self.lambda_prime = Some(lambda_prime);
        self
    }

    /// Canonical `name=value` listing for reports, empty string when none.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.p {
            parts.push(format!("p={v}"));
        }
        if let Some(v) = self.epsilon {
            parts.push(format!("epsilon={v}"));
        }
        if let Some(v) = self.lambda {
            parts.push(format!("lambda={v}"));
        }
        if let Some(v) = self.gamma {
            parts.push(format!("gamma={v}"));
        }
        if let Some(v) = self.delta {
            parts.push(format!("delta={v}"));
        }
        if let Some(v) = self.lambda_prime {
            parts.push(format!("lambda_prime={v}"));
        }
        parts.join(" ")
    }
}

/// Affine residual form `constant + sum a_i * role_i(x) + sum b_j *
/// E_theta[role_j(f(x, theta))]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualExpr {
    pub constant: f64,
    pub point_terms: Vec<(f64, Role)>,
    pub expect_terms: Vec<(f64, Role)>,
}

impl ResidualExpr {
    pub fn eval(
        &self,
        certs: &BTreeMap<Role, Certificate>,
        system: &SystemModel,
        grid: &ExpectationGrid,
        x: &[f64],
    ) -> f64 {
        let mut acc = self.constant;
        for &(a, role) in &self.point_terms {
            acc += a * certs[&role].evaluate(x);
        }
        for &(b, role) in &self.expect_terms {
            acc += b * system.expectation(&certs[&role], x, grid);
        }
        acc
    }
}

/// Side constraint narrowing a drift clause's domain.
///
/// `UpperLevel` keeps points with `role(x) <= threshold`; `LowerLevel` keeps
/// points with `role(x) >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Guard {
    UpperLevel { role: Role, threshold: f64 },
    LowerLevel { role: Role },
}

impl Guard {
    pub fn admits(&self, certs: &BTreeMap<Role, Certificate>, x: &[f64]) -> bool {
        match self {
            Guard::UpperLevel { role, threshold } => certs[role].evaluate(x) <= *threshold,
            Guard::LowerLevel { role } => certs[role].evaluate(x) >= 0.0,
        }
    }

    /// Conservative cell test: true only when *no* point of the cell can pass
    /// the guard, certified through the certificate's Lipschitz bound. Cells
    /// that merely straddle the level set stay in, which over-enforces the
    /// clause and preserves soundness.
    pub fn excludes_cell(&self, certs: &BTreeMap<Role, Certificate>, cell: &GridCell) -> bool {
        let (role, center) = match self {
            Guard::UpperLevel { role, .. } | Guard::LowerLevel { role } => {
                (role, certs[role].evaluate(&cell.center))
            }
        };
        let slope = certs[role].lipschitz_bound(&cell.as_box()) * cell.radius();
        match self {
            Guard::UpperLevel { threshold, .. } => center - slope > *threshold,
            Guard::LowerLevel { .. } => center + slope < 0.0,
        }
    }
}

/// One inequality line of a condition: `residual(x) <= 0` for all `x` in
/// `domain` passing the optional guard.
#[derive(Clone, Debug)]
pub struct ResidualClause {
    pub label: String,
    pub domain: Region,
    pub expr: ResidualExpr,
    pub guard: Option<Guard>,
}

impl ResidualClause {
    fn new(label: &str, domain: Region, expr: ResidualExpr) -> Self {
        ResidualClause { label: label.to_string(), domain, expr, guard: None }
    }

    fn guarded(mut self, guard: Guard) -> Self {
        self.guard = Some(guard);
        self
    }

    /// Residual at `x`, or `None` when `x` is outside the domain or fails the
    /// guard (the clause does not constrain such points).
    pub fn residual_at(
        &self,
        certs: &BTreeMap<Role, Certificate>,
        system: &SystemModel,
        grid: &ExpectationGrid,
        x: &[f64],
    ) -> Option<f64> {
        if !self.domain.contains(x) {
            return None;
        }
        if let Some(guard) = &self.guard {
            if !guard.admits(certs, x) {
                return None;
            }
        }
        Some(self.expr.eval(certs, system, grid, x))
    }
}

/// Certified probability statement a feasible instance yields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "snake_case")]
pub enum Bound {
    Lower(f64),
    Upper(f64),
}

/// A condition bound to a problem, certificates, and scalars; construction
/// validates that exactly the required roles and scalars are present and in
/// range.
#[derive(Clone, Debug)]
pub struct ConditionInstance {
    pub condition_id: ConditionId,
    pub problem: ReachAvoidProblem,
    pub certificates: BTreeMap<Role, Certificate>,
    pub scalars: Scalars,
    /// Designated initial state, present exactly for `BC4_SINGLETON`.
    pub x0: Option<Vec<f64>>,
}

fn require(present: Option<f64>, name: &str, id: ConditionId) -> Result<f64> {
    present.ok_or_else(|| Error::scalar(format!("{id} requires scalar '{name}'")))
}

fn forbid(present: Option<f64>, name: &str, id: ConditionId) -> Result<()> {
    if present.is_some() {
        return Err(Error::scalar(format!("{id} does not take scalar '{name}'")));
    }
    Ok(())
}

fn check_range(value: f64, name: &str, ok: bool, range: &str) -> Result<f64> {
    if !(value.is_finite() && ok) {
        return Err(Error::scalar(format!("{name} must lie in {range}, got {value}")));
    }
    Ok(value)
}

impl ConditionInstance {
    pub fn new(
        condition_id: ConditionId,
        problem: ReachAvoidProblem,
        certificates: BTreeMap<Role, Certificate>,
        scalars: Scalars,
        x0: Option<Vec<f64>>,
    ) -> Result<Self> {
        let required = condition_id.roles();
        for role in required {
            let cert = certificates.get(role).ok_or_else(|| {
                Error::invalid(format!("{condition_id} requires a certificate for role '{role}'"))
            })?;
            if cert.dim() != problem.dim() {
                return Err(Error::dimension(format!(
                    "certificate for role '{role}' has dimension {}, problem has {}",
                    cert.dim(),
                    problem.dim()
                )));
            }
        }
        for role in certificates.keys() {
            if !required.contains(role) {
                return Err(Error::invalid(format!(
                    "{condition_id} does not use a certificate for role '{role}'"
                )));
            }
        }
        if condition_id.needs_invariant() && problem.invariant.is_none() {
            return Err(Error::invalid(format!(
                "{condition_id} requires the problem to declare a robust invariant set"
            )));
        }

        let s = scalars;
        let id = condition_id;
        match condition_id {
            ConditionId::Bc1 => {
                let p = require(s.p, "p", id)?;
                check_range(p, "p", (0.0..=1.0).contains(&p), "[0, 1]")?;
                let eps = require(s.epsilon, "epsilon", id)?;
                check_range(eps, "epsilon", eps > 0.0, "(0, inf)")?;
                forbid(s.lambda, "lambda", id)?;
                forbid(s.gamma, "gamma", id)?;
                forbid(s.delta, "delta", id)?;
                forbid(s.lambda_prime, "lambda_prime", id)?;
            }
            ConditionId::As => {
                let p = require(s.p, "p", id)?;
                check_range(p, "p", (0.0..=1.0).contains(&p), "[0, 1]")?;
                forbid(s.epsilon, "epsilon", id)?;
                forbid(s.lambda, "lambda", id)?;
                forbid(s.gamma, "gamma", id)?;
                forbid(s.delta, "delta", id)?;
                forbid(s.lambda_prime, "lambda_prime", id)?;
            }
            ConditionId::Bc2 => {
                let p = require(s.p, "p", id)?;
                check_range(p, "p", (0.0..1.0).contains(&p), "[0, 1)")?;
                let eps = require(s.epsilon, "epsilon", id)?;
                check_range(eps, "epsilon", eps > 0.0, "(0, inf)")?;
                forbid(s.lambda, "lambda", id)?;
                forbid(s.gamma, "gamma", id)?;
                forbid(s.delta, "delta", id)?;
                forbid(s.lambda_prime, "lambda_prime", id)?;
            }
            ConditionId::Bc3 => {
                forbid(s.p, "p", id)?;
                forbid(s.epsilon, "epsilon", id)?;
                forbid(s.lambda, "lambda", id)?;
                let gamma = require(s.gamma, "gamma", id)?;
                check_range(gamma, "gamma", 0.0 < gamma && gamma < 1.0, "(0, 1)")?;
                let delta = require(s.delta, "delta", id)?;
                check_range(delta, "delta", delta > 0.0, "(0, inf)")?;
                let lp = require(s.lambda_prime, "lambda_prime", id)?;
                check_range(lp, "lambda_prime", lp > 1.0, "(1, inf)")?;
            }
            ConditionId::Bc4 | ConditionId::Bc4Singleton | ConditionId::Bc4Restricted => {
                let p = require(s.p, "p", id)?;
                check_range(p, "p", (0.0..=1.0).contains(&p), "[0, 1]")?;
                let lambda = require(s.lambda, "lambda", id)?;
                check_range(lambda, "lambda", 0.0 < lambda && lambda < 1.0, "(0, 1)")?;
                forbid(s.epsilon, "epsilon", id)?;
                forbid(s.gamma, "gamma", id)?;
                forbid(s.delta, "delta", id)?;
                forbid(s.lambda_prime, "lambda_prime", id)?;
            }
            ConditionId::Bc5 | ConditionId::Bc5Upper => {
                let p = require(s.p, "p", id)?;
                check_range(p, "p", (0.0..=1.0).contains(&p), "[0, 1]")?;
                forbid(s.epsilon, "epsilon", id)?;
                forbid(s.lambda, "lambda", id)?;
                forbid(s.gamma, "gamma", id)?;
                forbid(s.delta, "delta", id)?;
                forbid(s.lambda_prime, "lambda_prime", id)?;
            }
        }

        match (&x0, condition_id == ConditionId::Bc4Singleton) {
            (Some(x0), true) => {
                if x0.len() != problem.dim() {
                    return Err(Error::dimension(format!(
                        "x0 has dimension {}, problem has {}",
                        x0.len(),
                        problem.dim()
                    )));
                }
                if !problem.init.contains(x0) {
                    return Err(Error::invalid(format!(
                        "designated x0 {x0:?} is outside the initial set"
                    )));
                }
            }
            (None, true) => {
                return Err(Error::invalid("BC4_SINGLETON requires a designated x0"));
            }
            (Some(_), false) => {
                return Err(Error::invalid(format!("{condition_id} does not take an x0")));
            }
            (None, false) => {}
        }

        Ok(ConditionInstance { condition_id, problem, certificates, scalars, x0 })
    }

    /// The condition's inequality lines as residual clauses.
    pub fn clauses(&self) -> Vec<ResidualClause> {
        let p = &self.problem;
        let hat = Region::Box { bounds: p.working_box.clone() };
        let hat_minus_safe = Region::complement_within(p.working_box.clone(), p.safe.clone());
        let safe_minus_target = Region::difference(p.safe.clone(), p.target.clone());
        let omega = || p.invariant.clone().expect("validated at construction");
        let s = self.scalars;

        let point = |c: f64, terms: &[(f64, Role)]| ResidualExpr {
            constant: c,
            point_terms: terms.to_vec(),
            expect_terms: Vec::new(),
        };
        let mixed = |c: f64, pt: &[(f64, Role)], et: &[(f64, Role)]| ResidualExpr {
            constant: c,
            point_terms: pt.to_vec(),
            expect_terms: et.to_vec(),
        };

        match self.condition_id {
            ConditionId::Bc1 => {
                let prob = s.p.unwrap();
                let eps = s.epsilon.unwrap();
                vec![
                    ResidualClause::new(
                        "h1_init",
                        p.init.clone(),
                        point(prob - 1.0, &[(1.0, Role::H1)]),
                    ),
                    ResidualClause::new(
                        "h1_drift",
                        p.safe.clone(),
                        mixed(0.0, &[(-1.0, Role::H1)], &[(1.0, Role::H1)]),
                    ),
                    ResidualClause::new(
                        "h1_outside",
                        hat_minus_safe,
                        point(1.0, &[(-1.0, Role::H1)]),
                    ),
                    ResidualClause::new("h1_nonneg", p.safe.clone(), point(0.0, &[(-1.0, Role::H1)])),
                    ResidualClause::new("h2_nonneg", hat, point(0.0, &[(-1.0, Role::H2)])),
                    ResidualClause::new(
                        "h2_drift",
                        safe_minus_target,
                        mixed(eps, &[(-1.0, Role::H2)], &[(1.0, Role::H2)]),
                    ),
                ]
            }
            ConditionId::As => {
                let prob = s.p.unwrap();
                vec![
                    ResidualClause::new("v_init", p.init.clone(), point(prob, &[(-1.0, Role::SubV)])),
                    ResidualClause::new(
                        "v_drift",
                        safe_minus_target,
                        mixed(0.0, &[(1.0, Role::SubV)], &[(-1.0, Role::SubV)]),
                    ),
                    ResidualClause::new(
                        "v_target_cap",
                        p.target.clone(),
                        point(-1.0, &[(1.0, Role::SubV)]),
                    ),
                    ResidualClause::new("v_outside", hat_minus_safe, point(0.0, &[(1.0, Role::SubV)])),
                ]
            }
            ConditionId::Bc2 => {
                let prob = s.p.unwrap();
                let eps = s.epsilon.unwrap();
                let level = 1.0 / (1.0 - prob);
                vec![
                    ResidualClause::new("V_nonneg", omega(), point(0.0, &[(-1.0, Role::SupV)])),
                    ResidualClause::new(
                        "V_init_cap",
                        p.init.clone(),
                        point(-1.0, &[(1.0, Role::SupV)]),
                    ),
                    ResidualClause::new(
                        "V_outside",
                        Region::difference(omega(), p.safe.clone()),
                        point(level, &[(-1.0, Role::SupV)]),
                    ),
                    ResidualClause::new(
                        "V_drift",
                        Region::difference(omega(), p.target.clone()),
                        mixed(eps, &[(-1.0, Role::SupV)], &[(1.0, Role::SupV)]),
                    )
                    .guarded(Guard::UpperLevel { role: Role::SupV, threshold: level }),
                ]
            }
            ConditionId::Bc3 => {
                let gamma = s.gamma.unwrap();
                let delta = s.delta.unwrap();
                let lp = s.lambda_prime.unwrap();
                vec![
                    ResidualClause::new("V_nonneg", omega(), point(0.0, &[(-1.0, Role::SupV)])),
                    ResidualClause::new(
                        "V_floor",
                        Region::difference(omega(), p.target.clone()),
                        point(delta, &[(-1.0, Role::SupV)]),
                    ),
                    ResidualClause::new(
                        "V_init_cap",
                        p.init.clone(),
                        point(-1.0, &[(1.0, Role::SupV)]),
                    ),
                    ResidualClause::new(
                        "V_outside",
                        Region::difference(omega(), p.safe.clone()),
                        point(lp, &[(-1.0, Role::SupV)]),
                    ),
                    ResidualClause::new(
                        "V_drift",
                        Region::difference(omega(), p.target.clone()),
                        mixed(0.0, &[(-gamma, Role::SupV)], &[(1.0, Role::SupV)]),
                    )
                    .guarded(Guard::UpperLevel { role: Role::SupV, threshold: lp }),
                ]
            }
            ConditionId::Bc4 | ConditionId::Bc4Singleton => {
                let prob = s.p.unwrap();
                let lambda = s.lambda.unwrap();
                let init_domain = match self.condition_id {
                    ConditionId::Bc4Singleton => Region::Box {
                        bounds: AxisBox::singleton(self.x0.as_ref().unwrap()),
                    },
                    _ => p.init.clone(),
                };
                vec![
                    ResidualClause::new("h_init", init_domain, point(prob, &[(-1.0, Role::H)])),
                    ResidualClause::new("h_outside", hat_minus_safe, point(0.0, &[(1.0, Role::H)])),
                    ResidualClause::new(
                        "h_target_cap",
                        p.target.clone(),
                        point(-1.0, &[(1.0, Role::H)]),
                    ),
                    ResidualClause::new(
                        "h_drift",
                        safe_minus_target,
                        mixed(0.0, &[(1.0, Role::H)], &[(-lambda, Role::H)]),
                    ),
                ]
            }
            ConditionId::Bc4Restricted => {
                let prob = s.p.unwrap();
                let lambda = s.lambda.unwrap();
                vec![
                    ResidualClause::new("h_init", p.init.clone(), point(prob, &[(-1.0, Role::H)])),
                    ResidualClause::new(
                        "h_outside",
                        Region::difference(omega(), p.safe.clone()),
                        point(0.0, &[(1.0, Role::H)]),
                    ),
                    ResidualClause::new("h_cap", omega(), point(-1.0, &[(1.0, Role::H)])),
                    ResidualClause::new(
                        "h_drift",
                        safe_minus_target,
                        mixed(0.0, &[(1.0, Role::H)], &[(-lambda, Role::H)]),
                    )
                    .guarded(Guard::LowerLevel { role: Role::H }),
                ]
            }
            ConditionId::Bc5 => {
                let prob = s.p.unwrap();
                vec![
                    ResidualClause::new("h1_init", p.init.clone(), point(prob, &[(-1.0, Role::H1)])),
                    ResidualClause::new("h1_outside", hat_minus_safe, point(0.0, &[(1.0, Role::H1)])),
                    ResidualClause::new(
                        "h1_target_cap",
                        p.target.clone(),
                        point(-1.0, &[(1.0, Role::H1)]),
                    ),
                    ResidualClause::new(
                        "h1_drift",
                        safe_minus_target.clone(),
                        mixed(0.0, &[(1.0, Role::H1)], &[(-1.0, Role::H1)]),
                    ),
                    ResidualClause::new(
                        "h2_coupling",
                        safe_minus_target,
                        mixed(0.0, &[(1.0, Role::H1), (1.0, Role::H2)], &[(-1.0, Role::H2)]),
                    ),
                ]
            }
            ConditionId::Bc5Upper => {
                let prob = s.p.unwrap();
                vec![
                    ResidualClause::new(
                        "h1_init",
                        p.init.clone(),
                        point(-prob, &[(1.0, Role::H1)]),
                    ),
                    ResidualClause::new(
                        "h1_outside",
                        hat_minus_safe,
                        point(0.0, &[(-1.0, Role::H1)]),
                    ),
                    ResidualClause::new(
                        "h1_target_floor",
                        p.target.clone(),
                        point(1.0, &[(-1.0, Role::H1)]),
                    ),
                    ResidualClause::new(
                        "h1_drift",
                        safe_minus_target.clone(),
                        mixed(0.0, &[(-1.0, Role::H1)], &[(1.0, Role::H1)]),
                    ),
                    ResidualClause::new(
                        "h2_coupling",
                        safe_minus_target,
                        mixed(0.0, &[(-1.0, Role::H1), (-1.0, Role::H2)], &[(1.0, Role::H2)]),
                    ),
                ]
            }
        }
    }

    /// Residual at a point for one of this instance's clauses, `None` when
    /// the point escapes the clause's domain or guard.
    pub fn residual_at(
        &self,
        clause: &ResidualClause,
        x: &[f64],
        grid: &ExpectationGrid,
    ) -> Option<f64> {
        clause.residual_at(&self.certificates, &self.problem.system, grid, x)
    }

    /// The probability statement certified by a feasible instance.
    pub fn certified_bound(&self) -> Bound {
        match self.condition_id {
            ConditionId::Bc3 => Bound::Lower(1.0 - 1.0 / self.scalars.lambda_prime.unwrap()),
            ConditionId::Bc5Upper => Bound::Upper(self.scalars.p.unwrap()),
            _ => Bound::Lower(self.scalars.p.unwrap()),
        }
    }
}

/// The transformed five-line system obtained from the lower-bound coupling
/// condition by substituting `h -> 1 - h` for both functions. Feasibility of
/// the original pair is equivalent to feasibility of the primed pair here,
/// clause by clause.
pub fn bc5_transformed_clauses(problem: &ReachAvoidProblem, p: f64) -> Vec<ResidualClause> {
    let hat_minus_safe = Region::complement_within(problem.working_box.clone(), problem.safe.clone());
    let safe_minus_target = Region::difference(problem.safe.clone(), problem.target.clone());
    vec![
        ResidualClause::new(
            "h1p_init",
            problem.init.clone(),
            ResidualExpr {
                constant: p - 1.0,
                point_terms: vec![(1.0, Role::H1)],
                expect_terms: vec![],
            },
        ),
        ResidualClause::new(
            "h1p_outside",
            hat_minus_safe,
            ResidualExpr {
                constant: 1.0,
                point_terms: vec![(-1.0, Role::H1)],
                expect_terms: vec![],
            },
        ),
        ResidualClause::new(
            "h1p_target_floor",
            problem.target.clone(),
            ResidualExpr {
                constant: 0.0,
                point_terms: vec![(-1.0, Role::H1)],
                expect_terms: vec![],
            },
        ),
        ResidualClause::new(
            "h1p_drift",
            safe_minus_target.clone(),
            ResidualExpr {
                constant: 0.0,
                point_terms: vec![(-1.0, Role::H1)],
                expect_terms: vec![(1.0, Role::H1)],
            },
        ),
        ResidualClause::new(
            "h2p_coupling",
            safe_minus_target,
            ResidualExpr {
                constant: 1.0,
                point_terms: vec![(-1.0, Role::H2), (-1.0, Role::H1)],
                expect_terms: vec![(1.0, Role::H2)],
            },
        ),
    ]
}

/// An additive supermartingale with slack `epsilon` and exit level `lambda =
/// 1/(1-p)` is also a multiplicative one with parameters
/// `((lambda - epsilon)/lambda, min(epsilon, lambda), lambda)`.
pub fn aras_to_mras(epsilon: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::scalar(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(lambda.is_finite() && lambda > 1.0) {
        return Err(Error::scalar(format!("lambda must exceed 1, got {lambda}")));
    }
    let gamma = (lambda - epsilon) / lambda;
    if gamma <= 0.0 {
        return Err(Error::scalar(format!(
            "epsilon {epsilon} >= lambda {lambda} makes gamma nonpositive"
        )));
    }
    Ok((gamma, epsilon.min(lambda), lambda))
}

/// A multiplicative supermartingale with parameters `(gamma, delta, lambda)`
/// is also an additive one with slack `(1 - gamma) * delta`.
pub fn mras_to_aras(gamma: f64, delta: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(gamma.is_finite() && 0.0 < gamma && gamma < 1.0) {
        return Err(Error::scalar(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::scalar(format!("delta must be positive, got {delta}")));
    }
    if !(lambda.is_finite() && lambda > 1.0) {
        return Err(Error::scalar(format!("lambda must exceed 1, got {lambda}")));
    }
    Ok(((1.0 - gamma) * delta, lambda))
}

/// Rebase an additive supermartingale `V` into the restricted Bellman-style
/// condition: `h = 1 - (1-p)V` works with any `lambda >= 1/(1 + (1-p)
/// epsilon)`.
pub fn aras_to_bc4restricted(v: &Certificate, epsilon: f64, p: f64) -> Result<(Certificate, f64)> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::scalar(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(p.is_finite() && (0.0..1.0).contains(&p)) {
        return Err(Error::scalar(format!("p must lie in [0, 1), got {p}")));
    }
    let h = Certificate::affine_of(-(1.0 - p), 1.0, v.clone());
    Ok((h, 1.0 / (1.0 + (1.0 - p) * epsilon)))
}

/// Absolute tolerance of the numerical search for the multiplicative
/// conversion's lambda threshold.
pub const LAMBDA_SEARCH_TOL: f64 = 1e-9;

/// Rebase a multiplicative supermartingale `V` into the restricted
/// Bellman-style condition with `p = 1 - 1/lambda'`. The admissible lambda
/// threshold is `max` over `t in [delta, lambda']` of `(1 - t/lambda') / (1 -
/// gamma t/lambda')`; the maximizer is located numerically (coarse grid plus
/// golden-section refinement) to within [`LAMBDA_SEARCH_TOL`].
pub fn mras_to_bc4restricted(
    v: &Certificate,
    gamma: f64,
    delta: f64,
    lambda_prime: f64,
) -> Result<(Certificate, f64, f64)> {
    if !(gamma.is_finite() && 0.0 < gamma && gamma < 1.0) {
        return Err(Error::scalar(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::scalar(format!("delta must be positive, got {delta}")));
    }
    if !(lambda_prime.is_finite() && lambda_prime > 1.0) {
        return Err(Error::scalar(format!("lambda_prime must exceed 1, got {lambda_prime}")));
    }
    if delta > lambda_prime {
        return Err(Error::scalar(format!(
            "delta {delta} must not exceed lambda_prime {lambda_prime}"
        )));
    }
    let p = 1.0 - 1.0 / lambda_prime;
    // denominator is >= 1 - gamma > 0 on the whole search interval
    let objective = |t: f64| (1.0 - t / lambda_prime) / (1.0 - gamma * t / lambda_prime);
    let lambda_min = maximize_on_interval(objective, delta, lambda_prime, LAMBDA_SEARCH_TOL);
    if lambda_min >= 1.0 {
        return Err(Error::scalar(format!(
            "derived lambda threshold {lambda_min} leaves no admissible lambda in (0, 1)"
        )));
    }
    let h = Certificate::affine_of(-(1.0 - p), 1.0, v.clone());
    Ok((h, lambda_min, p))
}

/// Maximum of a smooth unimodal-or-monotone objective on `[a, b]`: coarse
/// grid to bracket the best point, then golden-section to `tol` in the
/// argument.
fn maximize_on_interval(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return f(a);
    }
    const GRID: usize = 1024;
    let step = (b - a) / GRID as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=GRID {
        let v = f(a + step * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = a + step * best_i.saturating_sub(1) as f64;
    let mut hi = (a + step * (best_i + 1) as f64).min(b);
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    best.max(f1).max(f2)
}

/// Substitute `h -> 1 - h` in both coupled certificates. Applying the
/// transform twice returns the original certificates exactly.
pub fn bc5_transform(h1: &Certificate, h2: &Certificate) -> (Certificate, Certificate) {
    (flip(h1), flip(h2))
}

fn flip(c: &Certificate) -> Certificate {
    match c {
        // unwrap an existing 1 - g wrapper so the transform is an involution
        Certificate::AffineOf { scale, offset, inner } if *scale == -1.0 && *offset == 1.0 => {
            (**inner).clone()
        }
        other => Certificate::affine_of(-1.0, 1.0, other.clone()),
    }
}
