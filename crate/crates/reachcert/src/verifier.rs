//! Sound grid verification of condition instances.
//!
//! Each clause domain is covered by cells; on every cell the test
//! `residual(center) + L_cell * radius <= 0` discharges the clause, where
//! `L_cell` combines certificate Lipschitz bounds with the dynamics' interval
//! Jacobian bound (for expectation terms, `L_{E[g o f]} <= L_g(image box) *
//! L_f(cell)`). Cells that fail the margin test trigger an exact-evaluation
//! violation search; a positive residual at a real domain point is a
//! counterexample. The verdict is three-valued: a failed margin without a
//! counterexample is Inconclusive, never Violated.
//!
//! Verdicts are bit-reproducible for fixed inputs regardless of worker
//! count: cells are processed in a fixed order-preserving partition, random
//! search points are seeded per (clause, cell), and merges are pure folds
//! over the ordered outcome list.

use crate::certificate::Certificate;
use crate::conditions::{ConditionInstance, ResidualClause, ResidualExpr, Role};
use crate::error::{Error, Result};
use crate::exec;
use crate::problem::derive_seed;
use crate::region::GridCell;
use crate::system::SystemModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Certified,
    Violated,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct VerifySettings {
    /// Cell radius of the covering grid.
    pub resolution: f64,
    /// Gauss-Legendre order per noise axis for expectation terms.
    pub quad_order: usize,
    /// Per-clause cap on covering cells.
    pub max_cells: u64,
    /// Cap on total residual evaluations, checked between clauses.
    pub max_residual_evals: u64,
    /// Seed of the in-cell violation search.
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            resolution: 0.05,
            quad_order: 4,
            max_cells: 4_000_000,
            max_residual_evals: 100_000_000,
            seed: 0,
        }
    }
}

impl VerifySettings {
    pub fn with_resolution(mut self, r: f64) -> Self {
        self.resolution = r;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::invalid(format!(
                "resolution must be > 0, got {}",
                self.resolution
            )));
        }
        Ok(())
    }
}

/// A concrete violation: `residual > 0` verified by direct evaluation at `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClauseReport {
    pub label: String,
    pub status: Status,
    /// Worst `residual(center) + L * r` among cells of the latest pass over
    /// this clause; `-inf` when the domain produced no cells.
    pub worst_margin: f64,
    pub counterexamples: Vec<Counterexample>,
    pub cells_checked: u64,
    pub cells_excluded_by_guard: u64,
    pub inconclusive_cell_count: u64,
    /// Cells still undecided, kept for refinement; omitted from JSON.
    #[serde(skip)]
    pub inconclusive_cells: Vec<GridCell>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub status: Status,
    pub resolution: f64,
    pub quad_order: usize,
    pub residual_evals: u64,
    pub clauses: Vec<ClauseReport>,
}

impl VerificationVerdict {
    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }
}

enum CellOutcome {
    Passed { margin: f64, evals: u64 },
    GuardExcluded,
    Failed { margin: f64, counterexample: Option<Counterexample>, cell: GridCell, evals: u64 },
}

pub(crate) fn residual_lipschitz(
    expr: &ResidualExpr,
    certs: &BTreeMap<Role, Certificate>,
    system: &SystemModel,
    cell: &GridCell,
) -> f64 {
    let cell_box = cell.as_box();
    let mut l = 0.0;
    for &(a, role) in &expr.point_terms {
        l += a.abs() * certs[&role].lipschitz_bound(&cell_box);
    }
    if !expr.expect_terms.is_empty() {
        let image = system.image_box(&cell_box);
        let lf = system.lipschitz_bound(&cell_box);
        for &(b, role) in &expr.expect_terms {
            l += b.abs() * certs[&role].lipschitz_bound(&image) * lf;
        }
    }
    l
}

fn check_cell(
    clause: &ResidualClause,
    certs: &BTreeMap<Role, Certificate>,
    system: &SystemModel,
    grid: &crate::distribution::ExpectationGrid,
    cell: &GridCell,
    search_seed: u64,
) -> CellOutcome {
    if let Some(guard) = &clause.guard {
        if guard.excludes_cell(certs, cell) {
            return CellOutcome::GuardExcluded;
        }
    }
    let center_value = clause.expr.eval(certs, system, grid, &cell.center);
    let mut evals = 1u64;
    let radius = cell.radius();
    let margin = center_value + residual_lipschitz(&clause.expr, certs, system, cell) * radius;
    if margin <= 0.0 {
        return CellOutcome::Passed { margin, evals };
    }

    // margin failed: hunt for an exact violation at the center, the 2n axis
    // extremes, and 8 seeded random points of the cell
    let n = cell.center.len();
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(2 * n + 9);
    candidates.push(cell.center.clone());
    for i in 0..n {
        for sign in [-1.0, 1.0] {
            let mut x = cell.center.clone();
            x[i] += sign * cell.half[i];
            candidates.push(x);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search_seed);
    let cell_box = cell.as_box();
    for _ in 0..8 {
        candidates.push(cell_box.sample(&mut rng));
    }
    let admitted = |x: &[f64]| {
        clause.domain.contains(x)
            && clause.guard.as_ref().map_or(true, |g| g.admits(certs, x))
    };
    let mut counterexample = None;
    for (k, x) in candidates.iter().enumerate() {
        if !admitted(x) {
            continue;
        }
        let value = if k == 0 {
            center_value
        } else {
            evals += 1;
            clause.expr.eval(certs, system, grid, x)
        };
        if value > 0.0 {
            counterexample = Some(Counterexample { x: x.clone(), residual: value });
            break;
        }
    }
    CellOutcome::Failed { margin, counterexample, cell: cell.clone(), evals }
}

fn merge_clause(
    label: &str,
    outcomes: Vec<CellOutcome>,
    carried: Option<&ClauseReport>,
) -> (ClauseReport, u64) {
    let mut worst = f64::NEG_INFINITY;
    let mut counterexamples = Vec::new();
    let mut inconclusive = Vec::new();
    let mut checked = 0u64;
    let mut excluded = 0u64;
    let mut evals = 0u64;
    for outcome in outcomes {
        match outcome {
            CellOutcome::Passed { margin, evals: e } => {
                checked += 1;
                evals += e;
                worst = worst.max(margin);
            }
            CellOutcome::GuardExcluded => {
                checked += 1;
                excluded += 1;
            }
            CellOutcome::Failed { margin, counterexample, cell, evals: e } => {
                checked += 1;
                evals += e;
                worst = worst.max(margin);
                match counterexample {
                    Some(cex) => counterexamples.push(cex),
                    None => inconclusive.push(cell),
                }
            }
        }
    }
    counterexamples.sort_by(|a, b| {
        a.x.partial_cmp(&b.x).expect("counterexample coordinates are finite")
    });
    counterexamples.dedup_by(|a, b| a.x == b.x);
    if let Some(prev) = carried {
        checked += prev.cells_checked;
        excluded += prev.cells_excluded_by_guard;
        let mut all = prev.counterexamples.clone();
        all.extend(counterexamples);
        all.sort_by(|a, b| a.x.partial_cmp(&b.x).expect("finite"));
        all.dedup_by(|a, b| a.x == b.x);
        counterexamples = all;
    }
    let status = if !counterexamples.is_empty() {
        Status::Violated
    } else if !inconclusive.is_empty() {
        Status::Inconclusive
    } else {
        Status::Certified
    };
    (
        ClauseReport {
            label: label.to_string(),
            status,
            worst_margin: worst,
            counterexamples,
            cells_checked: checked,
            cells_excluded_by_guard: excluded,
            inconclusive_cell_count: inconclusive.len() as u64,
            inconclusive_cells: inconclusive,
        },
        evals,
    )
}

fn overall_status(clauses: &[ClauseReport]) -> Status {
    if clauses.iter().any(|c| c.status == Status::Violated) {
        Status::Violated
    } else if clauses.iter().any(|c| c.status == Status::Inconclusive) {
        Status::Inconclusive
    } else {
        Status::Certified
    }
}

/// Verify an explicit clause list against a certificate map. This is the
/// engine behind [`verify`]; it is public so planted clause lists can be
/// checked directly.
pub fn verify_clauses(
    system: &SystemModel,
    certs: &BTreeMap<Role, Certificate>,
    clauses: &[ResidualClause],
    settings: &VerifySettings,
) -> Result<VerificationVerdict> {
    settings.validate()?;
    let grid = system.expectation_grid(settings.quad_order)?;
    let mut reports = Vec::with_capacity(clauses.len());
    let mut total_evals = 0u64;
    for (ci, clause) in clauses.iter().enumerate() {
        let cells = clause.domain.grid(settings.resolution, settings.max_cells)?;
        if total_evals + cells.len() as u64 > settings.max_residual_evals {
            return Err(Error::resource(format!(
                "residual evaluation cap {} exceeded at clause '{}'",
                settings.max_residual_evals, clause.label
            )));
        }
        let clause_seed = derive_seed(settings.seed, ci as u64);
        let outcomes: Vec<CellOutcome> = exec::map_range(cells.len(), |idx| {
            check_cell(
                clause,
                certs,
                system,
                &grid,
                &cells[idx],
                derive_seed(clause_seed, idx as u64),
            )
        });
        let (report, evals) = merge_clause(&clause.label, outcomes, None);
        total_evals += evals;
        reports.push(report);
    }
    Ok(VerificationVerdict {
        status: overall_status(&reports),
        resolution: settings.resolution,
        quad_order: settings.quad_order,
        residual_evals: total_evals,
        clauses: reports,
    })
}

/// Verify a condition instance at the settings' resolution.
pub fn verify(instance: &ConditionInstance, settings: &VerifySettings) -> Result<VerificationVerdict> {
    verify_clauses(
        &instance.problem.system,
        &instance.certificates,
        &instance.clauses(),
        settings,
    )
}

/// Re-verify only the previously inconclusive cells at a finer resolution;
/// clauses already Certified or Violated are carried over untouched.
pub fn refine(
    instance: &ConditionInstance,
    previous: &VerificationVerdict,
    r_next: f64,
    settings: &VerifySettings,
) -> Result<VerificationVerdict> {
    refine_clauses(
        &instance.problem.system,
        &instance.certificates,
        &instance.clauses(),
        previous,
        r_next,
        settings,
    )
}

pub fn refine_clauses(
    system: &SystemModel,
    certs: &BTreeMap<Role, Certificate>,
    clauses: &[ResidualClause],
    previous: &VerificationVerdict,
    r_next: f64,
    settings: &VerifySettings,
) -> Result<VerificationVerdict> {
    if !(r_next > 0.0 && r_next < previous.resolution) {
        return Err(Error::invalid(format!(
            "refinement radius {r_next} must be positive and below {}",
            previous.resolution
        )));
    }
    if clauses.len() != previous.clauses.len() {
        return Err(Error::invalid("verdict does not match the clause list"));
    }
    let grid = system.expectation_grid(settings.quad_order)?;
    let mut reports = Vec::with_capacity(clauses.len());
    let mut total_evals = previous.residual_evals;
    for (ci, (clause, prev)) in clauses.iter().zip(&previous.clauses).enumerate() {
        if prev.status != Status::Inconclusive {
            reports.push(prev.clone());
            continue;
        }
        // cover every undecided cell with sub-cells of the finer radius
        let mut sub_cells = Vec::new();
        for cell in &prev.inconclusive_cells {
            let sub = crate::region::Region::Box { bounds: cell.as_box() }
                .grid(r_next, settings.max_cells)?;
            sub_cells.extend(sub);
        }
        if total_evals + sub_cells.len() as u64 > settings.max_residual_evals {
            return Err(Error::resource(format!(
                "residual evaluation cap {} exceeded refining clause '{}'",
                settings.max_residual_evals, clause.label
            )));
        }
        let clause_seed = derive_seed(derive_seed(settings.seed, 0x5e71), ci as u64);
        let outcomes: Vec<CellOutcome> = exec::map_range(sub_cells.len(), |idx| {
            check_cell(
                clause,
                certs,
                system,
                &grid,
                &sub_cells[idx],
                derive_seed(clause_seed, idx as u64),
            )
        });
        let (report, evals) = merge_clause(&clause.label, outcomes, Some(prev));
        total_evals += evals;
        reports.push(report);
    }
    Ok(VerificationVerdict {
        status: overall_status(&reports),
        resolution: r_next,
        quad_order: settings.quad_order,
        residual_evals: total_evals,
        clauses: reports,
    })
}

/// Statistical soundness audit: evaluate every clause exactly at `samples`
/// rejection-sampled domain points and report positive residuals.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub violations: u64,
    pub points_checked: u64,
    pub worst_residual: f64,
}

pub fn audit(
    instance: &ConditionInstance,
    samples: usize,
    quad_order: usize,
    seed: u64,
) -> Result<AuditReport> {
    audit_clauses(
        &instance.problem.system,
        &instance.certificates,
        &instance.clauses(),
        samples,
        quad_order,
        seed,
    )
}

pub fn audit_clauses(
    system: &SystemModel,
    certs: &BTreeMap<Role, Certificate>,
    clauses: &[ResidualClause],
    samples: usize,
    quad_order: usize,
    seed: u64,
) -> Result<AuditReport> {
    let grid = system.expectation_grid(quad_order)?;
    let mut violations = 0u64;
    let mut checked = 0u64;
    let mut worst = f64::NEG_INFINITY;
    for (ci, clause) in clauses.iter().enumerate() {
        // chunked parallel sampling with per-chunk derived seeds
        const CHUNK: usize = 4096;
        let chunks = samples.div_ceil(CHUNK);
        let clause_seed = derive_seed(seed, ci as u64);
        let results: Vec<(u64, u64, f64)> = exec::map_range(chunks, |chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(clause_seed, chunk as u64));
            let count = CHUNK.min(samples - chunk * CHUNK);
            let mut v = 0u64;
            let mut c = 0u64;
            let mut w = f64::NEG_INFINITY;
            for _ in 0..count {
                let Some(x) = clause.domain.sample(&mut rng, 200) else { continue };
                let Some(r) = clause.residual_at(certs, system, &grid, &x) else { continue };
                c += 1;
                w = w.max(r);
                if r > 0.0 {
                    v += 1;
                }
            }
            (v, c, w)
        });
        for (v, c, w) in results {
            violations += v;
            checked += c;
            worst = worst.max(w);
        }
    }
    Ok(AuditReport { violations, points_checked: checked, worst_residual: worst })
}
