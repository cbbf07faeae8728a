//! Report formats shared by the library and the CLI.
//!
//! Every machine-readable artifact carries a schema version so downstream
//! tooling can detect format drift; tests pin the CSV header rows verbatim.

use crate::conditions::{Bound, ConditionId, Scalars};
use crate::oracle::ProbabilityEstimate;
use crate::verifier::{Status, VerificationVerdict};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Pinned header of the bench feasibility matrix.
pub const BENCH_CSV_HEADER: &str = "example,condition,template,p,scalars,status,wall_time,seed";

/// Pinned header of the per-clause breakdown CSV.
pub const CLAUSE_CSV_HEADER: &str =
    "clause,status,worst_margin,cells_checked,cells_excluded_by_guard,inconclusive_cells,counterexamples";

/// Full verify output: condition identity, claimed bound, and the grid
/// verdict with per-clause detail.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerdictReport {
    pub schema_version: u32,
    pub condition: ConditionId,
    pub scalars: Scalars,
    /// Bound certified if and only if `verdict.status` is `Certified`.
    pub bound: Bound,
    pub verdict: VerificationVerdict,
}

impl VerdictReport {
    pub fn new(condition: ConditionId, scalars: Scalars, bound: Bound, verdict: VerificationVerdict) -> Self {
        VerdictReport { schema_version: SCHEMA_VERSION, condition, scalars, bound, verdict }
    }

    /// Per-clause CSV, header included.
    pub fn clause_csv(&self) -> String {
        let mut out = String::from(CLAUSE_CSV_HEADER);
        out.push('\n');
        for clause in &self.verdict.clauses {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_field(&clause.label),
                status_name(clause.status),
                clause.worst_margin,
                clause.cells_checked,
                clause.cells_excluded_by_guard,
                clause.inconclusive_cell_count,
                clause.counterexamples.len(),
            ));
        }
        out
    }

    /// Counterexample CSV: one row per admitted violation point.
    pub fn counterexample_csv(&self) -> String {
        let dim = self
            .verdict
            .clauses
            .iter()
            .flat_map(|c| c.counterexamples.iter())
            .map(|c| c.x.len())
            .max()
            .unwrap_or(0);
        let mut out = String::from("clause");
        for i in 1..=dim {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",residual\n");
        for clause in &self.verdict.clauses {
            for cex in &clause.counterexamples {
                out.push_str(&csv_field(&clause.label));
                for v in &cex.x {
                    out.push_str(&format!(",{v}"));
                }
                out.push_str(&format!(",{}\n", cex.residual));
            }
        }
        out
    }

    /// Human-readable clause table for terminal output.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "condition {} [{}] -> {}\n",
            self.condition,
            self.scalars.describe(),
            match self.bound {
                Bound::Lower(p) => format!("lower bound {p}"),
                Bound::Upper(p) => format!("upper bound {p}"),
            }
        );
        out.push_str(&format!(
            "verdict: {} at resolution {} ({} residual evaluations)\n",
            status_name(self.verdict.status),
            self.verdict.resolution,
            self.verdict.residual_evals
        ));
        let width = self
            .verdict
            .clauses
            .iter()
            .map(|c| c.label.len())
            .max()
            .unwrap_or(6)
            .max(6);
        for clause in &self.verdict.clauses {
            out.push_str(&format!(
                "  {:width$}  {:12}  worst margin {:>13.6e}  cells {}  undecided {}  counterexamples {}\n",
                clause.label,
                status_name(clause.status),
                clause.worst_margin,
                clause.cells_checked,
                clause.inconclusive_cell_count,
                clause.counterexamples.len(),
            ));
        }
        out
    }
}

/// Estimate output of the oracle command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub x0: Vec<f64>,
    pub estimate: ProbabilityEstimate,
}

impl EstimateReport {
    pub fn new(x0: Vec<f64>, estimate: ProbabilityEstimate) -> Self {
        EstimateReport { schema_version: SCHEMA_VERSION, x0, estimate }
    }
}

/// Outcome of one bench cell. `Error` rows record the diagnostic instead of
/// aborting the matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CellStatus {
    Certified,
    Violated,
    Inconclusive,
    Failed,
    Error(String),
}

impl CellStatus {
    pub fn name(&self) -> &str {
        match self {
            CellStatus::Certified => "certified",
            CellStatus::Violated => "violated",
            CellStatus::Inconclusive => "inconclusive",
            CellStatus::Failed => "failed",
            CellStatus::Error(_) => "error",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub example: String,
    pub condition: ConditionId,
    pub template: String,
    /// Threshold attempted; `None` for conditions that derive their bound.
    pub p: Option<f64>,
    pub scalars: Scalars,
    pub status: CellStatus,
    pub wall_time: f64,
    pub seed: u64,
}

impl BenchRow {
    fn csv_row(&self) -> String {
        let detail = match &self.status {
            CellStatus::Error(msg) => format!("error: {msg}"),
            _ => self.status.name().to_string(),
        };
        format!(
            "{},{},{},{},{},{},{:.3},{}",
            csv_field(&self.example),
            self.condition,
            csv_field(&self.template),
            self.p.map(|p| p.to_string()).unwrap_or_default(),
            csv_field(&self.scalars.describe()),
            csv_field(&detail),
            self.wall_time,
            self.seed,
        )
    }
}

/// Bench matrix in canonical order: (example, condition, template, p, seed),
/// independent of the completion order of the parallel cells.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut sorted: Vec<&BenchRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.example, a.condition.name(), &a.template)
            .cmp(&(&b.example, b.condition.name(), &b.template))
            .then(a.p.partial_cmp(&b.p).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.seed.cmp(&b.seed))
    });
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for row in sorted {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

fn status_name(status: Status) -> &'static str {
    match status {
        Status::Certified => "certified",
        Status::Violated => "violated",
        Status::Inconclusive => "inconclusive",
    }
}

/// Quote a CSV field when it contains a delimiter, quote, or newline.
fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::{ClauseReport, Counterexample};

    fn verdict() -> VerificationVerdict {
        VerificationVerdict {
            status: Status::Violated,
            resolution: 0.05,
            quad_order: 4,
            residual_evals: 1234,
            clauses: vec![
                ClauseReport {
                    label: "h_init".into(),
                    status: Status::Violated,
                    worst_margin: 0.25,
                    counterexamples: vec![Counterexample { x: vec![0.1, -0.2], residual: 0.25 }],
                    cells_checked: 16,
                    cells_excluded_by_guard: 0,
                    inconclusive_cell_count: 0,
                    inconclusive_cells: vec![],
                },
                ClauseReport {
                    label: "h_drift".into(),
                    status: Status::Certified,
                    worst_margin: -0.01,
                    counterexamples: vec![],
                    cells_checked: 400,
                    cells_excluded_by_guard: 12,
                    inconclusive_cell_count: 0,
                    inconclusive_cells: vec![],
                },
            ],
        }
    }

    fn report() -> VerdictReport {
        VerdictReport::new(
            ConditionId::Bc4,
            Scalars::default().with_p(0.6).with_lambda(0.9999),
            Bound::Lower(0.6),
            verdict(),
        )
    }

    #[test]
    fn bench_header_is_pinned() {
        assert_eq!(BENCH_CSV_HEADER, "example,condition,template,p,scalars,status,wall_time,seed");
        assert_eq!(
            CLAUSE_CSV_HEADER,
            "clause,status,worst_margin,cells_checked,cells_excluded_by_guard,inconclusive_cells,counterexamples"
        );
    }

    #[test]
    fn bench_csv_sorts_canonically_and_escapes() {
        let mk = |example: &str, p: f64, status: CellStatus| BenchRow {
            example: example.into(),
            condition: ConditionId::Bc4,
            template: "net8x8".into(),
            p: Some(p),
            scalars: Scalars::default().with_p(p).with_lambda(0.9999),
            status,
            wall_time: 1.5,
            seed: 3,
        };
        let rows = vec![
            mk("ex4", 0.6, CellStatus::Certified),
            mk("ex3", 0.6, CellStatus::Error("bad, \"quoted\" msg".into())),
            mk("ex4", 0.4, CellStatus::Failed),
        ];
        let csv = bench_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], BENCH_CSV_HEADER);
        assert!(lines[1].starts_with("ex3,BC4,net8x8,0.6,"));
        assert!(lines[2].starts_with("ex4,BC4,net8x8,0.4,"));
        assert!(lines[3].starts_with("ex4,BC4,net8x8,0.6,"));
        // quoted error detail with doubled quotes
        assert!(lines[1].contains("\"error: bad, \"\"quoted\"\" msg\""));
        // scalars field contains a space, no comma: unquoted
        assert!(lines[1].contains("p=0.6 lambda=0.9999"));
    }

    #[test]
    fn clause_and_counterexample_csv_shapes() {
        let rep = report();
        let clause_csv = rep.clause_csv();
        let lines: Vec<&str> = clause_csv.lines().collect();
        assert_eq!(lines[0], CLAUSE_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("h_init,violated,0.25,16,0,0,1"));

        let cex_csv = rep.counterexample_csv();
        let lines: Vec<&str> = cex_csv.lines().collect();
        assert_eq!(lines[0], "clause,x1,x2,residual");
        assert_eq!(lines[1], "h_init,0.1,-0.2,0.25");
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn verdict_report_json_round_trip() {
        let rep = report();
        let json = serde_json::to_string_pretty(&rep).unwrap();
        let back: VerdictReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.schema_version, SCHEMA_VERSION);
        assert_eq!(back.condition, ConditionId::Bc4);
        assert_eq!(back.verdict.status, Status::Violated);
        assert_eq!(back.verdict.clauses.len(), 2);
        // in-memory refinement cells never leak into JSON
        assert!(!json.contains("inconclusive_cells\""));
    }

    #[test]
    fn render_table_mentions_every_clause() {
        let rep = report();
        let table = rep.render_table();
        assert!(table.contains("h_init"));
        assert!(table.contains("h_drift"));
        assert!(table.contains("lower bound 0.6"));
        assert!(table.contains("violated"));
    }

    #[test]
    fn estimate_report_embeds_oracle_schema() {
        let est = ProbabilityEstimate {
            p_hat: 0.5,
            lo: 0.4,
            hi: 0.6,
            undecided: 0.0,
            n: 100,
            horizon: 10,
            seed: 1,
        };
        let rep = EstimateReport::new(vec![0.1], est);
        let json = serde_json::to_value(&rep).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["estimate"]["N"], 100);
        assert_eq!(json["estimate"]["K"], 10);
    }
}
