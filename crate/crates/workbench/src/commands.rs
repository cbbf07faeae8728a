//! Subcommand implementations for the `reachcert` binary.
//!
//! Each command reads JSON inputs, delegates to the library, and reports
//! through exit codes: 0 success/certified, 1 violated or synthesis failed,
//! 2 inconclusive, 3 resource cap, 64 malformed input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use reachcert::benchmarks;
use reachcert::cegis::{self, CegisConfig, CegisOutcome, SynthesisSpec, TemplateSpec};
use reachcert::certificate::Certificate;
use reachcert::conditions::{self, ConditionId, ConditionInstance, Role, Scalars};
use reachcert::exec;
use reachcert::oracle;
use reachcert::problem::{derive_seed, ReachAvoidProblem};
use reachcert::report::{bench_csv, BenchRow, CellStatus, EstimateReport, VerdictReport};
use reachcert::verifier::{self, Status, VerifySettings};
use reachcert::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "reachcert",
    version,
    about = "Certificate workbench for stochastic reach-avoid verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Check a condition file against a problem with the sound grid verifier.
    Verify(VerifyArgs),
    /// Train certificates by counterexample-guided synthesis.
    Synthesize(SynthesizeArgs),
    /// Monte Carlo estimate of the reach-avoid probability.
    Estimate(EstimateArgs),
    /// Convert certificates and scalars between condition families.
    Convert(ConvertArgs),
    /// Run an (example x condition x threshold) grid and emit a CSV matrix.
    Bench(BenchArgs),
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Synthesize(args) => cmd_synthesize(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Convert(args) => cmd_convert(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

/// On-disk form of a condition instance: which condition, its scalars, and
/// one certificate per role. Documented in `schemas/condition.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionFile {
    pub condition: ConditionId,
    #[serde(default)]
    pub scalars: Scalars,
    pub certificates: BTreeMap<Role, Certificate>,
    /// Designated initial state, required exactly for BC4_SINGLETON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Problem JSON file, or a built-in name: ex1, ex2, ex3, ex4, walk.
    #[arg(long)]
    problem: String,
    /// Condition JSON file: condition id, scalars, certificates.
    #[arg(long)]
    condition: PathBuf,
    /// Grid cell radius; repeat the flag to refine inconclusive cells.
    #[arg(long = "resolution", default_values_t = [0.05])]
    resolutions: Vec<f64>,
    /// Gauss-Legendre order per noise axis.
    #[arg(long, default_value_t = 4)]
    quad_order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4_000_000)]
    max_cells: u64,
    #[arg(long, default_value_t = 100_000_000)]
    max_residual_evals: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let problem = load_problem(&args.problem)?;
    let file: ConditionFile = read_json(&args.condition, "condition file")?;
    let instance =
        ConditionInstance::new(file.condition, problem, file.certificates, file.scalars, file.x0)?;
    let mut settings = VerifySettings {
        resolution: args.resolutions[0],
        quad_order: args.quad_order,
        max_cells: args.max_cells,
        max_residual_evals: args.max_residual_evals,
        seed: args.seed,
    };
    let clauses = instance.clauses();
    let system = &instance.problem.system;
    let mut verdict = verifier::verify_clauses(system, &instance.certificates, &clauses, &settings)?;
    for (i, &r) in args.resolutions[1..].iter().enumerate() {
        if verdict.status != Status::Inconclusive {
            break;
        }
        settings.seed = derive_seed(args.seed, 1 + i as u64);
        verdict =
            verifier::refine_clauses(system, &instance.certificates, &clauses, &verdict, r, &settings)?;
    }
    let report =
        VerdictReport::new(instance.condition_id, instance.scalars, instance.certified_bound(), verdict);
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            fs::write(path, json + "\n")?;
            println!("{}", report.render_table());
        }
        None => {
            println!("{json}");
            eprintln!("{}", report.render_table());
        }
    }
    Ok(match report.verdict.status {
        Status::Certified => 0,
        Status::Violated => 1,
        Status::Inconclusive => 2,
    })
}

/// CEGIS tuning shared by `synthesize` and `bench`. Values layer: the
/// defaults, then `--config`, then any explicit flag.
#[derive(Args)]
pub struct CegisTuning {
    /// JSON file with a full CEGIS configuration (see schemas/cegis-config.schema.json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Template re-instantiations [default: 3].
    #[arg(long)]
    restarts: Option<usize>,
    /// CEGIS iterations per restart [default: 10].
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Initial uniform samples per clause [default: 256].
    #[arg(long)]
    samples_per_clause: Option<usize>,
    /// Verifier resolution per iteration, repeatable; the last entry repeats
    /// [default: 0.1 0.05].
    #[arg(long = "resolution")]
    resolutions: Vec<f64>,
    /// Gauss-Legendre order per noise axis [default: 4].
    #[arg(long)]
    quad_order: Option<usize>,
    /// Learner gradient steps per round [default: 400].
    #[arg(long)]
    learner_steps: Option<usize>,
}

impl CegisTuning {
    fn build(&self) -> Result<CegisConfig> {
        let mut config = match &self.config {
            Some(path) => read_json::<CegisConfig>(path, "config file")?,
            // the command-line default is more persistent than the library's
            None => CegisConfig { restarts: 3, ..CegisConfig::default() },
        };
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.restarts {
            config.restarts = v;
        }
        if let Some(v) = self.max_iterations {
            config.max_iterations = v;
        }
        if let Some(v) = self.samples_per_clause {
            config.samples_per_clause = v;
        }
        if !self.resolutions.is_empty() {
            config.resolutions = self.resolutions.clone();
        }
        if let Some(v) = self.quad_order {
            config.quad_order = v;
        }
        if let Some(v) = self.learner_steps {
            config.learner.steps = v;
        }
        Ok(config)
    }
}

#[derive(Args)]
pub struct SynthesizeArgs {
    /// Problem JSON file, or a built-in name: ex1, ex2, ex3, ex4, walk.
    #[arg(long)]
    problem: String,
    /// Condition id: BC1, AS, BC2, BC3, BC4, BC4_SINGLETON, BC4_RESTRICTED, BC5, BC5_UPPER.
    #[arg(long)]
    condition: String,
    /// Template for every role: "poly:D" or "net:W1xW2x..".
    #[arg(long, default_value = "net:8x8")]
    template: String,
    /// Probability threshold for conditions that take one.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Override individual scalars instead of the per-condition defaults.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda_prime: Option<f64>,
    /// Designated initial state for BC4_SINGLETON, comma-separated.
    #[arg(long)]
    x0: Option<String>,
    /// Initial weight scale of network templates.
    #[arg(long, default_value_t = 1.0)]
    output_scale: f64,
    #[command(flatten)]
    tuning: CegisTuning,
    /// Write the synthesized condition file here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one JSON line per CEGIS iteration here (default: stderr).
    #[arg(long)]
    telemetry: Option<PathBuf>,
}

fn cmd_synthesize(args: SynthesizeArgs) -> Result<i32> {
    let problem = load_problem(&args.problem)?;
    let condition = parse_condition_id(&args.condition)?;
    let template = parse_template(&args.template, args.output_scale)?;
    let mut scalars = cegis::default_scalars(condition, args.p);
    apply_scalar_overrides(&mut scalars, &args);
    let x0 = args.x0.as_deref().map(parse_point).transpose()?;
    let templates: BTreeMap<Role, TemplateSpec> =
        condition.roles().iter().map(|&r| (r, template.clone())).collect();
    let spec = SynthesisSpec { condition_id: condition, problem, templates, scalars, x0 };
    let config = args.tuning.build()?;
    let outcome = cegis::run_cegis(&spec, &config)?;

    let mut telemetry = String::new();
    for log in &outcome.state().logs {
        telemetry.push_str(&serde_json::to_string(log)?);
        telemetry.push('\n');
    }
    match &args.telemetry {
        Some(path) => fs::write(path, &telemetry)?,
        None => eprint!("{telemetry}"),
    }

    match outcome {
        CegisOutcome::Feasible { certificates, verdict, .. } => {
            // Independent re-check: finer grid, fresh search seed. Exit 0 only
            // if the candidate survives it.
            let fine = VerifySettings {
                resolution: 0.5 * verdict.resolution,
                quad_order: config.quad_order,
                max_cells: config.max_cells,
                max_residual_evals: config.max_residual_evals,
                seed: derive_seed(config.seed, 0xF1DE),
            };
            let instance = ConditionInstance::new(
                condition,
                spec.problem.clone(),
                certificates.clone(),
                spec.scalars,
                spec.x0.clone(),
            )?;
            let recheck = verifier::verify(&instance, &fine)?;
            let file =
                ConditionFile { condition, scalars: spec.scalars, certificates, x0: spec.x0.clone() };
            let json = serde_json::to_string_pretty(&file)?;
            match &args.out {
                Some(path) => fs::write(path, json + "\n")?,
                None => println!("{json}"),
            }
            if recheck.is_certified() {
                eprintln!(
                    "feasible: {condition} certified at resolution {} and re-certified at {}",
                    verdict.resolution, fine.resolution
                );
                Ok(0)
            } else {
                eprintln!(
                    "re-verification at resolution {} returned {:?}; rejecting the candidate",
                    fine.resolution, recheck.status
                );
                Ok(1)
            }
        }
        CegisOutcome::Failed { state } => {
            if let Some(verdict) = &state.last_verdict {
                for c in &verdict.clauses {
                    eprintln!(
                        "  {}: {:?}, worst margin {:.4}, {} counterexample(s), {} undecided cell(s)",
                        c.label,
                        c.status,
                        c.worst_margin,
                        c.counterexamples.len(),
                        c.inconclusive_cell_count
                    );
                    for cell in c.inconclusive_cells.iter().take(4) {
                        eprintln!("    undecided near {:?}", cell.center);
                    }
                }
            }
            eprintln!("infeasible: no certified candidate after {} restart(s)", config.restarts);
            Ok(1)
        }
    }
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Problem JSON file, or a built-in name: ex1, ex2, ex3, ex4, walk.
    #[arg(long)]
    problem: String,
    /// Initial state, comma-separated; repeatable.
    #[arg(long = "x0")]
    x0: Vec<String>,
    /// Evaluate an N-per-axis vertex grid over the initial region instead.
    #[arg(long, conflicts_with = "x0")]
    init_grid: Option<usize>,
    /// Trajectories per initial state.
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    /// Step horizon per trajectory.
    #[arg(long, default_value_t = 1_000)]
    horizon: u64,
    /// Two-sided Clopper-Pearson miscoverage.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Aggregate over several initial states; `min_lo` is the smallest lower
/// confidence bound among them.
#[derive(Serialize)]
struct GridEstimateReport {
    schema_version: u32,
    alpha: f64,
    points: Vec<EstimateReport>,
    min_lo: f64,
}

fn cmd_estimate(args: EstimateArgs) -> Result<i32> {
    let problem = load_problem(&args.problem)?;
    let (points, grid_mode) = match args.init_grid {
        Some(per_axis) => (init_grid_points(&problem, per_axis)?, true),
        None => {
            if args.x0.is_empty() {
                return Err(Error::invalid("provide --x0 (repeatable) or --init-grid N"));
            }
            let pts: Result<Vec<Vec<f64>>> = args.x0.iter().map(|s| parse_point(s)).collect();
            (pts?, false)
        }
    };
    let mut reports = Vec::with_capacity(points.len());
    for (i, x0) in points.iter().enumerate() {
        let estimate = oracle::estimate_reach_avoid(
            &problem,
            x0,
            args.n,
            args.horizon,
            args.alpha,
            derive_seed(args.seed, i as u64),
        )?;
        reports.push(EstimateReport::new(x0.clone(), estimate));
    }
    let json = if !grid_mode && reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])?
    } else {
        let min_lo = reports.iter().map(|r| r.estimate.lo).fold(f64::INFINITY, f64::min);
        let report = GridEstimateReport {
            schema_version: reports[0].schema_version,
            alpha: args.alpha,
            points: reports,
            min_lo,
        };
        serde_json::to_string_pretty(&report)?
    };
    match &args.out {
        Some(path) => fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(0)
}

/// Vertex grid over the initial region's bounding box, keeping only points
/// inside the region itself.
fn init_grid_points(problem: &ReachAvoidProblem, per_axis: usize) -> Result<Vec<Vec<f64>>> {
    if per_axis == 0 {
        return Err(Error::invalid("--init-grid must be at least 1"));
    }
    let bounds = problem
        .init
        .bounding_box()
        .ok_or_else(|| Error::invalid("initial region has no bounding box"))?;
    let dim = bounds.dim();
    let coords: Vec<Vec<f64>> = (0..dim)
        .map(|a| {
            let (lo, hi) = (bounds.lo()[a], bounds.hi()[a]);
            if per_axis == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_axis)
                    .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut points = Vec::new();
    let mut index = vec![0usize; dim];
    loop {
        let x: Vec<f64> = (0..dim).map(|a| coords[a][index[a]]).collect();
        if problem.init.contains(&x) {
            points.push(x);
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                if points.is_empty() {
                    return Err(Error::invalid(format!(
                        "no grid vertex with {per_axis} points per axis lies inside the initial region"
                    )));
                }
                return Ok(points);
            }
            index[axis] += 1;
            if index[axis] < per_axis {
                break;
            }
            index[axis] = 0;
            axis += 1;
        }
    }
}

#[derive(Args)]
pub struct ConvertArgs {
    #[command(subcommand)]
    kind: ConvertKind,
}

#[derive(Subcommand)]
enum ConvertKind {
    /// Multiplicative (gamma, delta, lambda) implied by an additive (epsilon, lambda).
    ArasToMras {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// Additive (epsilon, lambda) implied by a multiplicative (gamma, delta, lambda).
    MrasToAras {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// h = 1 - (1-p) V with the closed-form lambda threshold.
    #[command(name = "aras-to-bc4restricted")]
    ArasToBc4Restricted {
        /// Certificate JSON file holding V.
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        p: f64,
        /// Write the derived certificate here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// h = 1 - (1-p) V with p = 1 - 1/lambda' and a searched lambda threshold.
    #[command(name = "mras-to-bc4restricted")]
    MrasToBc4Restricted {
        /// Certificate JSON file holding V.
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        lambda_prime: f64,
        /// Write the derived certificate here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Substitute h -> 1 - h for both coupled certificates in a condition file.
    Bc5Transform {
        /// Condition JSON file with h1 and h2 certificates.
        #[arg(long)]
        condition: PathBuf,
        /// Write the transformed condition file here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn cmd_convert(args: ConvertArgs) -> Result<i32> {
    match args.kind {
        ConvertKind::ArasToMras { epsilon, lambda } => {
            let (gamma, delta, lambda) = conditions::aras_to_mras(epsilon, lambda)?;
            println!(
                "{}",
                serde_json::json!({ "gamma": gamma, "delta": delta, "lambda": lambda })
            );
        }
        ConvertKind::MrasToAras { gamma, delta, lambda } => {
            let (epsilon, lambda) = conditions::mras_to_aras(gamma, delta, lambda)?;
            println!("{}", serde_json::json!({ "epsilon": epsilon, "lambda": lambda }));
        }
        ConvertKind::ArasToBc4Restricted { cert, epsilon, p, out } => {
            let v: Certificate = read_json(&cert, "certificate file")?;
            let (h, lambda_min) = conditions::aras_to_bc4restricted(&v, epsilon, p)?;
            emit_derived(lambda_min, p, &h, out.as_deref())?;
        }
        ConvertKind::MrasToBc4Restricted { cert, gamma, delta, lambda_prime, out } => {
            let v: Certificate = read_json(&cert, "certificate file")?;
            let (h, lambda_min, p) =
                conditions::mras_to_bc4restricted(&v, gamma, delta, lambda_prime)?;
            emit_derived(lambda_min, p, &h, out.as_deref())?;
        }
        ConvertKind::Bc5Transform { condition, out } => {
            let mut file: ConditionFile = read_json(&condition, "condition file")?;
            let (h1, h2) = match (file.certificates.get(&Role::H1), file.certificates.get(&Role::H2))
            {
                (Some(h1), Some(h2)) => (h1, h2),
                _ => {
                    return Err(Error::invalid(
                        "bc5-transform needs certificates for roles 'h1' and 'h2'",
                    ))
                }
            };
            let (t1, t2) = conditions::bc5_transform(h1, h2);
            file.certificates.insert(Role::H1, t1);
            file.certificates.insert(Role::H2, t2);
            let json = serde_json::to_string_pretty(&file)?;
            match &out {
                Some(path) => fs::write(path, json + "\n")?,
                None => println!("{json}"),
            }
        }
    }
    Ok(0)
}

fn emit_derived(lambda_min: f64, p: f64, h: &Certificate, out: Option<&Path>) -> Result<()> {
    println!(
        "{}",
        serde_json::json!({ "lambda_min": lambda_min, "p": p, "certificate": h })
    );
    if let Some(path) = out {
        fs::write(path, serde_json::to_string_pretty(h)? + "\n")?;
    }
    Ok(())
}

#[derive(Args)]
pub struct BenchArgs {
    /// Benchmark selector, repeatable: ex1, ex2, ex3, ex4, walk, all.
    /// No selector means an empty run (header-only CSV).
    #[arg(long = "example")]
    examples: Vec<String>,
    /// Condition selector, repeatable; default: all nine.
    #[arg(long = "condition")]
    conditions: Vec<String>,
    /// Thresholds to attempt; default per example: ex1/ex2 0.9, ex3 0.6, ex4 0.4, walk 0.5.
    #[arg(long = "p")]
    ps: Vec<f64>,
    /// Template for every role: "poly:D" or "net:W1xW2x..".
    #[arg(long, default_value = "net:8x8")]
    template: String,
    #[arg(long, default_value_t = 1.0)]
    output_scale: f64,
    #[command(flatten)]
    tuning: CegisTuning,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct BenchCell {
    example: String,
    problem: ReachAvoidProblem,
    condition: ConditionId,
    p: Option<f64>,
    seed: u64,
}

fn default_p(example: &str) -> f64 {
    match example {
        "ex1" | "ex2" => 0.9,
        "ex3" => 0.6,
        "ex4" => 0.4,
        _ => 0.5,
    }
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let template = parse_template(&args.template, args.output_scale)?;
    let examples = expand_examples(&args.examples)?;
    let conditions = expand_conditions(&args.conditions)?;
    let config = args.tuning.build()?;

    let mut cells = Vec::new();
    for name in &examples {
        let problem = benchmarks::by_name(name).expect("expanded names are built-ins");
        let ps: Vec<f64> =
            if args.ps.is_empty() { vec![default_p(name)] } else { args.ps.clone() };
        for &condition in &conditions {
            // BC3 derives its bound from lambda'; one cell regardless of the p list.
            let p_list: Vec<Option<f64>> = if condition == ConditionId::Bc3 {
                vec![None]
            } else {
                ps.iter().map(|&p| Some(p)).collect()
            };
            for p in p_list {
                let seed = derive_seed(config.seed, cells.len() as u64);
                cells.push(BenchCell {
                    example: name.clone(),
                    problem: problem.clone(),
                    condition,
                    p,
                    seed,
                });
            }
        }
    }

    let template_name = template.describe();
    let rows: Vec<BenchRow> = exec::map_range(cells.len(), |i| {
        run_bench_cell(&cells[i], &template, &template_name, &config)
    });
    let csv = bench_csv(&rows);
    match &args.out {
        Some(path) => fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    eprintln!("bench: {} cell(s)", rows.len());
    Ok(0)
}

fn run_bench_cell(
    cell: &BenchCell,
    template: &TemplateSpec,
    template_name: &str,
    base: &CegisConfig,
) -> BenchRow {
    let started = Instant::now();
    let scalars = cegis::default_scalars(cell.condition, cell.p.unwrap_or(0.5));
    // BC4_SINGLETON designates a single initial state; use the init box center.
    let x0 = if cell.condition == ConditionId::Bc4Singleton {
        cell.problem.init.bounding_box().map(|b| b.center())
    } else {
        None
    };
    let templates: BTreeMap<Role, TemplateSpec> =
        cell.condition.roles().iter().map(|&r| (r, template.clone())).collect();
    let spec = SynthesisSpec {
        condition_id: cell.condition,
        problem: cell.problem.clone(),
        templates,
        scalars,
        x0,
    };
    let config = CegisConfig { seed: cell.seed, ..base.clone() };
    let status = match cegis::run_cegis(&spec, &config) {
        Ok(outcome) if outcome.is_feasible() => CellStatus::Certified,
        Ok(_) => CellStatus::Failed,
        Err(e) => CellStatus::Error(e.to_string()),
    };
    BenchRow {
        example: cell.example.clone(),
        condition: cell.condition,
        template: template_name.to_string(),
        p: cell.p,
        scalars,
        status,
        wall_time: started.elapsed().as_secs_f64(),
        seed: cell.seed,
    }
}

fn expand_examples(selectors: &[String]) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for sel in selectors {
        if sel == "all" {
            for name in benchmarks::NAMES {
                push_unique(&mut names, name.to_string());
            }
        } else if benchmarks::by_name(sel).is_some() {
            push_unique(&mut names, sel.clone());
        } else {
            return Err(Error::invalid(format!(
                "unknown example '{sel}'; expected one of ex1, ex2, ex3, ex4, walk, all"
            )));
        }
    }
    Ok(names)
}

fn expand_conditions(selectors: &[String]) -> Result<Vec<ConditionId>> {
    if selectors.is_empty() {
        return Ok(ConditionId::ALL.to_vec());
    }
    let mut out = Vec::new();
    for sel in selectors {
        if sel == "all" {
            for c in ConditionId::ALL {
                push_unique(&mut out, c);
            }
        } else {
            push_unique(&mut out, parse_condition_id(sel)?);
        }
    }
    Ok(out)
}

fn push_unique<T: PartialEq>(list: &mut Vec<T>, item: T) {
    if !list.contains(&item) {
        list.push(item);
    }
}

/// A problem argument names either a JSON file or a built-in benchmark; an
/// existing file wins.
fn load_problem(spec: &str) -> Result<ReachAvoidProblem> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        return ReachAvoidProblem::from_json(&text)
            .map_err(|e| Error::invalid(format!("problem file {}: {e}", path.display())));
    }
    benchmarks::by_name(spec).ok_or_else(|| {
        Error::invalid(format!(
            "problem '{spec}' is neither a file nor a built-in benchmark (ex1, ex2, ex3, ex4, walk)"
        ))
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("{what} {}: {e}", path.display())))
}

fn parse_condition_id(name: &str) -> Result<ConditionId> {
    ConditionId::parse(name).ok_or_else(|| {
        let all: Vec<&str> = ConditionId::ALL.iter().map(|c| c.name()).collect();
        Error::invalid(format!("unknown condition '{name}'; expected one of {}", all.join(", ")))
    })
}

/// "poly:D" or "net:W1xW2x.." into a template spec.
fn parse_template(text: &str, output_scale: f64) -> Result<TemplateSpec> {
    let err = || {
        Error::invalid(format!(
            "template '{text}' must look like 'poly:2' or 'net:8x8'"
        ))
    };
    let (kind, rest) = text.split_once(':').ok_or_else(err)?;
    match kind {
        "poly" => {
            let degree: u32 = rest.parse().map_err(|_| err())?;
            Ok(TemplateSpec::Polynomial { degree })
        }
        "net" => {
            let hidden: std::result::Result<Vec<usize>, _> =
                rest.split('x').map(str::parse).collect();
            let hidden = hidden.map_err(|_| err())?;
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(err());
            }
            Ok(TemplateSpec::Network { hidden, output_scale })
        }
        _ => Err(err()),
    }
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("'{part}' in point '{text}' is not a number")))
        })
        .collect()
}

fn apply_scalar_overrides(scalars: &mut Scalars, args: &SynthesizeArgs) {
    if args.epsilon.is_some() {
        scalars.epsilon = args.epsilon;
    }
    if args.lambda.is_some() {
        scalars.lambda = args.lambda;
    }
    if args.gamma.is_some() {
        scalars.gamma = args.gamma;
    }
    if args.delta.is_some() {
        scalars.delta = args.delta;
    }
    if args.lambda_prime.is_some() {
        scalars.lambda_prime = args.lambda_prime;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_parsing() {
        assert_eq!(parse_template("poly:3", 1.0).unwrap(), TemplateSpec::Polynomial { degree: 3 });
        assert_eq!(
            parse_template("net:8x8", 0.5).unwrap(),
            TemplateSpec::Network { hidden: vec![8, 8], output_scale: 0.5 }
        );
        assert!(parse_template("net:", 1.0).is_err());
        assert!(parse_template("spline:4", 1.0).is_err());
        assert!(parse_template("poly", 1.0).is_err());
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("0.125, 0").unwrap(), vec![0.125, 0.0]);
        assert!(parse_point("a,b").is_err());
    }

    #[test]
    fn selectors_expand_and_reject() {
        assert_eq!(expand_examples(&[]).unwrap(), Vec::<String>::new());
        assert_eq!(expand_examples(&["all".into()]).unwrap().len(), 5);
        assert!(expand_examples(&["ex9".into()]).is_err());
        assert_eq!(expand_conditions(&[]).unwrap().len(), 9);
        assert_eq!(
            expand_conditions(&["BC4".into(), "BC4".into()]).unwrap(),
            vec![ConditionId::Bc4]
        );
    }

    #[test]
    fn condition_file_rejects_unknown_fields() {
        let text = r#"{"condition":"BC4","certificates":{},"extra":1}"#;
        assert!(serde_json::from_str::<ConditionFile>(text).is_err());
    }
}
