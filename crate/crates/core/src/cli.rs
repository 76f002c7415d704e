//! Command-line front end.
//!
//! Four subcommands: `generate` writes an instance, `solve` runs one method
//! on it, `experiment` sweeps latency tolerance or demand over many seeds and
//! `validate` re-checks a result file against its instance. [`run`] returns
//! the process exit code: 0 feasible, 2 demand unmet, 1 error.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::{run_pipeline, Diagnostics, Mode, PipelineParams};
use crate::error::{Error, Result};
use crate::exact::{branch_and_bound, optimality_gap, BranchAndBoundOptions, ExactMethod};
use crate::instance::{
    check_assignment, partition_instance, random_instance, Assignment, Instance, InstanceParams, ValueChoice,
};
use crate::lagrangian::subgradient_run;

pub const RESULT_FORMAT: &str = "flexalloc-result/1";
pub const EXPERIMENT_FORMAT: &str = "flexalloc-experiment/1";

/// Latency tolerances (ms) and demands (kbps) of the benchmark table.
pub const TAU_VALUES: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 2.0];
pub const DEMAND_VALUES: [f64; 6] = [16.0, 32.0, 64.0, 128.0, 256.0, 512.0];

pub const EXIT_FEASIBLE: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNMET: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "flexalloc", version, about = "Time-frequency block allocation with flexible numerology")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random (or partition) instance as JSON.
    Generate(GenerateArgs),
    /// Solve an instance with one method and write the result JSON.
    Solve(SolveArgs),
    /// Sweep latency tolerance or demand over seeds and write a CSV table.
    Experiment(ExperimentArgs),
    /// Check a result file against its instance.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator settings (JSON); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Build the partition instance over these integers instead.
    #[arg(long, value_delimiter = ',', conflicts_with = "config")]
    pub partition: Option<Vec<u64>>,
    /// Print the default generator settings and exit.
    #[arg(long)]
    pub print_defaults: bool,
    #[arg(long, required_unless_present = "print_defaults")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Branch-and-bound time limit in seconds.
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    /// Seeding thresholds of the LP arm, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 200)]
    pub max_subgradient_iters: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// rate, lp, ld, lp+ld, exact or fixed:<shape id or TTI-SCS label>.
    #[arg(long)]
    pub mode: SolveMode,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the subgradient trace (CSV) here; LD modes only.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Result file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Tau,
    Demand,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Generator settings (JSON); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sweep: Sweep,
    /// Sweep points; all table values when absent.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Number of seeds per sweep point.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Methods to run, comma separated. Defaults: rate,lp,ld,lp+ld,exact for
    /// the demand sweep; lp+ld and one fixed:<id> per TTI-SCS label for the
    /// tau sweep.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<SolveMode>>,
    /// Demand of every latency service in the tau sweep.
    #[arg(long, default_value_t = 128.0)]
    pub demand_kbps: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV table; the metadata goes next to it as `<stem>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub result: PathBuf,
}

/// Method selector of `solve` and `experiment`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveMode {
    Rate,
    Lp,
    Ld,
    LpPlusLd,
    Exact,
    /// Exact solve restricted to one shape.
    Fixed(String),
}

impl SolveMode {
    fn pipeline_mode(&self) -> Option<Mode> {
        match self {
            SolveMode::Rate => Some(Mode::Rate),
            SolveMode::Lp => Some(Mode::Lp),
            SolveMode::Ld => Some(Mode::Ld),
            SolveMode::LpPlusLd => Some(Mode::LpPlusLd),
            SolveMode::Exact | SolveMode::Fixed(_) => None,
        }
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveMode::Rate => f.write_str("rate"),
            SolveMode::Lp => f.write_str("lp"),
            SolveMode::Ld => f.write_str("ld"),
            SolveMode::LpPlusLd => f.write_str("lp+ld"),
            SolveMode::Exact => f.write_str("exact"),
            SolveMode::Fixed(s) => write!(f, "fixed:{s}"),
        }
    }
}

impl FromStr for SolveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rate" => SolveMode::Rate,
            "lp" => SolveMode::Lp,
            "ld" => SolveMode::Ld,
            "lp+ld" => SolveMode::LpPlusLd,
            "exact" => SolveMode::Exact,
            _ => match s.strip_prefix("fixed:") {
                Some(shape) if !shape.is_empty() => SolveMode::Fixed(shape.to_string()),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "unknown mode `{s}` (expected rate, lp, ld, lp+ld, exact or fixed:<shape>)"
                    )))
                }
            },
        })
    }
}

/// Solver knobs shared by `solve` and `experiment`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveSettings {
    pub pipeline: PipelineParams,
    pub time_limit: Option<Duration>,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self { pipeline: PipelineParams::default(), time_limit: Some(crate::exact::DEFAULT_TIME_LIMIT) }
    }
}

impl SolverArgs {
    fn settings(&self) -> Result<SolveSettings> {
        if !(self.time_limit >= 0.0 && self.time_limit.is_finite()) {
            return Err(Error::InvalidInput(format!("time limit {} is not a nonnegative number", self.time_limit)));
        }
        let mut pipeline = PipelineParams::default();
        if let Some(grid) = &self.rho_grid {
            if grid.is_empty() || grid.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
                return Err(Error::InvalidInput("rho grid values must lie in (0, 1]".into()));
            }
            pipeline.rho_grid = grid.clone();
        }
        pipeline.subgradient.max_iters = self.max_subgradient_iters;
        Ok(SolveSettings { pipeline, time_limit: Some(Duration::from_secs_f64(self.time_limit)) })
    }
}

/// Branch-and-bound summary stored in result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSummary {
    pub method: ExactMethod,
    /// Shape id when the solve was restricted to one shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    pub value: f64,
    pub feasible: bool,
    pub proven: bool,
    pub nodes: u64,
    pub bound: f64,
    pub bound_gap: f64,
}

/// Contents of a `solve` result file. Block ids refer to the full instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format: String,
    pub mode: String,
    pub assignment: Assignment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactSummary>,
}

impl ResultFile {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn exit_code(&self) -> i32 {
        if self.assignment.feasible {
            EXIT_FEASIBLE
        } else {
            EXIT_UNMET
        }
    }
}

/// Looks a shape up by id, then by its unique `TTI-SCS` label.
pub fn resolve_shape(inst: &Instance, name: &str) -> Result<usize> {
    if let Some(s) = inst.shapes.iter().position(|s| s.id == name) {
        return Ok(s);
    }
    let hits: Vec<usize> = (0..inst.shapes.len()).filter(|&s| inst.shapes[s].tti_scs_label() == name).collect();
    match hits.as_slice() {
        [s] => Ok(*s),
        [] => {
            let known: Vec<String> = inst.shapes.iter().map(|s| format!("{} ({})", s.id, s.tti_scs_label())).collect();
            Err(Error::InvalidInput(format!("no shape `{name}`; known: {}", known.join(", "))))
        }
        _ => {
            let ids: Vec<&str> = hits.iter().map(|&s| inst.shapes[s].id.as_str()).collect();
            Err(Error::InvalidInput(format!("label `{name}` matches shapes {}; use an id", ids.join(", "))))
        }
    }
}

/// Runs one method on `inst`.
pub fn solve_instance(inst: &Instance, mode: &SolveMode, settings: &SolveSettings) -> Result<ResultFile> {
    if let Some(m) = mode.pipeline_mode() {
        let res = run_pipeline(inst, m, &settings.pipeline)?;
        return Ok(ResultFile {
            format: RESULT_FORMAT.into(),
            mode: mode.to_string(),
            assignment: res.assignment,
            diagnostics: Some(res.diagnostics),
            exact: None,
        });
    }
    let opts = BranchAndBoundOptions {
        time_limit: settings.time_limit,
        heuristic_incumbent: true,
        pipeline: settings.pipeline.clone(),
    };
    let (ex, assignment, shape) = match mode {
        SolveMode::Fixed(name) => {
            let s = resolve_shape(inst, name)?;
            let ids: Vec<usize> = inst.blocks.iter().filter(|b| b.shape == s).map(|b| b.id).collect();
            let ex = branch_and_bound(&inst.restrict_to_shape(s), &opts)?;
            let pairs = ex.assignment.pairs.iter().map(|&(b, k)| (ids[b], k)).collect();
            let assignment = Assignment::evaluate(inst, pairs)?;
            (ex, assignment, Some(inst.shapes[s].id.clone()))
        }
        _ => {
            let ex = branch_and_bound(inst, &opts)?;
            let assignment = ex.assignment.clone();
            (ex, assignment, None)
        }
    };
    Ok(ResultFile {
        format: RESULT_FORMAT.into(),
        mode: mode.to_string(),
        assignment,
        diagnostics: None,
        exact: Some(ExactSummary {
            method: ex.method,
            shape,
            value: ex.value,
            feasible: ex.feasible,
            proven: ex.proven,
            nodes: ex.nodes,
            bound: ex.bound,
            bound_gap: ex.bound_gap,
        }),
    })
}

fn read_config(path: Option<&Path>) -> Result<InstanceParams> {
    let Some(path) = path else { return Ok(InstanceParams::default()) };
    let text = std::fs::read_to_string(path)?;
    let params: InstanceParams =
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))?;
    params.validate()?;
    Ok(params)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_FEASIBLE };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<i32> {
    if args.print_defaults {
        let mut text = serde_json::to_string_pretty(&InstanceParams::default())?;
        text.push('\n');
        write_output(args.out.as_deref(), &text)?;
        return Ok(EXIT_FEASIBLE);
    }
    let inst = match &args.partition {
        Some(values) => partition_instance(values)?,
        None => random_instance(&read_config(args.config.as_deref())?, args.seed)?,
    };
    let out = args.out.as_deref().expect("clap requires --out");
    inst.save(out)?;
    let g = &inst.grid;
    println!("grid: {} x {} units ({} ms x {} kHz)", g.n_time, g.n_freq, g.unit_time_ms, g.unit_bw_khz);
    println!("blocks |B|: {}", inst.num_blocks());
    println!("units |I|: {}", inst.num_units());
    println!("latency services |K^l|: {}", inst.num_latency());
    println!("capacity services |K^c|: {}", inst.num_capacity());
    let masked: Vec<usize> = inst
        .latency_services()
        .filter(|s| (0..inst.num_blocks()).all(|b| inst.rate(b, s.id) == 0.0))
        .map(|s| s.id)
        .collect();
    if !masked.is_empty() && masked.len() == inst.num_latency() {
        eprintln!("warning: all latency-service rates are masked; no block ends within any deadline");
    } else {
        for k in masked {
            eprintln!("warning: every rate of latency service {k} is masked by its deadline");
        }
    }
    Ok(EXIT_FEASIBLE)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let inst = Instance::load(&args.instance)?;
    let settings = args.solver.settings()?;
    if let Some(path) = &args.trace {
        if matches!(args.mode, SolveMode::Ld | SolveMode::LpPlusLd) {
            let mut w = BufWriter::new(File::create(path)?);
            subgradient_run(&inst, &settings.pipeline.subgradient, Some(&mut w))?;
            w.flush()?;
        } else {
            eprintln!("warning: --trace only applies to ld and lp+ld");
        }
    }
    let result = solve_instance(&inst, &args.mode, &settings)?;
    write_output(args.out.as_deref(), &result.to_json()?)?;
    if !result.assignment.feasible {
        eprintln!("demand unmet for latency services {:?}", result.assignment.unmet);
    }
    Ok(result.exit_code())
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let inst = Instance::load(&args.instance)?;
    let text = std::fs::read_to_string(&args.result)?;
    let result: ResultFile = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("result {}: {e}", args.result.display())))?;
    let report = check_assignment(&inst, &result.assignment.pairs)?;
    if !report.overlaps.is_empty() || !report.repeated_blocks.is_empty() {
        return Err(Error::InvalidInput(format!(
            "assignment reuses resources: overlapping blocks {:?}, repeated blocks {:?}",
            report.overlaps, report.repeated_blocks
        )));
    }
    let a = &result.assignment;
    let tol = 1e-9 * report.objective.abs().max(1.0);
    if (report.objective - a.objective).abs() > tol || report.feasible != a.feasible || report.unmet != a.unmet {
        return Err(Error::InvalidInput(format!(
            "recorded evaluation (objective {}, feasible {}) disagrees with the instance (objective {}, feasible {})",
            a.objective, a.feasible, report.objective, report.feasible
        )));
    }
    println!("ok: {} pairs, objective {} bits, feasible {}", a.pairs.len(), report.objective, report.feasible);
    Ok(if report.feasible { EXIT_FEASIBLE } else { EXIT_UNMET })
}

/// One row of the experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub sweep: Sweep,
    pub value: f64,
    /// Seed, or `mean` on aggregate rows.
    pub seed: String,
    pub mode: String,
    /// 1/0 per seed; fraction of seeds on aggregate rows.
    pub feasible: f64,
    pub objective_bits: f64,
    /// Capacity rate per user, 0 when the demand is unmet.
    pub rate_kbps: f64,
    pub blocks_used: f64,
    /// `;`-separated latency services left unmet.
    pub unmet_services: String,
    /// Exact modes only: 1/0 per seed, fraction on aggregate rows.
    pub proven: Option<f64>,
    /// Optimality gap against the best known value; see [`cmd_experiment`].
    pub gap: Option<f64>,
    /// Rows (seeds) behind `gap`.
    pub gap_samples: usize,
    pub error: String,
}

/// Sidecar describing how an experiment table was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub format: String,
    pub sweep: Sweep,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub modes: Vec<String>,
    pub time_limit_s: f64,
    pub demand_kbps: Option<f64>,
    pub rate_convention: String,
    pub gap_convention: String,
    pub columns: Vec<String>,
    pub config: InstanceParams,
}

pub const EXPERIMENT_COLUMNS: [&str; 13] = [
    "sweep",
    "value",
    "seed",
    "mode",
    "feasible",
    "objective_bits",
    "rate_kbps",
    "blocks_used",
    "unmet_services",
    "proven",
    "gap",
    "gap_samples",
    "error",
];

/// Generator settings for one sweep point.
pub fn sweep_params(base: &InstanceParams, sweep: Sweep, value: f64, demand_kbps: f64) -> InstanceParams {
    let mut p = base.clone();
    match sweep {
        Sweep::Tau => {
            p.latency_ms = ValueChoice::Fixed(value);
            p.demand_kbps = ValueChoice::Fixed(demand_kbps);
        }
        Sweep::Demand => p.demand_kbps = ValueChoice::Fixed(value),
    }
    p
}

pub fn default_modes(sweep: Sweep, params: &InstanceParams) -> Vec<SolveMode> {
    match sweep {
        Sweep::Demand => vec![SolveMode::Rate, SolveMode::Lp, SolveMode::Ld, SolveMode::LpPlusLd, SolveMode::Exact],
        Sweep::Tau => {
            // One fixed scheme per TTI-SCS label (first shape wins).
            let mut labels = Vec::new();
            let mut modes = vec![SolveMode::LpPlusLd];
            for s in &params.shapes {
                let label = s.tti_scs_label();
                if !labels.contains(&label) {
                    labels.push(label);
                    modes.push(SolveMode::Fixed(s.id.clone()));
                }
            }
            modes
        }
    }
}

/// Rows of one (sweep value, seed) grid point, in `modes` order.
///
/// Gaps need `exact` among the modes. The reference is the exact value when
/// proven, otherwise the best feasible objective any mode found. A mode that
/// misses a demand counts as gap 1 and rate 0; when the reference itself is
/// infeasible the instance has no gap.
pub fn experiment_point(
    base: &InstanceParams,
    sweep: Sweep,
    value: f64,
    seed: u64,
    modes: &[SolveMode],
    demand_kbps: f64,
    settings: &SolveSettings,
) -> Vec<ExperimentRow> {
    let params = sweep_params(base, sweep, value, demand_kbps);
    let blank = |mode: &SolveMode, error: String| ExperimentRow {
        sweep,
        value,
        seed: seed.to_string(),
        mode: mode.to_string(),
        feasible: 0.0,
        objective_bits: 0.0,
        rate_kbps: 0.0,
        blocks_used: 0.0,
        unmet_services: String::new(),
        proven: None,
        gap: None,
        gap_samples: 0,
        error,
    };
    let inst = match random_instance(&params, seed) {
        Ok(inst) => inst,
        Err(e) => return modes.iter().map(|m| blank(m, e.to_string())).collect(),
    };
    let per_user = params.horizon_ms * inst.num_capacity().max(1) as f64;
    let results: Vec<Result<ResultFile>> = modes.iter().map(|m| solve_instance(&inst, m, settings)).collect();

    let exact = modes.iter().zip(&results).find_map(|(m, r)| match (m, r) {
        (SolveMode::Exact, Ok(r)) => r.exact.clone(),
        _ => None,
    });
    let reference = exact.as_ref().and_then(|ex| {
        if ex.proven {
            ex.feasible.then_some(ex.value)
        } else {
            results
                .iter()
                .filter_map(|r| r.as_ref().ok())
                .filter(|r| r.assignment.feasible)
                .map(|r| r.assignment.objective)
                .reduce(f64::max)
        }
    });

    modes
        .iter()
        .zip(results)
        .map(|(m, r)| match r {
            Err(e) => blank(m, e.to_string()),
            Ok(r) => {
                let a = &r.assignment;
                let gap = reference.map(|best| if a.feasible { optimality_gap(a.objective, best) } else { 1.0 });
                ExperimentRow {
                    feasible: if a.feasible { 1.0 } else { 0.0 },
                    objective_bits: a.objective,
                    rate_kbps: if a.feasible { a.objective / per_user } else { 0.0 },
                    blocks_used: a.blocks_used() as f64,
                    unmet_services: a.unmet.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";"),
                    proven: r.exact.as_ref().map(|ex| if ex.proven { 1.0 } else { 0.0 }),
                    gap,
                    gap_samples: usize::from(gap.is_some()),
                    ..blank(m, String::new())
                }
            }
        })
        .collect()
}

/// Mean over the seed rows of one sweep value and mode.
fn aggregate(rows: &[&ExperimentRow]) -> ExperimentRow {
    let ok: Vec<&&ExperimentRow> = rows.iter().filter(|r| r.error.is_empty()).collect();
    let mean = |f: &dyn Fn(&ExperimentRow) -> f64| {
        if ok.is_empty() {
            0.0
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    let gaps: Vec<f64> = ok.iter().filter_map(|r| r.gap).collect();
    let proven: Vec<f64> = ok.iter().filter_map(|r| r.proven).collect();
    let failed = rows.len() - ok.len();
    ExperimentRow {
        sweep: rows[0].sweep,
        value: rows[0].value,
        seed: "mean".into(),
        mode: rows[0].mode.clone(),
        feasible: mean(&|r| r.feasible),
        objective_bits: mean(&|r| r.objective_bits),
        rate_kbps: mean(&|r| r.rate_kbps),
        blocks_used: mean(&|r| r.blocks_used),
        unmet_services: String::new(),
        proven: (!proven.is_empty()).then(|| proven.iter().sum::<f64>() / proven.len() as f64),
        gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
        gap_samples: gaps.len(),
        error: if failed > 0 { format!("{failed} seeds failed") } else { String::new() },
    }
}

/// Runs every (value, seed) point and returns the table: the seed rows of
/// each value followed by its mean rows, all in input order.
pub fn run_experiment(
    base: &InstanceParams,
    sweep: Sweep,
    values: &[f64],
    seeds: &[u64],
    modes: &[SolveMode],
    demand_kbps: f64,
    settings: &SolveSettings,
) -> Vec<ExperimentRow> {
    let points: Vec<(usize, usize)> = (0..values.len()).flat_map(|v| (0..seeds.len()).map(move |s| (v, s))).collect();
    let mut done: Vec<((usize, usize), Vec<ExperimentRow>)> = points
        .par_iter()
        .map(|&(v, s)| {
            let t = Instant::now();
            let rows = experiment_point(base, sweep, values[v], seeds[s], modes, demand_kbps, settings);
            eprintln!("{sweep:?}={} seed={}: {:.1} s", values[v], seeds[s], t.elapsed().as_secs_f64());
            ((v, s), rows)
        })
        .collect();
    done.sort_by_key(|(key, _)| *key);
    let mut table = Vec::new();
    for v in 0..values.len() {
        let block: Vec<&ExperimentRow> =
            done.iter().filter(|((vi, _), _)| *vi == v).flat_map(|(_, rows)| rows.iter()).collect();
        table.extend(block.iter().map(|r| (*r).clone()));
        for m in modes {
            let name = m.to_string();
            let of_mode: Vec<&ExperimentRow> = block.iter().copied().filter(|r| r.mode == name).collect();
            if !of_mode.is_empty() {
                table.push(aggregate(&of_mode));
            }
        }
    }
    table
}

pub fn write_experiment_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EXPERIMENT_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            match r.sweep {
                Sweep::Tau => "tau".to_string(),
                Sweep::Demand => "demand".to_string(),
            },
            r.value.to_string(),
            r.seed.clone(),
            r.mode.clone(),
            r.feasible.to_string(),
            r.objective_bits.to_string(),
            r.rate_kbps.to_string(),
            r.blocks_used.to_string(),
            r.unmet_services.clone(),
            opt(r.proven),
            opt(r.gap),
            r.gap_samples.to_string(),
            r.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `<out stem>.meta.json` next to the CSV.
pub fn meta_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<i32> {
    let base = read_config(args.config.as_deref())?;
    let table: &[f64] = match args.sweep {
        Sweep::Tau => &TAU_VALUES,
        Sweep::Demand => &DEMAND_VALUES,
    };
    let values = args.values.clone().unwrap_or_else(|| table.to_vec());
    if values.is_empty() {
        return Err(Error::InvalidInput("no sweep values".into()));
    }
    if let Some(v) = values.iter().find(|v| !table.contains(v)) {
        return Err(Error::InvalidInput(format!("sweep value {v} is not one of {table:?}")));
    }
    if args.seeds == 0 {
        return Err(Error::InvalidInput("need at least one seed".into()));
    }
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let modes = args.modes.clone().unwrap_or_else(|| default_modes(args.sweep, &base));
    let settings = args.solver.settings()?;
    let rows = run_experiment(&base, args.sweep, &values, &seeds, &modes, args.demand_kbps, &settings);
    write_experiment_csv(&rows, BufWriter::new(File::create(&args.out)?))?;

    let meta = ExperimentMeta {
        format: EXPERIMENT_FORMAT.into(),
        sweep: args.sweep,
        values,
        seeds,
        modes: modes.iter().map(|m| m.to_string()).collect(),
        time_limit_s: args.solver.time_limit,
        demand_kbps: (args.sweep == Sweep::Tau).then_some(args.demand_kbps),
        rate_convention: "rate_kbps = objective_bits / horizon_ms / |K^c|; 0 when a demand is unmet".into(),
        gap_convention: "(best - objective) / best, best = proven exact value or best feasible objective \
                         of any mode when exact timed out; unmet demand counts as 1; empty when no \
                         feasible reference exists"
            .into(),
        columns: EXPERIMENT_COLUMNS.iter().map(|c| c.to_string()).collect(),
        config: base,
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(meta_path(&args.out), text)?;
    Ok(EXIT_FEASIBLE)
}
