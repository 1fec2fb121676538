//! Command-line surface: scenario ingestion, analysis, simulation,
//! validation, sweeps, and optimization with machine-readable outputs.
//!
//! Exit codes are the control-flow contract: 0 success, 1 validation
//! mismatch, 2 invalid input. Every run writes a manifest recording the tool
//! version, the scenario fingerprint, the seed, and the produced files;
//! timestamps live only there, so identical invocations produce
//! byte-identical data files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::metrics::{self, Pmf, SourceMetrics};
use crate::model::{self, DerivedParams, ModelError, Scenario};
use crate::optimize::{self, GridSpec, ObjectiveKind, OptResult, SweepTable};
use crate::sim::{self, AnalyticSource, Tolerances};

/// Series truncation used for analytic PMFs.
const PMF_EPS: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "satarq",
    version,
    about = "AoI analytics and simulation for multi-source truncated-ARQ status updating"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Override the scenario's slot count.
    #[arg(long)]
    pub slots: Option<u64>,
    /// Override the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the scenario's replication count.
    #[arg(long)]
    pub replications: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form metrics and PMFs for every source.
    Analyze {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Monte Carlo run: empirical metrics, PMFs, and raw counters.
    Simulate {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Run analysis and simulation, compare, and gate on tolerances.
    Validate {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Relative tolerance on scalar metrics.
        #[arg(long, default_value_t = 0.01)]
        tolerance_mean: f64,
        /// Total-variation tolerance on distributions.
        #[arg(long, default_value_t = 0.005)]
        tolerance_tv: f64,
    },
    /// Evaluate every grid point and write the sweep table.
    Sweep {
        #[command(flatten)]
        io: IoArgs,
        /// Grid JSON file.
        #[arg(long)]
        grid: PathBuf,
        /// Timeliness weight for the reported weighted-sum column.
        #[arg(long)]
        weight: Option<f64>,
    },
    /// Optimize an objective over a grid and report baselines.
    Optimize {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        grid: PathBuf,
        /// Objective: `ws` (weighted sum) or `ee` (energy efficiency).
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        weight: Option<f64>,
    },
}

/// Machine-readable description of one input problem.
#[derive(Debug, Serialize)]
pub struct InputError {
    pub path: String,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Serialize)]
struct ErrorList {
    errors: Vec<InputError>,
}

/// Parse and validate a scenario file; unknown keys are rejected.
pub fn parse_scenario(path: &Path) -> Result<(Scenario, DerivedParams), Vec<InputError>> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| {
        vec![InputError {
            path: display.clone(),
            field: String::new(),
            reason: format!("cannot read file: {e}"),
        }]
    })?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(|e| {
        vec![InputError {
            path: display.clone(),
            field: String::new(),
            reason: e.to_string(),
        }]
    })?;
    let derived = model::derive(&scenario).map_err(|e| {
        let ModelError::InvalidScenario(violations) = e;
        violations
            .into_iter()
            .map(|v| InputError {
                path: display.clone(),
                field: v.field,
                reason: v.reason,
            })
            .collect::<Vec<_>>()
    })?;
    Ok((scenario, derived))
}

fn parse_grid(path: &Path) -> Result<GridSpec, Vec<InputError>> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| {
        vec![InputError {
            path: display.clone(),
            field: String::new(),
            reason: format!("cannot read file: {e}"),
        }]
    })?;
    serde_json::from_str(&text).map_err(|e| {
        vec![InputError {
            path: display,
            field: String::new(),
            reason: e.to_string(),
        }]
    })
}

fn report_input_errors(errors: Vec<InputError>) -> i32 {
    let list = ErrorList { errors };
    eprintln!(
        "{}",
        serde_json::to_string_pretty(&list).expect("serializable")
    );
    2
}

/// Full round-trip decimal formatting: 17 significant digits.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct RunManifest {
    tool_version: &'static str,
    scenario_fingerprint: String,
    seed: Option<u64>,
    started_at: String,
    finished_at: String,
    outputs: Vec<String>,
}

struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
    started_at: String,
}

impl OutputDir {
    fn create(dir: &Path) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), String> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), String> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        text.push('\n');
        self.write(name, &text)
    }

    fn finish(mut self, fingerprint: String, seed: Option<u64>) -> Result<(), String> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            scenario_fingerprint: fingerprint,
            seed,
            started_at: self.started_at.clone(),
            finished_at: chrono::Utc::now().to_rfc3339(),
            outputs: self.files.clone(),
        };
        self.write_json("manifest.json", &manifest)
    }
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(RunError::Input(errors)) => report_input_errors(errors),
        Err(RunError::Other(message)) => {
            eprintln!("error: {message}");
            2
        }
    }
}

enum RunError {
    Input(Vec<InputError>),
    Other(String),
}

impl From<Vec<InputError>> for RunError {
    fn from(errors: Vec<InputError>) -> Self {
        RunError::Input(errors)
    }
}

impl From<String> for RunError {
    fn from(message: String) -> Self {
        RunError::Other(message)
    }
}

fn apply_sim_overrides(scenario: &mut Scenario, sim: &SimArgs) {
    if let Some(slots) = sim.slots {
        scenario.sim.slots = slots;
    }
    if let Some(seed) = sim.seed {
        scenario.sim.seed = seed;
    }
    if let Some(reps) = sim.replications {
        scenario.sim.replications = reps;
    }
}

fn dispatch(cli: Cli) -> Result<i32, RunError> {
    match cli.command {
        Command::Analyze { io } => {
            let (scenario, derived) = parse_scenario(&io.scenario)?;
            run_analyze(&io, &scenario, &derived)
        }
        Command::Simulate { io, sim } => {
            let (mut scenario, derived) = parse_scenario(&io.scenario)?;
            apply_sim_overrides(&mut scenario, &sim);
            run_simulate(&io, &scenario, &derived)
        }
        Command::Validate {
            io,
            sim,
            tolerance_mean,
            tolerance_tv,
        } => {
            let (mut scenario, derived) = parse_scenario(&io.scenario)?;
            apply_sim_overrides(&mut scenario, &sim);
            let tolerances = Tolerances {
                mean_rel: tolerance_mean,
                tv: tolerance_tv,
            };
            run_validate(&io, &scenario, &derived, tolerances)
        }
        Command::Sweep { io, grid, weight } => {
            let (scenario, _) = parse_scenario(&io.scenario)?;
            let grid = parse_grid(&grid)?;
            run_sweep(&io, &scenario, &grid, weight)
        }
        Command::Optimize {
            io,
            grid,
            objective,
            weight,
        } => {
            let (scenario, _) = parse_scenario(&io.scenario)?;
            let grid = parse_grid(&grid)?;
            run_optimize(&io, &scenario, &grid, objective, weight)
        }
    }
}

/// Analytic per-source bundle; errors become input errors (exit 2).
fn analytic_sources(
    scenario_path: &Path,
    derived: &DerivedParams,
) -> Result<Vec<AnalyticSource>, RunError> {
    let mut out = Vec::with_capacity(derived.sources.len());
    for (i, src) in derived.sources.iter().enumerate() {
        let link = derived.link(i);
        let build = || -> Result<AnalyticSource, metrics::MetricsError> {
            Ok(AnalyticSource {
                metrics: metrics::source_metrics(&link, src.tx_power)?,
                aoi_pmf: metrics::aoi_pmf(&link, PMF_EPS)?,
                paoi_pmf: metrics::paoi_pmf(&link, PMF_EPS)?,
            })
        };
        out.push(build().map_err(|e| {
            RunError::Input(vec![InputError {
                path: scenario_path.display().to_string(),
                field: format!("sources[{i}]"),
                reason: e.to_string(),
            }])
        })?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct SystemSummary {
    source_avg_aoi: f64,
    total_power: f64,
    overall_ee: f64,
    harmonic_timeliness: f64,
}

#[derive(Serialize)]
struct AnalyzeOutput<'a> {
    per_source: Vec<&'a SourceMetrics>,
    system: SystemSummary,
}

fn system_summary(per_source: &[SourceMetrics]) -> Result<SystemSummary, RunError> {
    let sys = metrics::system_metrics(per_source, 0.5, None)
        .map_err(|e| RunError::Other(e.to_string()))?;
    Ok(SystemSummary {
        source_avg_aoi: sys.source_avg_aoi,
        total_power: sys.total_power,
        overall_ee: sys.overall_ee,
        harmonic_timeliness: sys.harmonic_timeliness,
    })
}

fn pmf_csv(aoi: &Pmf, paoi: &Pmf) -> Result<String, String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["n", "aoi_pmf", "paoi_pmf"])
        .map_err(|e| e.to_string())?;
    let end = aoi.support_end().max(paoi.support_end());
    for n in 2..=end {
        writer
            .write_record([n.to_string(), fmt_f64(aoi.prob(n)), fmt_f64(paoi.prob(n))])
            .map_err(|e| e.to_string())?;
    }
    let bytes = writer.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

fn run_analyze(io: &IoArgs, scenario: &Scenario, derived: &DerivedParams) -> Result<i32, RunError> {
    let analytic = analytic_sources(&io.scenario, derived)?;
    let mut out = OutputDir::create(&io.out).map_err(RunError::Other)?;
    let per_source: Vec<&SourceMetrics> = analytic.iter().map(|a| &a.metrics).collect();
    let output = AnalyzeOutput {
        system: system_summary(&analytic.iter().map(|a| a.metrics).collect::<Vec<_>>())?,
        per_source,
    };
    out.write_json("metrics.json", &output)
        .map_err(RunError::Other)?;
    for (i, a) in analytic.iter().enumerate() {
        let csv = pmf_csv(&a.aoi_pmf, &a.paoi_pmf).map_err(RunError::Other)?;
        out.write(&format!("pmf_source_{}.csv", i + 1), &csv)
            .map_err(RunError::Other)?;
    }
    out.finish(scenario.fingerprint(), None)
        .map_err(RunError::Other)?;
    Ok(0)
}

#[derive(Serialize)]
struct CountersSummary {
    slots_counted: u64,
    per_source: Vec<SourceCountersSummary>,
}

#[derive(Serialize)]
struct SourceCountersSummary {
    busy_slots: u64,
    deliveries: u64,
    drops: u64,
    preemptions: u64,
    tx_slots_delivered: u64,
    energy: f64,
}

fn counters_summary(counters: &sim::SimCounters, derived: &DerivedParams) -> CountersSummary {
    CountersSummary {
        slots_counted: counters.slots_counted,
        per_source: counters
            .per_source
            .iter()
            .zip(&derived.sources)
            .map(|(c, s)| SourceCountersSummary {
                busy_slots: c.busy_slots,
                deliveries: c.deliveries,
                drops: c.drops,
                preemptions: c.preemptions,
                tx_slots_delivered: c.tx_slots_delivered,
                energy: s.tx_power * c.busy_slots as f64,
            })
            .collect(),
    }
}

fn run_simulation(
    scenario: &Scenario,
    derived: &DerivedParams,
) -> Result<(sim::SimCounters, Vec<sim::EmpiricalSource>), RunError> {
    let counters =
        sim::run_scenario(scenario, derived).map_err(|e| RunError::Other(e.to_string()))?;
    let empirical = sim::empirical_metrics(&counters, derived)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RunError::Other(format!("{e}; increase slots or check the scenario")))?;
    Ok((counters, empirical))
}

fn run_simulate(
    io: &IoArgs,
    scenario: &Scenario,
    derived: &DerivedParams,
) -> Result<i32, RunError> {
    let (counters, empirical) = run_simulation(scenario, derived)?;
    let mut out = OutputDir::create(&io.out).map_err(RunError::Other)?;
    let metrics_list: Vec<SourceMetrics> = empirical.iter().map(|e| e.metrics).collect();
    let output = AnalyzeOutput {
        system: system_summary(&metrics_list)?,
        per_source: metrics_list.iter().collect(),
    };
    out.write_json("empirical_metrics.json", &output)
        .map_err(RunError::Other)?;
    for (i, e) in empirical.iter().enumerate() {
        let csv = pmf_csv(&e.aoi_pmf, &e.paoi_pmf).map_err(RunError::Other)?;
        out.write(&format!("empirical_pmf_source_{}.csv", i + 1), &csv)
            .map_err(RunError::Other)?;
    }
    out.write_json("counters.json", &counters_summary(&counters, derived))
        .map_err(RunError::Other)?;
    out.finish(scenario.fingerprint(), Some(scenario.sim.seed))
        .map_err(RunError::Other)?;
    Ok(0)
}

fn run_validate(
    io: &IoArgs,
    scenario: &Scenario,
    derived: &DerivedParams,
    tolerances: Tolerances,
) -> Result<i32, RunError> {
    let analytic = analytic_sources(&io.scenario, derived)?;
    let (_, empirical) = run_simulation(scenario, derived)?;
    let report = sim::compare(&analytic, &empirical, tolerances);
    let mut out = OutputDir::create(&io.out).map_err(RunError::Other)?;
    out.write_json("validation.json", &report)
        .map_err(RunError::Other)?;
    out.finish(scenario.fingerprint(), Some(scenario.sim.seed))
        .map_err(RunError::Other)?;
    Ok(if report.pass { 0 } else { 1 })
}

fn sweep_csv(table: &SweepTable, weight_aoi: f64) -> Result<String, String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = table.dimensions.iter().map(|d| d.label()).collect();
    let n_sources = table.rows.first().map(|r| r.per_source.len()).unwrap_or(0);
    for s in 1..=n_sources {
        for field in ["mean_aoi", "mean_paoi", "duty_cycle", "avg_power", "ee"] {
            header.push(format!("{field}_{s}"));
        }
    }
    header.extend(
        ["source_avg_aoi", "total_power", "ws", "overall_ee", "flags"]
            .iter()
            .map(|s| s.to_string()),
    );
    writer.write_record(&header).map_err(|e| e.to_string())?;

    let ws = table.ws_values(weight_aoi);
    for (row, &ws_value) in table.rows.iter().zip(&ws) {
        let mut record: Vec<String> = row.assignment.iter().map(|&v| fmt_f64(v)).collect();
        for m in &row.per_source {
            record.push(fmt_f64(m.mean_aoi));
            record.push(fmt_f64(m.mean_paoi));
            record.push(fmt_f64(m.duty_cycle));
            record.push(fmt_f64(m.avg_power));
            record.push(fmt_f64(m.ee));
        }
        record.push(fmt_f64(row.source_avg_aoi));
        record.push(fmt_f64(row.total_power));
        record.push(fmt_f64(ws_value));
        record.push(fmt_f64(row.overall_ee));
        record.push(
            row.degenerate_sources
                .iter()
                .map(|s| format!("degenerate:{s}"))
                .collect::<Vec<_>>()
                .join(";"),
        );
        writer.write_record(&record).map_err(|e| e.to_string())?;
    }
    let bytes = writer.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    dimensions: &'a [optimize::GridDimension],
    rows: usize,
    weight_aoi: f64,
    normalization: &'a metrics::NormalizationContext,
}

fn scenario_weight(scenario: &Scenario, flag: Option<f64>) -> f64 {
    flag.or_else(|| scenario.objective.map(|o| o.weight_aoi))
        .unwrap_or(0.5)
}

fn run_sweep(
    io: &IoArgs,
    scenario: &Scenario,
    grid: &GridSpec,
    weight: Option<f64>,
) -> Result<i32, RunError> {
    let weight_aoi = scenario_weight(scenario, weight);
    let table = optimize::sweep(scenario, grid).map_err(|e| RunError::Other(e.to_string()))?;
    let mut out = OutputDir::create(&io.out).map_err(RunError::Other)?;
    out.write(
        "sweep.csv",
        &sweep_csv(&table, weight_aoi).map_err(RunError::Other)?,
    )
    .map_err(RunError::Other)?;
    out.write_json(
        "sweep_meta.json",
        &SweepMeta {
            dimensions: &table.dimensions,
            rows: table.rows.len(),
            weight_aoi,
            normalization: &table.normalization,
        },
    )
    .map_err(RunError::Other)?;
    out.finish(scenario.fingerprint(), None)
        .map_err(RunError::Other)?;
    Ok(0)
}

fn run_optimize(
    io: &IoArgs,
    scenario: &Scenario,
    grid: &GridSpec,
    objective: Option<String>,
    weight: Option<f64>,
) -> Result<i32, RunError> {
    let kind = match objective.as_deref() {
        Some("ws") => ObjectiveKind::WeightedSum,
        Some("ee") => ObjectiveKind::EnergyEfficiency,
        Some(other) => {
            return Err(RunError::Other(format!(
                "unknown objective `{other}` (expected ws or ee)"
            )))
        }
        None => scenario.objective.map(|o| o.kind).unwrap_or_default(),
    };
    let weight_aoi = scenario_weight(scenario, weight);
    let result: OptResult = match kind {
        ObjectiveKind::WeightedSum => optimize::optimize_ws(scenario, grid, weight_aoi),
        ObjectiveKind::EnergyEfficiency => optimize::optimize_ee(scenario, grid),
    }
    .map_err(|e| RunError::Other(e.to_string()))?;

    let mut out = OutputDir::create(&io.out).map_err(RunError::Other)?;
    out.write(
        "sweep.csv",
        &sweep_csv(&result.table, weight_aoi).map_err(RunError::Other)?,
    )
    .map_err(RunError::Other)?;
    out.write_json("optresult.json", &result)
        .map_err(RunError::Other)?;
    out.finish(scenario.fingerprint(), None)
        .map_err(RunError::Other)?;
    println!(
        "{} optimum {} = {}",
        match kind {
            ObjectiveKind::WeightedSum => "ws",
            ObjectiveKind::EnergyEfficiency => "ee",
        },
        serde_json::to_string(&result.argopt).expect("serializable"),
        result.value
    );
    for (name, baseline) in &result.baselines {
        println!("baseline {name}: {}", baseline.value);
    }
    Ok(0)
}
