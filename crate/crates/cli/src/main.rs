use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use iscan::data::EnvironmentData;
use iscan::detect::{iscan, DetectConfig, Selection};
use iscan::eval::{run_benchmark, write_results_csv, Aggregate, GridCell};
use iscan::graph::TopologicalOrder;
use iscan::io::{check_same_columns, read_environment_csv, read_json, write_environment_csv, write_json};
use iscan::score::{estimate_score, jacobian_variance, Bandwidth, KernelConfig};
use iscan::simulate::{build_scenario, GroundTruth, ScenarioConfig};
use iscan::structure::{
    diff_functional_edges, diff_structural_edges, BasisConfig, BasisFamily, DiffEdges, DiffKind, FociConfig,
};
use iscan::{Error, ShiftReport64};

const SEED_ENV: &str = "ISCAN_SEED";

#[derive(Parser, Debug)]
#[command(name = "iscan", version, about = "Detect shifted causal mechanisms across environments")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate multi-environment data with known shifts.
    Simulate(SimulateArgs),
    /// Find shifted nodes and a topological order.
    Detect(DetectArgs),
    /// Find the edges into shifted nodes that changed.
    Diff(DiffArgs),
    /// Run a benchmark grid over seeds.
    Bench(BenchArgs),
    /// Export kernel score estimates for one dataset.
    ScoreDump(ScoreDumpArgs),
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Master seed; overrides the config file and ISCAN_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// Ridge added to the kernel matrix.
    #[arg(long)]
    eta: Option<f64>,
    /// Fixed kernel bandwidth instead of the median heuristic.
    #[arg(long)]
    bandwidth: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// One CSV per environment.
    #[arg(required = true)]
    data: Vec<PathBuf>,
    /// Detection JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Flag nodes whose statistic exceeds this value.
    #[arg(long, conflicts_with = "elbow")]
    threshold: Option<f64>,
    /// Pick shifted nodes at the knee of the sorted statistics.
    #[arg(long)]
    elbow: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Structural,
    Functional,
}

#[derive(Args, Debug)]
struct DiffArgs {
    /// One CSV per environment, in the order used for detection.
    #[arg(required = true)]
    data: Vec<PathBuf>,
    /// Report written by `detect`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Structural)]
    kind: KindArg,
    /// JSON with the structural or functional settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Test level for functional changes.
    #[arg(long)]
    alpha: Option<f64>,
    /// Polynomial degree for functional changes.
    #[arg(long)]
    degree: Option<usize>,
    /// Minimum dependence gain for adding a parent.
    #[arg(long)]
    min_gain: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Grid JSON: `{"seeds": n, "seed": s, "cells": [...]}`.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    /// Seeds per cell.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ScoreDumpArgs {
    data: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug)]
enum CliError {
    /// Bad configuration or unreadable input.
    Config(String),
    /// Inputs that do not fit together or cannot be analysed.
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Input(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Diff(a) => cmd_diff(a),
        Command::Bench(a) => cmd_bench(a),
        Command::ScoreDump(a) => cmd_score_dump(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

/// Seed precedence: flag, then environment, then the file.
fn seed_override(flag: Option<u64>) -> CliResult<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn read_value(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn object<'a>(v: &'a mut Value, what: &str) -> CliResult<&'a mut serde_json::Map<String, Value>> {
    v.as_object_mut()
        .ok_or_else(|| CliError::Config(format!("{what} must be a JSON object")))
}

fn from_value<D: serde::de::DeserializeOwned>(v: Value, what: &str) -> CliResult<D> {
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))
}

fn write_out<S: Serialize>(value: &S, path: &Path) -> CliResult<()> {
    write_json(value, path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_text(text: &str, path: &Path) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_environments(paths: &[PathBuf]) -> CliResult<(Vec<EnvironmentData<f64>>, Vec<String>)> {
    if paths.len() < 2 {
        return Err(CliError::Data("at least two environments required".into()));
    }
    let data = paths
        .iter()
        .enumerate()
        .map(|(h, p)| read_environment_csv(p, h).map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    let names = check_same_columns(&data)?;
    Ok((data, names))
}

fn display_paths(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn apply_kernel_flags(kernel: &mut KernelConfig, args: &KernelArgs) {
    if let Some(eta) = args.eta {
        kernel.eta = eta;
    }
    if let Some(s) = args.bandwidth {
        kernel.bandwidth = Bandwidth::Fixed(s);
    }
}

#[derive(Serialize)]
struct GroundTruthFile<'a> {
    config: &'a ScenarioConfig,
    seed: u64,
    files: Vec<String>,
    truth: &'a GroundTruth,
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let mut raw = read_value(&args.config)?;
    if let Some(seed) = seed_override(args.seed.seed)? {
        object(&mut raw, "scenario config")?.insert("seed".into(), seed.into());
    }
    let config: ScenarioConfig = from_value(raw, "scenario config")?;
    let spec = config.to_spec()?;
    let scenario = build_scenario(&spec)?;
    ensure_dir(&args.out_dir)?;
    let mut files = Vec::new();
    for (h, env) in scenario.datasets.iter().enumerate() {
        let name = format!("env_{h}.csv");
        write_environment_csv(env, &args.out_dir.join(&name))?;
        files.push(name);
    }
    let out = GroundTruthFile {
        config: &config,
        seed: config.seed,
        files,
        truth: &scenario.truth,
    };
    write_out(&out, &args.out_dir.join("ground_truth.json"))?;
    log::info!("shifted nodes {:?}", scenario.truth.shifted_nodes);
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    config: DetectConfig,
    inputs: Vec<String>,
    columns: Vec<String>,
    report: ShiftReport64,
}

fn cmd_detect(args: DetectArgs) -> CliResult<()> {
    let mut config: DetectConfig = match &args.config {
        Some(p) => from_value(read_value(p)?, "detect config")?,
        None => DetectConfig::default(),
    };
    apply_kernel_flags(&mut config.kernel, &args.kernel);
    if let Some(t) = args.threshold {
        config.selection = Selection::Threshold { t };
    }
    if args.elbow {
        config.selection = Selection::Elbow;
    }
    config.validate()?;
    let (data, columns) = load_environments(&args.data)?;
    let report = iscan(&data, &config)?;
    log::info!("shifted {:?}", report.shifted);
    ensure_dir(&args.out_dir)?;
    let out = ReportFile {
        config,
        inputs: display_paths(&args.data),
        columns,
        report,
    };
    write_out(&out, &args.out_dir.join("report.json"))
}

#[derive(Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct DiffFileConfig {
    structural: FociConfig,
    functional: BasisConfig,
}

#[derive(Serialize)]
#[serde(untagged)]
enum DiffSettings {
    Structural(FociConfig),
    Functional(BasisConfig),
}

#[derive(Serialize)]
struct DiffFile {
    kind: DiffKind,
    config: DiffSettings,
    seed: Option<u64>,
    inputs: Vec<String>,
    report: String,
    columns: Vec<String>,
    result: DiffEdges,
}

fn cmd_diff(args: DiffArgs) -> CliResult<()> {
    let mut file_cfg: DiffFileConfig = match &args.config {
        Some(p) => from_value(read_value(p)?, "diff config")?,
        None => DiffFileConfig::default(),
    };
    let report: ReportFile = read_json(&args.report)?;
    let (data, columns) = load_environments(&args.data)?;
    if report.columns != columns {
        return Err(CliError::Data(format!(
            "report columns [{}] differ from data columns [{}]",
            report.columns.join(","),
            columns.join(",")
        )));
    }
    let d = columns.len();
    let order = TopologicalOrder::new(report.report.order.as_slice().to_vec())
        .map_err(|e| CliError::Config(format!("{}: {e}", args.report.display())))?;
    let shifted: BTreeSet<usize> = report.report.shifted.iter().copied().collect();
    if let Some(j) = shifted.iter().find(|&&j| j >= d) {
        return Err(CliError::Data(format!("report names node {j} but the data has {d} columns")));
    }
    let (kind, settings, seed, result) = match args.kind {
        KindArg::Structural => {
            let cfg = &mut file_cfg.structural;
            if let Some(g) = args.min_gain {
                cfg.min_gain = g;
            }
            if let Some(s) = seed_override(args.seed.seed)? {
                cfg.seed = s;
            }
            let result = diff_structural_edges(&data, &order, &shifted, cfg)?;
            (DiffKind::Structural, DiffSettings::Structural(*cfg), Some(cfg.seed), result)
        }
        KindArg::Functional => {
            let cfg = &mut file_cfg.functional;
            if let Some(a) = args.alpha {
                cfg.alpha = a;
            }
            if let Some(degree) = args.degree {
                cfg.family = BasisFamily::Polynomial { degree };
            }
            cfg.validate()?;
            let result = diff_functional_edges(&data, &order, &shifted, cfg)?;
            (DiffKind::Functional, DiffSettings::Functional(cfg.clone()), None, result)
        }
    };
    for s in &result.skipped {
        eprintln!("warning: skipped node {}: {}", s.node, s.reason);
    }
    ensure_dir(&args.out_dir)?;
    write_text(&result.to_dot(d, Some(&columns)), &args.out_dir.join("diff_edges.dot"))?;
    let out = DiffFile {
        kind,
        config: settings,
        seed,
        inputs: display_paths(&args.data),
        report: args.report.display().to_string(),
        columns,
        result,
    };
    write_out(&out, &args.out_dir.join("diff_edges.json"))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchConfig {
    seeds: usize,
    /// Scenario seed shared by every cell; seed `s` of a cell uses `seed + s`.
    seed: u64,
    cells: Vec<GridCell>,
}

#[derive(Serialize)]
struct CellSummary<'a> {
    cell: &'a GridCell,
    aggregate: &'a Aggregate,
}

#[derive(Serialize)]
struct BenchSummary<'a> {
    config: &'a BenchConfig,
    seed: u64,
    cells: Vec<CellSummary<'a>>,
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let mut raw = read_value(&args.config)?;
    let root = object(&mut raw, "bench config")?;
    if let Some(seed) = seed_override(args.seed.seed)? {
        root.insert("seed".into(), seed.into());
    }
    if let Some(n) = args.seeds {
        root.insert("seeds".into(), n.into());
    }
    root.entry("seed").or_insert(0.into());
    let seed = root["seed"].clone();
    let cells = root
        .get_mut("cells")
        .and_then(Value::as_array_mut)
        .ok_or_else(|| CliError::Config("bench config: missing field `cells`".into()))?;
    for (c, cell) in cells.iter_mut().enumerate() {
        let scenario = cell
            .get_mut("scenario")
            .and_then(Value::as_object_mut)
            .ok_or_else(|| CliError::Config(format!("bench config: cell {c} has no `scenario` object")))?;
        scenario.insert("seed".into(), seed.clone());
    }
    let config: BenchConfig = from_value(raw, "bench config")?;
    let results = run_benchmark(&config.cells, config.seeds)?;
    ensure_dir(&args.out_dir)?;
    let csv_path = args.out_dir.join("results.csv");
    let file = fs::File::create(&csv_path).map_err(|e| CliError::Config(format!("{}: {e}", csv_path.display())))?;
    write_results_csv(&results, std::io::BufWriter::new(file))?;
    let summary = BenchSummary {
        config: &config,
        seed: config.seed,
        cells: results
            .iter()
            .map(|r| CellSummary {
                cell: &r.cell,
                aggregate: &r.aggregate,
            })
            .collect(),
    };
    write_out(&summary, &args.out_dir.join("summary.json"))
}

#[derive(Serialize)]
struct ScoreDumpFile {
    config: KernelConfig,
    input: String,
    bandwidth: f64,
    columns: Vec<String>,
    jacobian_variance: Vec<f64>,
}

fn cmd_score_dump(args: ScoreDumpArgs) -> CliResult<()> {
    let mut kernel = KernelConfig::default();
    apply_kernel_flags(&mut kernel, &args.kernel);
    kernel.validate()?;
    let data = read_environment_csv(&args.data, 0)?;
    let columns = data.names();
    let est = estimate_score(&data.values, &kernel)?;
    let var = jacobian_variance(&data.values, &kernel)?.var;
    ensure_dir(&args.out_dir)?;
    let path = args.out_dir.join("score_dump.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut header = vec!["row".to_string()];
    header.extend(columns.iter().map(|c| format!("grad_{c}")));
    header.extend(columns.iter().map(|c| format!("hess_{c}")));
    w.write_record(&header).map_err(Error::from)?;
    for i in 0..data.num_samples() {
        let mut rec = vec![i.to_string()];
        rec.extend(est.gradients.row(i).iter().map(|v| v.to_string()));
        rec.extend(est.hessian_diag.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    let out = ScoreDumpFile {
        config: kernel,
        input: args.data.display().to_string(),
        bandwidth: kernel.resolve_bandwidth(&data.values)?,
        columns,
        jacobian_variance: var,
    };
    write_out(&out, &args.out_dir.join("score_dump.json"))
}
