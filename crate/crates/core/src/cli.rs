//! Command-line front end: `fit`, `eval`, `simulate` and `bench`.
//!
//! Configuration is layered: built-in defaults, then the `--config` TOML
//! file, then `MAXENT_*` environment variables, then `--set key=value`.
//! Nested keys use `.` on the command line and `__` in variable names, e.g.
//! `MAXENT_SOLVER__TOL=1e-12` or `--set nodes.counts=[6,6]`.
//!
//! Exit codes: 0 success, 2 parse or configuration error, 3 point outside
//! the node hull, 4 solver failure, 5 rollout left the hull, 6 numerical
//! blowup during a rollout.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::approximator::Dataset;
use crate::bench::{self, merge_tables, padded_bounds, ExperimentConfig};
use crate::dynamics::{self, eval_field, IntegrateError, SurrogateModel};
use crate::error::{Error, Result};
use crate::formats;
use crate::geometry::{augment_nodes, grid_nodes, NodeSet};
use crate::maxent::SolverOptions;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_OUTSIDE_HULL: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_LEFT_HULL: i32 = 5;
pub const EXIT_BLOWUP: i32 = 6;

pub const ENV_PREFIX: &str = "MAXENT_";
pub const MODEL_FORMAT: &str = "maxent-model";
pub const MODEL_VERSION: u32 = 1;

/// How basis nodes are placed for `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeSpec {
    /// Use the training points themselves as nodes.
    pub from_data: bool,
    /// Grid bounds per axis; empty means the padded bounding box of the data.
    pub bounds: Vec<[f64; 2]>,
    /// Grid points per axis; empty means 5 per axis.
    pub counts: Vec<usize>,
    /// Relative padding applied when bounds are taken from the data.
    pub padding: f64,
    /// Training points added to the grid by farthest-point selection.
    pub augment: usize,
}

impl Default for NodeSpec {
    fn default() -> Self {
        NodeSpec {
            from_data: false,
            bounds: vec![],
            counts: vec![],
            padding: 0.1,
            augment: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub beta: f64,
    pub alpha: f64,
    pub nodes: NodeSpec,
    pub solver: SolverOptions,
    /// Overrides merged into the preset of a `bench` experiment.
    pub experiment: toml::Table,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            beta: 1.0,
            alpha: 0.0,
            nodes: NodeSpec::default(),
            solver: SolverOptions::default(),
            experiment: toml::Table::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.nodes.padding >= 0.0) {
            return Err(Error::Config("nodes.padding must be >= 0".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Stored model: the surrogate plus column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub model: SurrogateModel,
}

impl ModelFile {
    pub fn new(model: SurrogateModel, outputs: Vec<String>) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            inputs: formats::input_header(model.nodes.dim()),
            outputs,
            model,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = formats::read_json(path)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "{}: unsupported model format {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        if file.outputs.len() != file.model.n_outputs()
            || file.model.coefficients.iter().any(|a| a.len() != file.model.nodes.len())
        {
            return Err(Error::Parse(format!("{}: inconsistent model dimensions", path.display())));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        formats::write_json(path, self)
    }
}

#[derive(Debug, Parser)]
#[command(name = "maxent", version = VERSION, about = "Local maximum-entropy approximants and dynamics surrogates")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set solver.tol=1e-12`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a CSV dataset.
    Fit(FitArgs),
    /// Evaluate a stored model at CSV points.
    Eval(EvalArgs),
    /// Integrate a stored vector-field model.
    Simulate(SimulateArgs),
    /// Run a benchmark experiment.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Initial state as a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub t1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub experiment: String,
    /// Also fit the dictionary-regression baseline.
    #[arg(long)]
    pub baseline: bool,
    /// Artifact directory; defaults to `bench-out/<experiment>`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model format v1)");

/// Parses `a.b=value`; the value is read as a TOML literal, falling back to
/// a plain string.
pub fn parse_assignment(text: &str) -> Result<toml::Table> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got '{text}'")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid key '{key}'")));
    }
    Ok(nest(&path, parse_value(value.trim())))
}

fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

fn nest(path: &[&str], value: toml::Value) -> toml::Table {
    let mut table = toml::Table::new();
    match path {
        [last] => {
            table.insert(last.to_string(), value);
        }
        [first, rest @ ..] => {
            table.insert(first.to_string(), toml::Value::Table(nest(rest, value)));
        }
        [] => {}
    }
    table
}

/// Overrides from `MAXENT_*` variables; `__` separates nested keys.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(vars: I) -> toml::Table {
    let mut out = toml::Table::new();
    let mut pairs: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len())
        .collect();
    pairs.sort();
    for (k, v) in pairs {
        let key = k[ENV_PREFIX.len()..].to_ascii_lowercase();
        let path: Vec<&str> = key.split("__").collect();
        merge_tables(&mut out, &nest(&path, parse_value(&v)));
    }
    out
}

/// Layers the config file, environment and `--set` assignments onto the
/// defaults. `bench` routes `--set` into the experiment table.
pub fn resolve_config(
    file: Option<&Path>,
    env: toml::Table,
    sets: &[String],
    sets_target_experiment: bool,
) -> Result<RunConfig> {
    let mut table = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parsed: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        merge_tables(&mut table, &parsed);
    }
    merge_tables(&mut table, &env);
    for s in sets {
        let assignment = parse_assignment(s)?;
        if sets_target_experiment {
            let mut wrapped = toml::Table::new();
            wrapped.insert("experiment".into(), toml::Value::Table(assignment));
            merge_tables(&mut table, &wrapped);
        } else {
            merge_tables(&mut table, &assignment);
        }
    }
    let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::Dimension { .. } => EXIT_CONFIG,
        Error::OutsideHull { .. } => EXIT_OUTSIDE_HULL,
        Error::Fit { .. } | Error::NotConverged { .. } | Error::Domain(_) => EXIT_SOLVER,
    }
}

/// Error message naming the input file and, for hull violations, the CSV
/// data row (numbered from 1 after the header).
fn describe(err: &Error, file: Option<&Path>) -> String {
    let prefix = file.map(|p| format!("{}: ", p.display())).unwrap_or_default();
    match err {
        Error::OutsideHull { index: Some(i), point } => {
            format!("{prefix}row {} {:?} lies outside the convex hull of the nodes", i + 1, point)
        }
        Error::Fit { failed, component } => {
            let rows: Vec<String> = failed.iter().map(|i| (i + 1).to_string()).collect();
            let comp = component.map(|c| format!(" (output {})", c + 1)).unwrap_or_default();
            format!("{prefix}basis solve did not converge at rows {}{comp}", rows.join(", "))
        }
        other => format!("{prefix}{other}"),
    }
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| Error::Config(format!("missing required argument --{flag}")))
}

pub fn build_nodes(data: &Dataset, config: &RunConfig) -> Result<NodeSet> {
    let spec = &config.nodes;
    let d = data.dim().ok_or_else(|| Error::Parse("dataset is empty".into()))?;
    if spec.from_data {
        return NodeSet::new(data.points().to_vec());
    }
    let bounds: Vec<(f64, f64)> = if spec.bounds.is_empty() {
        padded_bounds(data.points(), spec.padding)
    } else {
        spec.bounds.iter().map(|b| (b[0], b[1])).collect()
    };
    let counts = if spec.counts.is_empty() { vec![5; d] } else { spec.counts.clone() };
    if bounds.len() != d || counts.len() != d {
        return Err(Error::Config(format!(
            "node grid needs {d} bounds and counts, got {} and {}",
            bounds.len(),
            counts.len()
        )));
    }
    let grid = grid_nodes(&bounds, &counts)?;
    if spec.augment == 0 {
        return Ok(grid);
    }
    Ok(augment_nodes(&grid, data.points(), spec.augment, config.seed)?.nodes)
}

fn output_names(header: &[String], d: usize) -> Vec<String> {
    header[d..].to_vec()
}

fn cmd_fit(args: &FitArgs, config: &RunConfig) -> std::result::Result<(), (Error, Option<PathBuf>)> {
    let data_path = required(&args.data, "data").map_err(|e| (e, None))?.clone();
    let out = required(&args.out, "out").map_err(|e| (e, None))?;
    let tag = |e: Error| (e, Some(data_path.clone()));
    let table = formats::read_table(&data_path).map_err(|e| (e, None))?;
    let data = formats::read_dataset(&data_path).map_err(|e| (e, None))?;
    let d = data.dim().unwrap_or(0);
    let nodes = build_nodes(&data, config).map_err(tag)?;
    let model = dynamics::fit_outputs(&nodes, &data, config.beta, config.alpha, &config.solver).map_err(tag)?;
    for (name, r) in table.column_names(d).iter().zip(&model.fit_reports) {
        log::info!("{name}: training RMS {:e}", r.training_rms);
    }
    ModelFile::new(model, output_names(&table.header, d))
        .save(out)
        .map_err(|e| (e, None))
}

fn cmd_eval(args: &EvalArgs) -> std::result::Result<(), (Error, Option<PathBuf>)> {
    let model_path = required(&args.model, "model").map_err(|e| (e, None))?;
    let points_path = required(&args.points, "points").map_err(|e| (e, None))?.clone();
    let out = required(&args.out, "out").map_err(|e| (e, None))?;
    let file = ModelFile::load(model_path).map_err(|e| (e, None))?;
    let table = formats::read_points(&points_path).map_err(|e| (e, None))?;
    let d = file.model.nodes.dim();
    if table.header.len() != d {
        return Err((
            Error::Dimension {
                expected: d,
                found: table.header.len(),
            },
            Some(points_path),
        ));
    }
    let mut rows = Vec::with_capacity(table.rows.len());
    for (i, p) in table.rows.iter().enumerate() {
        let pred = eval_field(&file.model, p).map_err(|e| {
            let e = match e {
                Error::OutsideHull { point, .. } => Error::OutsideHull { index: Some(i), point },
                other => other,
            };
            (e, Some(points_path.clone()))
        })?;
        rows.push(p.iter().copied().chain(pred).collect::<Vec<f64>>());
    }
    let mut header = table.header.clone();
    header.extend(file.outputs.iter().cloned());
    formats::write_table(out, &header, &rows).map_err(|e| (e, None))
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("invalid number '{s}' in --x0")))
        })
        .collect()
}

fn cmd_simulate(args: &SimulateArgs) -> std::result::Result<(), (Error, Option<PathBuf>, i32)> {
    let plain = |e: Error| {
        let code = exit_code(&e);
        (e, None, code)
    };
    let model_path = required(&args.model, "model").map_err(plain)?;
    let x0 = parse_list(required(&args.x0, "x0").map_err(plain)?).map_err(plain)?;
    let t1 = *required(&args.t1, "t1").map_err(plain)?;
    let dt = *required(&args.dt, "dt").map_err(plain)?;
    let out = required(&args.out, "out").map_err(plain)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(plain(Error::Config(format!("--dt must be > 0, got {dt}"))));
    }
    if !(t1 > args.t0) || !t1.is_finite() {
        return Err(plain(Error::Config(format!("--t1 must exceed t0 = {}", args.t0))));
    }
    let file = ModelFile::load(model_path).map_err(plain)?;
    if file.model.n_outputs() != file.model.nodes.dim() {
        return Err(plain(Error::Config(format!(
            "model has {} outputs for {} inputs; simulation needs a vector field",
            file.model.n_outputs(),
            file.model.nodes.dim()
        ))));
    }
    match dynamics::integrate(&file.model, &x0, (args.t0, t1), dt) {
        Ok(traj) => formats::write_trajectory(out, &traj).map_err(plain),
        Err(IntegrateError::Invalid(e)) => Err(plain(e)),
        Err(IntegrateError::DomainExit { time, partial, .. }) => {
            formats::write_trajectory(out, &partial).map_err(plain)?;
            Err((
                Error::Domain(format!(
                    "trajectory left the node hull; last valid time {}",
                    partial.times.last().copied().unwrap_or(time)
                )),
                None,
                EXIT_LEFT_HULL,
            ))
        }
        Err(IntegrateError::NumericalBlowup { time, partial, .. }) => {
            formats::write_trajectory(out, &partial).map_err(plain)?;
            Err((
                Error::Domain(format!("numerical blowup after t = {time}")),
                None,
                EXIT_BLOWUP,
            ))
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3e}"))
}

/// One summary row: name, nodes, samples, max training RMS, max test RMS,
/// baseline test RMS, windowed rollout RMS, runtime.
pub fn summary_row(out: &bench::RunOutput) -> String {
    let r = &out.report;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let baseline = r.baseline.as_ref().and_then(|b| {
        b.test_rms
            .as_deref()
            .map(max)
            .or_else(|| b.rollout.as_ref().and_then(|ro| ro.window_rms))
    });
    format!(
        "{:<13} n_B={:<5} n_D={:<5} train_rms={} test_rms={} baseline={} rollout_rms={} runtime={:.2}s",
        r.experiment,
        r.n_nodes,
        r.n_train,
        fmt_opt(Some(max(&r.training_rms))),
        fmt_opt(r.test_rms.as_deref().map(max)),
        fmt_opt(baseline),
        fmt_opt(r.rollout.as_ref().and_then(|ro| ro.window_rms)),
        out.runtime
    )
}

fn experiment_config(args: &BenchArgs, config: &RunConfig) -> Result<ExperimentConfig> {
    let mut overrides = config.experiment.clone();
    if args.baseline {
        merge_tables(&mut overrides, &parse_assignment("baseline.enabled=true")?);
    }
    ExperimentConfig::with_overrides(&args.experiment, &overrides)
}

fn cmd_bench(args: &BenchArgs, config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let exp = experiment_config(args, config)?;
    let out = bench::run_config(&exp)?;
    let dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("bench-out").join(&args.experiment));
    bench::write_artifacts(&dir, &out)?;
    writeln!(stdout, "{}", summary_row(&out)).map_err(|e| Error::Io(e.to_string()))
}

fn init_threads(threads: usize) {
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

/// Runs the CLI with explicit arguments and environment; returns the exit
/// code.
pub fn run<I, T>(args: I, env: toml::Table, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let is_bench = matches!(cli.command, Command::Bench(_));
    let config = match resolve_config(cli.config.as_deref(), env, &cli.set, is_bench) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    if cli.print_config {
        let printed = match &cli.command {
            Command::Bench(args) => experiment_config(args, &config).and_then(|exp| {
                let mut full = config.clone();
                full.experiment = toml::Table::try_from(&exp).map_err(|e| Error::Config(e.to_string()))?;
                full.to_toml()
            }),
            _ => config.to_toml(),
        };
        return match printed {
            Ok(text) => {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_CONFIG
            }
        };
    }
    init_threads(config.threads);

    let result: std::result::Result<(), (Error, Option<PathBuf>, Option<i32>)> = match &cli.command {
        Command::Fit(a) => cmd_fit(a, &config).map_err(|(e, f)| (e, f, None)),
        Command::Eval(a) => cmd_eval(a).map_err(|(e, f)| (e, f, None)),
        Command::Simulate(a) => cmd_simulate(a).map_err(|(e, f, c)| (e, f, Some(c))),
        Command::Bench(a) => cmd_bench(a, &config, stdout).map_err(|e| (e, None, None)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err((e, file, code)) => {
            let _ = writeln!(stderr, "error: {}", describe(&e, file.as_deref()));
            code.unwrap_or_else(|| exit_code(&e))
        }
    }
}
