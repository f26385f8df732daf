//! Deterministic benchmark experiments: three static function fits and two
//! dynamical systems, each with an optional dictionary-regression baseline.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{self, Approximant, Dataset};
use crate::baselines::{self, Dictionary, DictionaryModel};
use crate::dynamics::{self, FnField, IntegrateError, SurrogateModel, Trajectory, VectorField};
use crate::error::{Error, Result};
use crate::formats;
use crate::geometry::{augment_nodes, grid_nodes, in_hull, Membership, NodeSet, Point};
use crate::maxent::SolverOptions;

pub const EXPERIMENTS: [&str; 6] = ["sine", "gauss2d", "rosenbrock", "lorenz", "orbit", "orbit-sparse"];

/// Which form of the two-dimensional test function to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussVariant {
    /// `2x₁·exp(−4‖x‖²)`
    Heading,
    /// `x₁·exp(−‖x‖²)`
    Caption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub enabled: bool,
    pub degree: usize,
    pub trig_frequencies: Vec<f64>,
    pub threshold: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub gamma: f64,
}

/// Planar two-body orbit in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitParams {
    pub mu: f64,
    pub eccentricity: f64,
    pub perigee: f64,
    /// Orbital periods covered by the samples.
    pub periods: f64,
    /// Orbital periods covered by the model rollout.
    pub rollout_periods: f64,
}

impl OrbitParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.eccentricity) {
            return Err(Error::Config(format!(
                "orbit eccentricity must lie in [0, 1), got {}",
                self.eccentricity
            )));
        }
        if !(self.mu > 0.0 && self.perigee > 0.0 && self.periods > 0.0 && self.rollout_periods > 0.0) {
            return Err(Error::Config("orbit mu, perigee and period counts must be > 0".into()));
        }
        Ok(())
    }

    /// Angular momentum fixed by the perigee conditions.
    pub fn h0(&self) -> f64 {
        (self.mu * self.perigee * (1.0 + self.eccentricity)).sqrt()
    }

    pub fn semi_major_axis(&self) -> f64 {
        self.perigee / (1.0 - self.eccentricity)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI * (self.semi_major_axis().powi(3) / self.mu).sqrt()
    }

    /// State `(r, ṙ, θ, θ̇)` at perigee.
    pub fn perigee_state(&self) -> Vec<f64> {
        vec![self.perigee, 0.0, 0.0, self.h0() / (self.perigee * self.perigee)]
    }

    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        let (r, rdot, theta, thetadot) = (x[0], x[1], x[2], x[3]);
        vec![
            rdot,
            self.mu * self.eccentricity / self.h0() * thetadot * theta.cos(),
            thetadot,
            -2.0 * thetadot * rdot / r,
        ]
    }
}

impl LorenzParams {
    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        vec![
            self.sigma * (x[1] - x[0]),
            x[0] * (self.rho - x[2]) - x[1],
            x[0] * x[1] - self.gamma * x[2],
        ]
    }
}

/// Full parameter set of one experiment. Every field is explicit so that a
/// printed configuration reproduces the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub beta: f64,
    pub alpha: f64,
    /// Domain of the static examples, one `[lo, hi]` per axis.
    pub bounds: Vec<[f64; 2]>,
    /// Node grid points per axis.
    pub node_counts: Vec<usize>,
    /// Use the training points themselves as nodes.
    pub nodes_from_data: bool,
    /// Random training points (sine) or trajectory samples (dynamics).
    pub n_data: usize,
    /// Training grid per axis (two-dimensional examples).
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub gauss_variant: GaussVariant,
    /// Trajectory samples added to the node grid.
    pub n_augment: usize,
    /// Relative padding of the node box around the samples.
    pub padding: f64,
    /// Lorenz initial state; orbits start at perigee.
    pub x0: Vec<f64>,
    /// Time between Lorenz samples.
    pub sample_interval: f64,
    /// RK4 steps per sample interval.
    pub substeps: usize,
    /// Fraction of the rollout horizon used for the gated comparison.
    pub window_fraction: f64,
    pub lorenz: LorenzParams,
    pub orbit: OrbitParams,
    pub baseline: BaselineConfig,
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    /// Default configuration of a named experiment.
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = ExperimentConfig {
            name: name.to_string(),
            seed: 0,
            beta: 0.0,
            alpha: 0.0,
            bounds: vec![],
            node_counts: vec![],
            nodes_from_data: false,
            n_data: 0,
            train_counts: vec![],
            test_counts: vec![],
            gauss_variant: GaussVariant::Heading,
            n_augment: 0,
            padding: 0.1,
            x0: vec![],
            sample_interval: 0.0,
            substeps: 1,
            window_fraction: 1.0,
            lorenz: LorenzParams {
                sigma: 10.0,
                rho: 28.0,
                gamma: 8.0 / 3.0,
            },
            orbit: OrbitParams {
                mu: 1.0,
                eccentricity: 0.2,
                perigee: 1.1,
                periods: 2.0,
                rollout_periods: 2.0,
            },
            baseline: BaselineConfig {
                enabled: false,
                degree: 4,
                trig_frequencies: vec![1.0],
                threshold: baselines::DEFAULT_THRESHOLD,
                sweeps: baselines::DEFAULT_SWEEPS,
            },
            solver: SolverOptions::default(),
        };
        match name {
            "sine" => {
                c.beta = 100.0;
                c.bounds = vec![[0.0, 1.0]];
                c.node_counts = vec![10];
                c.n_data = 20;
                c.test_counts = vec![50];
                c.baseline.trig_frequencies = vec![2.0 * PI];
            }
            "gauss2d" | "rosenbrock" => {
                let (beta, lo) = if name == "gauss2d" { (10.0, 0.0) } else { (5.0, -1.0) };
                c.beta = beta;
                c.bounds = vec![[lo, 1.0]; 2];
                c.node_counts = vec![8, 8];
                c.train_counts = vec![16, 16];
                c.test_counts = vec![32, 32];
            }
            "lorenz" => {
                c.beta = 0.03;
                c.node_counts = vec![5; 3];
                c.n_data = 500;
                c.n_augment = 100;
                c.x0 = vec![-8.0, 7.0, 27.0];
                c.sample_interval = 0.005;
                c.substeps = 4;
                c.window_fraction = 0.2;
                c.baseline.degree = 2;
                c.baseline.trig_frequencies = vec![];
            }
            "orbit" | "orbit-sparse" => {
                let sparse = name == "orbit-sparse";
                c.beta = 0.1;
                c.node_counts = vec![5; 4];
                c.n_data = if sparse { 20 } else { 500 };
                c.n_augment = if sparse { 20 } else { 100 };
                c.substeps = if sparse { 100 } else { 4 };
                c.window_fraction = 0.1 / if sparse { 1.0 } else { 2.0 };
                if sparse {
                    c.orbit.periods = 1.0;
                    c.orbit.rollout_periods = 1.0;
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown experiment '{name}' (expected one of {})",
                    EXPERIMENTS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    /// The preset for `name` with a TOML table of overrides merged in.
    pub fn with_overrides(name: &str, overrides: &toml::Table) -> Result<Self> {
        let base = ExperimentConfig::preset(name)?;
        if let Some(v) = overrides.get("name") {
            if v.as_str() != Some(name) {
                return Err(Error::Config("the experiment name cannot be overridden".into()));
            }
        }
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge_tables(&mut table, overrides);
        let config: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.padding >= 0.0) {
            return Err(Error::Config("padding must be >= 0".into()));
        }
        if self.substeps == 0 || self.baseline.sweeps == 0 {
            return Err(Error::Config("substeps and baseline sweeps must be >= 1".into()));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(Error::Config("window_fraction must lie in (0, 1]".into()));
        }
        if self.name.starts_with("orbit") {
            self.orbit.validate()?;
        }
        Ok(())
    }
}

/// Recursively overlays `overrides` onto `base`.
pub fn merge_tables(base: &mut toml::Table, overrides: &toml::Table) {
    for (k, v) in overrides {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Training set, test set and node set of a static example.
#[derive(Debug, Clone)]
pub struct StaticProblem {
    pub train: Dataset,
    pub test: Dataset,
    pub nodes: NodeSet,
}

/// Samples, exact derivatives and node set of a dynamics example.
#[derive(Debug, Clone)]
pub struct DynamicsProblem {
    /// Sampled states with their exact time derivatives.
    pub train: Dataset,
    /// Truth on the fine integration grid over the sampled horizon.
    pub truth: Trajectory,
    pub nodes: NodeSet,
}

fn bounds_of(config: &ExperimentConfig, d: usize) -> Result<Vec<(f64, f64)>> {
    if config.bounds.len() != d {
        return Err(Error::Config(format!("expected {d} bounds, got {}", config.bounds.len())));
    }
    Ok(config.bounds.iter().map(|b| (b[0], b[1])).collect())
}

fn tabulate(points: Vec<Vec<f64>>, f: impl Fn(&[f64]) -> f64) -> Result<Dataset> {
    let values: Vec<Vec<f64>> = points.iter().map(|p| vec![f(p)]).collect();
    Dataset::from_rows(points, values)
}

fn grid_points(bounds: &[(f64, f64)], counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    Ok(grid_nodes(bounds, counts)?.to_rows())
}

pub fn sine(x: &[f64]) -> f64 {
    (2.0 * PI * x[0]).sin()
}

pub fn gauss2d(x: &[f64], variant: GaussVariant) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    match variant {
        GaussVariant::Heading => 2.0 * x[0] * (-4.0 * r2).exp(),
        GaussVariant::Caption => x[0] * (-r2).exp(),
    }
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

pub fn gen_sine(config: &ExperimentConfig) -> Result<StaticProblem> {
    if config.n_data == 0 {
        return Err(Error::Domain("sine experiment needs at least one training point".into()));
    }
    let bounds = bounds_of(config, 1)?;
    let (lo, hi) = bounds[0];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let xs: Vec<Vec<f64>> = (0..config.n_data)
        .map(|_| vec![lo + (hi - lo) * rng.random::<f64>()])
        .collect();
    let train = tabulate(xs, sine)?;
    let test = tabulate(grid_points(&bounds, &config.test_counts)?, sine)?;
    let nodes = if config.nodes_from_data {
        NodeSet::new(train.points().to_vec())?
    } else {
        grid_nodes(&bounds, &config.node_counts)?
    };
    Ok(StaticProblem { train, test, nodes })
}

fn gen_grid_problem(config: &ExperimentConfig, f: impl Fn(&[f64]) -> f64) -> Result<StaticProblem> {
    let bounds = bounds_of(config, 2)?;
    let train = tabulate(grid_points(&bounds, &config.train_counts)?, &f)?;
    let test = tabulate(grid_points(&bounds, &config.test_counts)?, &f)?;
    let nodes = if config.nodes_from_data {
        NodeSet::new(train.points().to_vec())?
    } else {
        grid_nodes(&bounds, &config.node_counts)?
    };
    Ok(StaticProblem { train, test, nodes })
}

pub fn gen_gauss2d(config: &ExperimentConfig) -> Result<StaticProblem> {
    let variant = config.gauss_variant;
    gen_grid_problem(config, |x| gauss2d(x, variant))
}

pub fn gen_rosenbrock(config: &ExperimentConfig) -> Result<StaticProblem> {
    gen_grid_problem(config, rosenbrock)
}

fn truth_run(field: &dyn VectorField, x0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    dynamics::integrate(field, x0, (0.0, t_end), dt).map_err(|e| match e {
        IntegrateError::Invalid(e) => e,
        other => Error::Domain(format!("truth integration failed: {other}")),
    })
}

/// Bounding box of `samples` widened by `padding` times its extent per axis.
pub fn padded_bounds(samples: &[Point], padding: f64) -> Vec<(f64, f64)> {
    let d = samples.first().map_or(0, Point::dim);
    (0..d)
        .map(|j| {
            let lo = samples.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
            let width = (hi - lo).max(1e-6 * (1.0 + lo.abs().max(hi.abs())));
            (lo - padding * width, hi + padding * width)
        })
        .collect()
}

/// Node grid over the padded bounding box of `samples`, augmented with
/// `k` samples.
fn dynamics_nodes(samples: &[Point], counts: &[usize], padding: f64, k: usize, seed: u64) -> Result<NodeSet> {
    let bounds = padded_bounds(samples, padding);
    Ok(augment_nodes(&grid_nodes(&bounds, counts)?, samples, k, seed)?.nodes)
}

fn sampled_problem(field: &dyn VectorField, x0: &[f64], interval: f64, config: &ExperimentConfig) -> Result<DynamicsProblem> {
    if config.n_data < 2 {
        return Err(Error::Config("dynamics experiments need at least two samples".into()));
    }
    if !(interval > 0.0) {
        return Err(Error::Config("sample interval must be > 0".into()));
    }
    let dt = interval / config.substeps as f64;
    let horizon = (config.n_data - 1) as f64 * interval;
    let truth = truth_run(field, x0, horizon, dt)?;
    let samples = truth.subsample(config.substeps).truncate(config.n_data);
    let derivs = samples.states.iter().map(|s| field.eval(s)).collect::<Result<Vec<_>>>()?;
    let train = Dataset::from_rows(samples.states.clone(), derivs)?;
    let nodes = dynamics_nodes(train.points(), &config.node_counts, config.padding, config.n_augment, config.seed)?;
    Ok(DynamicsProblem { train, truth, nodes })
}

pub fn gen_lorenz(config: &ExperimentConfig) -> Result<DynamicsProblem> {
    if config.x0.len() != 3 {
        return Err(Error::Config("Lorenz x0 needs three entries".into()));
    }
    let p = config.lorenz;
    let field = FnField::new(3, move |x: &[f64]| p.field(x));
    sampled_problem(&field, &config.x0, config.sample_interval, config)
}

pub fn gen_orbit(config: &ExperimentConfig) -> Result<DynamicsProblem> {
    let p = config.orbit;
    p.validate()?;
    let field = FnField::new(4, move |x: &[f64]| p.field(x));
    let interval = p.periods * p.period() / config.n_data.max(1) as f64;
    sampled_problem(&field, &p.perigee_state(), interval, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub horizon: f64,
    pub window_end: f64,
    /// RMS against truth over `[0, window_end]`; absent when the rollout
    /// stopped before the window closed.
    pub window_rms: Option<f64>,
    pub full_rms: Option<f64>,
    /// `completed`, `left-domain` or `blowup`.
    pub outcome: String,
    pub last_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumReport {
    pub h0: f64,
    pub max_error: f64,
    /// Normalized error at every rollout step.
    pub series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub n_features: usize,
    /// Surviving `(feature, coefficient)` pairs per output.
    pub terms: Vec<Vec<(String, f64)>>,
    pub training_rms: Vec<f64>,
    pub test_rms: Option<Vec<f64>>,
    pub rollout: Option<RolloutReport>,
    pub momentum: Option<MomentumReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub n_nodes: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Per output component.
    pub training_rms: Vec<f64>,
    pub test_rms: Option<Vec<f64>>,
    pub basis_iterations: usize,
    pub rollout: Option<RolloutReport>,
    pub momentum: Option<MomentumReport>,
    pub baseline: Option<BaselineReport>,
    pub config: ExperimentConfig,
}

/// Tables and trajectories written next to the report.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    /// `(file name, header, rows)`
    pub tables: Vec<(String, Vec<String>, Vec<Vec<f64>>)>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub artifacts: Artifacts,
    /// Wall-clock seconds; kept out of the report so that reports are
    /// reproducible byte for byte.
    pub runtime: f64,
}

fn rms_columns(data: &Dataset, predictions: &[Vec<f64>]) -> Vec<f64> {
    let m = data.n_outputs();
    (0..m)
        .map(|j| {
            let sum: f64 = predictions
                .iter()
                .enumerate()
                .map(|(i, p)| (data.values()[(i, j)] - p[j]).powi(2))
                .sum();
            (sum / data.len() as f64).sqrt()
        })
        .collect()
}

fn predict_rows(data: &Dataset, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    data.points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            f(p).map_err(|e| match e {
                Error::OutsideHull { point, .. } => Error::OutsideHull { index: Some(i), point },
                other => other,
            })
        })
        .collect()
}

fn prediction_table(data: &Dataset, columns: &[(&str, &[Vec<f64>])]) -> (Vec<String>, Vec<Vec<f64>>) {
    let d = data.dim().unwrap_or(0);
    let m = data.n_outputs();
    let mut header = formats::input_header(d);
    header.extend(formats::output_header("f", m));
    for (name, _) in columns {
        header.extend(formats::output_header(name, m));
    }
    let rows = (0..data.len())
        .map(|i| {
            let mut r = data.points()[i].coords().to_vec();
            r.extend(data.values().row(i).iter());
            for (_, preds) in columns {
                r.extend_from_slice(&preds[i]);
            }
            r
        })
        .collect();
    (header, rows)
}

fn inside_hull(nodes: &NodeSet, data: &Dataset, opts: &SolverOptions) -> Result<Dataset> {
    let mut keep = Vec::new();
    for (i, p) in data.points().iter().enumerate() {
        if in_hull(nodes, p, opts.hull_tol)?.status != Membership::Outside {
            keep.push(i);
        }
    }
    Dataset::new(
        keep.iter().map(|&i| data.points()[i].clone()).collect(),
        data.values().select_rows(&keep),
    )
}

fn approximant_field(model: &Approximant) -> impl Fn(&[f64]) -> Result<Vec<f64>> + '_ {
    move |x| approximator::predict(model, x).map(|v| vec![v])
}

fn fit_baseline(config: &ExperimentConfig, train: &Dataset) -> Result<DictionaryModel> {
    let b = &config.baseline;
    let dict = Dictionary::new(train.dim().unwrap_or(0), b.degree, b.trig_frequencies.clone())?;
    baselines::dict_fit(&dict, train, b.threshold, b.sweeps)
}

fn baseline_terms(model: &DictionaryModel) -> Vec<Vec<(String, f64)>> {
    let names = model.dictionary.names();
    model
        .coefficients
        .iter()
        .map(|c| {
            c.iter()
                .zip(&names)
                .filter(|(v, _)| **v != 0.0)
                .map(|(v, n)| (n.clone(), *v))
                .collect()
        })
        .collect()
}

fn run_static(config: &ExperimentConfig, problem: StaticProblem) -> Result<(Report, Artifacts)> {
    let StaticProblem { train, mut test, nodes } = problem;
    if config.nodes_from_data {
        // with data as nodes the test grid may reach past the data hull
        test = inside_hull(&nodes, &test, &config.solver)?;
    }
    let model = approximator::fit(&nodes, &train, config.beta, config.alpha, &config.solver)?;
    let field = approximant_field(&model);
    let train_pred = predict_rows(&train, &field)?;
    let test_pred = predict_rows(&test, &field)?;

    let mut baseline = None;
    let mut train_cols: Vec<(&str, &[Vec<f64>])> = vec![("fhat", &train_pred)];
    let mut test_cols: Vec<(&str, &[Vec<f64>])> = vec![("fhat", &test_pred)];
    let (dict_train, dict_test);
    if config.baseline.enabled {
        let dm = fit_baseline(config, &train)?;
        dict_train = predict_rows(&train, |x| baselines::dict_predict(&dm, x))?;
        dict_test = predict_rows(&test, |x| baselines::dict_predict(&dm, x))?;
        baseline = Some(BaselineReport {
            n_features: dm.dictionary.len(),
            terms: baseline_terms(&dm),
            training_rms: rms_columns(&train, &dict_train),
            test_rms: Some(rms_columns(&test, &dict_test)),
            rollout: None,
            momentum: None,
        });
        train_cols.push(("fdict", &dict_train));
        test_cols.push(("fdict", &dict_test));
    }

    let mut artifacts = Artifacts::default();
    let d = train.dim().unwrap_or(0);
    let mut header = formats::input_header(d);
    header.push("f".into());
    artifacts.tables.push(("train.csv".into(), header, prediction_table(&train, &[]).1));
    let (h, r) = prediction_table(&train, &train_cols);
    artifacts.tables.push(("train_predictions.csv".into(), h, r));
    let (h, r) = prediction_table(&test, &test_cols);
    artifacts.tables.push(("test_predictions.csv".into(), h, r));

    let report = Report {
        experiment: config.name.clone(),
        n_nodes: nodes.len(),
        n_train: train.len(),
        n_test: test.len(),
        training_rms: rms_columns(&train, &train_pred),
        test_rms: Some(rms_columns(&test, &test_pred)),
        basis_iterations: model.fit_report.basis_iterations,
        rollout: None,
        momentum: None,
        baseline,
        config: config.clone(),
    };
    Ok((report, artifacts))
}

/// Rolls `field` out on the same grid as `truth` and compares.
fn compare_rollout(field: &dyn VectorField, truth: &Trajectory, dt: f64, window_end: f64) -> (Trajectory, RolloutReport) {
    let horizon = *truth.times.last().unwrap_or(&0.0);
    let (traj, outcome) = match dynamics::integrate(field, &truth.states[0], (0.0, horizon), dt) {
        Ok(t) => (t, "completed"),
        Err(IntegrateError::DomainExit { partial, .. }) => (partial, "left-domain"),
        Err(IntegrateError::NumericalBlowup { partial, .. }) => (partial, "blowup"),
        Err(IntegrateError::Invalid(e)) => {
            log::warn!("rollout rejected: {e}");
            (truth.truncate(0), "rejected")
        }
    };
    let n = traj.len();
    let in_window = truth.times.iter().filter(|t| **t <= window_end * (1.0 + 1e-12)).count();
    let window_rms = (n >= in_window && in_window > 0)
        .then(|| dynamics::trajectory_rms(&traj.truncate(in_window), &truth.truncate(in_window)).ok())
        .flatten();
    let full_rms = (n == truth.len())
        .then(|| dynamics::trajectory_rms(&traj, truth).ok())
        .flatten();
    let report = RolloutReport {
        horizon,
        window_end,
        window_rms,
        full_rms,
        outcome: outcome.to_string(),
        last_time: traj.times.last().copied().unwrap_or(0.0),
    };
    (traj, report)
}

fn momentum(traj: &Trajectory, h0: f64) -> Option<MomentumReport> {
    let series = dynamics::angular_momentum_error(traj, h0).ok()?;
    let max_error = series.iter().copied().fold(0.0, f64::max);
    Some(MomentumReport { h0, max_error, series })
}

fn fit_surrogate(config: &ExperimentConfig, problem: &mut DynamicsProblem) -> Result<SurrogateModel> {
    match dynamics::fit_dynamics(&problem.nodes, &problem.train, config.beta, config.alpha, &config.solver) {
        Err(Error::OutsideHull { .. }) => {
            // widen the node box once and retry
            log::warn!("samples outside the node hull; repadding");
            problem.nodes = dynamics_nodes(
                problem.train.points(),
                &config.node_counts,
                2.0 * config.padding + 0.1,
                config.n_augment,
                config.seed,
            )?;
            dynamics::fit_dynamics(&problem.nodes, &problem.train, config.beta, config.alpha, &config.solver)
        }
        other => other,
    }
}

fn run_dynamics(config: &ExperimentConfig, mut problem: DynamicsProblem) -> Result<(Report, Artifacts)> {
    let is_orbit = config.name.starts_with("orbit");
    let model = fit_surrogate(config, &mut problem)?;
    let train = &problem.train;
    let train_pred = predict_rows(train, |x| dynamics::eval_field(&model, x))?;

    let (truth, dt) = if is_orbit {
        let p = config.orbit;
        let dt = p.periods * p.period() / config.n_data as f64 / config.substeps as f64;
        let field = FnField::new(4, move |x: &[f64]| p.field(x));
        (truth_run(&field, &p.perigee_state(), p.rollout_periods * p.period(), dt)?, dt)
    } else {
        (problem.truth.clone(), config.sample_interval / config.substeps as f64)
    };
    let horizon = *truth.times.last().unwrap_or(&0.0);
    let window_end = if is_orbit {
        config.window_fraction * config.orbit.rollout_periods * config.orbit.period()
    } else {
        config.window_fraction * horizon
    };
    let (model_traj, rollout) = compare_rollout(&model, &truth, dt, window_end);
    let h0 = config.orbit.h0();
    let model_momentum = if is_orbit { momentum(&model_traj, h0) } else { None };

    let mut artifacts = Artifacts::default();
    let mut baseline = None;
    let mut train_cols_owned = vec![("fhat".to_string(), train_pred.clone())];
    if config.baseline.enabled {
        let dm = fit_baseline(config, train)?;
        let dict_pred = predict_rows(train, |x| baselines::dict_predict(&dm, x))?;
        let (dict_traj, dict_rollout) = compare_rollout(&dm, &truth, dt, window_end);
        baseline = Some(BaselineReport {
            n_features: dm.dictionary.len(),
            terms: baseline_terms(&dm),
            training_rms: rms_columns(train, &dict_pred),
            test_rms: None,
            rollout: Some(dict_rollout),
            momentum: if is_orbit { momentum(&dict_traj, h0) } else { None },
        });
        train_cols_owned.push(("fdict".to_string(), dict_pred));
        artifacts
            .tables
            .push(("trajectory_baseline.csv".into(), trajectory_header(&dict_traj), trajectory_rows(&dict_traj)));
    }

    let d = train.dim().unwrap_or(0);
    let mut header = formats::input_header(d);
    header.extend((1..=d).map(|k| format!("dx{k}")));
    artifacts.tables.insert(0, ("train.csv".into(), header, prediction_table(train, &[]).1));
    let cols: Vec<(&str, &[Vec<f64>])> = train_cols_owned.iter().map(|(n, p)| (n.as_str(), p.as_slice())).collect();
    let (h, r) = prediction_table(train, &cols);
    artifacts.tables.insert(1, ("train_predictions.csv".into(), h, r));
    artifacts.tables.insert(2, ("trajectory_true.csv".into(), trajectory_header(&truth), trajectory_rows(&truth)));
    artifacts
        .tables
        .insert(3, ("trajectory_model.csv".into(), trajectory_header(&model_traj), trajectory_rows(&model_traj)));

    let report = Report {
        experiment: config.name.clone(),
        n_nodes: problem.nodes.len(),
        n_train: train.len(),
        n_test: 0,
        training_rms: rms_columns(train, &train_pred),
        test_rms: None,
        basis_iterations: model.fit_reports.iter().map(|r| r.basis_iterations).max().unwrap_or(0),
        rollout: Some(rollout),
        momentum: model_momentum,
        baseline,
        config: config.clone(),
    };
    Ok((report, artifacts))
}

fn trajectory_header(traj: &Trajectory) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(formats::input_header(traj.dim()));
    h
}

fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| std::iter::once(*t).chain(s.iter().copied()).collect())
        .collect()
}

/// Generates, fits and evaluates one experiment.
pub fn run_config(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let start = Instant::now();
    let (report, artifacts) = match config.name.as_str() {
        "sine" => run_static(config, gen_sine(config)?)?,
        "gauss2d" => run_static(config, gen_gauss2d(config)?)?,
        "rosenbrock" => run_static(config, gen_rosenbrock(config)?)?,
        "lorenz" => run_dynamics(config, gen_lorenz(config)?)?,
        "orbit" | "orbit-sparse" => run_dynamics(config, gen_orbit(config)?)?,
        other => return Err(Error::Config(format!("unknown experiment '{other}'"))),
    };
    Ok(RunOutput {
        report,
        artifacts,
        runtime: start.elapsed().as_secs_f64(),
    })
}

pub fn run_experiment(name: &str, overrides: &toml::Table) -> Result<RunOutput> {
    run_config(&ExperimentConfig::with_overrides(name, overrides)?)
}

/// Writes `report.json`, the CSV artifacts and `timing.json` into `dir`.
pub fn write_artifacts(dir: &Path, output: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    formats::write_json(&dir.join("report.json"), &output.report)?;
    for (name, header, rows) in &output.artifacts.tables {
        formats::write_table(&dir.join(name), header, rows)?;
    }
    formats::write_json(&dir.join("timing.json"), &serde_json::json!({ "runtime_seconds": output.runtime }))
}
