//! Monte-Carlo experiment runner.
//!
//! An [`ExperimentConfig`] names a benchmark system, its noise, the initial
//! conditions and a list of filters. Each trial draws one truth trajectory
//! and one measurement stream from its own [`SeededStream`]; every filter in
//! the run consumes that same stream. Results are aggregated by trial index,
//! so the emitted files depend only on the configuration and seed.
//!
//! # Configuration
//!
//! ```json
//! {
//!   "system": {"type": "scalar"},
//!   "horizon": 100, "trials": 100, "seed": 1,
//!   "process_noise": [{"weight": 1, "family": "gaussian", "mean": 0, "variance": 1}],
//!   "measurement_noise": "a",
//!   "filters": [
//!     {"name": "ukf", "kind": "ukf"},
//!     {"name": "gci", "kind": "sr-gci-iukf", "kernel": {"type": "gci", "delta": 1.8, "theta": 15}}
//!   ]
//! }
//! ```
//!
//! Noise fields take either a preset name (see [`crate::noise::presets::by_name`]),
//! one mixture shared by all channels, or a list with one mixture per channel.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{Filter, FilterKind, FilterSpec, IterationStart, JacobianMode, PosteriorForm, PosteriorPath};
use crate::linalg::{Mat, Vector};
use crate::model::StateSpaceModel;
use crate::noise::{presets, ChannelNoise, NoiseModel, SeededStream};
use crate::robust::{AdaptConfig, KernelKind};
use crate::systems::{
    load_network, NetworkFormat, PowerNetwork, PowerSystem, ScalarSystem, VehicleMeasurement, VehicleSystem,
};
use crate::unscented::UtParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    Scalar {
        #[serde(default)]
        time_varying: bool,
    },
    Vehicle {
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default)]
        measurement: VehicleMeasurement,
    },
    Power {
        /// JSON network file; the bundled IEEE 14-bus case when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        network: Option<PathBuf>,
    },
}

fn default_dt() -> f64 {
    0.1
}

/// A preset name or an explicit mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Preset(String),
    Mixture(ChannelNoise),
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<ChannelNoise> {
        match self {
            Self::Preset(name) => presets::by_name(name)
                .map(ChannelNoise::Shared)
                .ok_or_else(|| Error::Config(format!("unknown noise preset `{name}`"))),
            Self::Mixture(c) => Ok(c.clone()),
        }
    }
}

impl From<NoiseModel> for NoiseSpec {
    fn from(m: NoiseModel) -> Self {
        Self::Mixture(ChannelNoise::Shared(m))
    }
}

/// Initial conditions; omitted entries take the benchmark defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Vec<f64>>,
    /// Diagonal of the initial covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<f64>>,
}

/// Noise covariances handed to the filters when they should differ from
/// the variances of the simulated noise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterNoiseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<Vec<f64>>,
}

/// One filter of a run. Omitted numeric settings take the [`FilterSpec`] defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterEntry {
    pub name: String,
    pub kind: FilterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ut: Option<UtParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iter_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iter_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<JacobianMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapt: Option<AdaptConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_ceiling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<IterationStart>,
}

impl FilterEntry {
    pub fn new(name: impl Into<String>, kind: FilterKind) -> Self {
        Self {
            name: name.into(),
            kind,
            kernel: None,
            ut: None,
            iter_tol: None,
            iter_max: None,
            jacobian: None,
            adapt: None,
            gain_ceiling: None,
            posterior: None,
            start: None,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelKind) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn with_adapt(mut self, adapt: AdaptConfig) -> Self {
        self.adapt = Some(adapt);
        self
    }

    /// The filter specification, with `default_ut` for an omitted `ut`.
    pub fn spec(&self, default_ut: UtParams) -> FilterSpec {
        let mut s = FilterSpec::new(self.kind);
        s.kernel = self.kernel;
        s.ut = self.ut.unwrap_or(default_ut);
        if let Some(v) = self.iter_tol {
            s.iter_tol = v;
        }
        if let Some(v) = self.iter_max {
            s.iter_max = v;
        }
        if let Some(v) = self.jacobian {
            s.jacobian = v;
        }
        s.adapt = self.adapt.clone();
        if let Some(v) = self.gain_ceiling {
            s.gain_ceiling = v;
        }
        if let Some(v) = self.posterior {
            s.posterior = v;
        }
        if let Some(v) = self.start {
            s.start = v;
        }
        s
    }
}

fn default_divergence_threshold() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: SystemConfig,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub process_noise: NoiseSpec,
    pub measurement_noise: NoiseSpec,
    #[serde(default)]
    pub filter_noise: FilterNoiseConfig,
    #[serde(default)]
    pub ut: UtParams,
    #[serde(default)]
    pub initial: InitialConfig,
    pub filters: Vec<FilterEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Largest tolerated fraction of divergence-flagged steps per filter.
    #[serde(default = "default_divergence_threshold")]
    pub divergence_threshold: f64,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; a relative network path is taken relative to the config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("configuration error: "))))?;
        if let SystemConfig::Power { network: Some(p) } = &mut cfg.system {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    fn prepare(&self) -> Result<Prepared> {
        let cfg = |m: String| Error::Config(m);
        if self.trials == 0 {
            return Err(cfg("trials must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(cfg("horizon must be at least 1".into()));
        }
        if !(self.divergence_threshold >= 0.0) {
            return Err(cfg("divergence_threshold must be nonnegative".into()));
        }
        let mut names = HashSet::new();
        for f in &self.filters {
            if f.name.is_empty() || !f.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(cfg(format!("filter name `{}` must be nonempty [A-Za-z0-9._-]", f.name)));
            }
            if !names.insert(f.name.as_str()) {
                return Err(cfg(format!("duplicate filter name `{}`", f.name)));
            }
            f.spec(self.ut).validate().map_err(|e| cfg(format!("filter `{}`: {e}", f.name)))?;
        }
        let system = match &self.system {
            SystemConfig::Scalar { time_varying } => System::Scalar(ScalarSystem { time_varying: *time_varying }),
            SystemConfig::Vehicle { dt, measurement } => {
                if !(*dt > 0.0) {
                    return Err(cfg("vehicle dt must be positive".into()));
                }
                System::Vehicle(VehicleSystem { dt: *dt, measurement: *measurement })
            }
            SystemConfig::Power { network } => {
                let net = match network {
                    Some(p) => load_network(p, NetworkFormat::Json).map_err(|e| cfg(format!("network: {e}")))?,
                    None => PowerNetwork::ieee14(),
                };
                System::Power(Box::new(PowerSystem::new(net)))
            }
        };
        let model = system.model();
        let (n, m) = (model.state_dim(), model.meas_dim());
        let process = self.process_noise.resolve()?;
        let measurement = self.measurement_noise.resolve()?;
        process.check_channels(n).map_err(|e| cfg(format!("process_noise: {e}")))?;
        measurement.check_channels(m).map_err(|e| cfg(format!("measurement_noise: {e}")))?;

        let (truth0, est0, p0) = system.default_initial();
        let pick = |v: &Option<Vec<f64>>, def: Vector, what: &str| -> Result<Vector> {
            match v {
                None => Ok(def),
                Some(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(Vector::from_vec(v.clone())),
                Some(v) => Err(cfg(format!("initial.{what} must hold {n} finite values, got {}", v.len()))),
            }
        };
        let truth0 = pick(&self.initial.truth, truth0, "truth")?;
        let est0 = pick(&self.initial.estimate, est0, "estimate")?;
        let p0 = pick(&self.initial.covariance, p0, "covariance")?;
        if p0.iter().any(|v| !(*v > 0.0)) {
            return Err(cfg("initial.covariance entries must be positive".into()));
        }
        let variances = |over: &Option<Vec<f64>>, noise: &ChannelNoise, dim: usize, what: &str| -> Result<Vector> {
            let v = match over {
                Some(v) if v.len() != dim => {
                    return Err(cfg(format!("filter_noise.{what} must hold {dim} values, got {}", v.len())))
                }
                Some(v) => v.clone(),
                None => noise.variances(dim),
            };
            if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(cfg(format!("filter_noise.{what} variances must be positive")));
            }
            Ok(Vector::from_vec(v))
        };
        let w = Mat::from_diagonal(&variances(&self.filter_noise.process, &process, n, "process")?);
        let v = Mat::from_diagonal(&variances(&self.filter_noise.measurement, &measurement, m, "measurement")?);
        Ok(Prepared { system, process, measurement, truth0, est0, p0: Mat::from_diagonal(&p0), w, v })
    }
}

enum System {
    Scalar(ScalarSystem),
    Vehicle(VehicleSystem),
    Power(Box<PowerSystem>),
}

impl System {
    fn model(&self) -> &dyn StateSpaceModel {
        match self {
            Self::Scalar(s) => s,
            Self::Vehicle(v) => v,
            Self::Power(p) => p.as_ref(),
        }
    }

    fn default_initial(&self) -> (Vector, Vector, Vector) {
        match self {
            Self::Scalar(_) => (Vector::zeros(1), Vector::zeros(1), Vector::from_element(1, 1.0)),
            Self::Vehicle(_) => (
                Vector::from_vec(vec![0.0, 10.0, 5.0, 10.0]),
                Vector::from_element(4, 1.0),
                Vector::from_element(4, 1.0),
            ),
            Self::Power(p) => {
                let net = &p.network;
                (net.base_state(), net.flat_start(), Vector::from_element(net.state_dim(), POWER_P0))
            }
        }
    }

    /// Named index groups over which RMSE is reported.
    fn groups(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            Self::Scalar(_) => vec![("x", vec![0])],
            Self::Vehicle(_) => vec![("position", vec![0, 1]), ("velocity", vec![2, 3])],
            Self::Power(p) => {
                let na = p.network.angle_count();
                vec![("angle", (0..na).collect()), ("magnitude", (na..p.network.state_dim()).collect())]
            }
        }
    }
}

/// Default initial variance of every power-system state.
pub const POWER_P0: f64 = 0.01;

struct Prepared {
    system: System,
    process: ChannelNoise,
    measurement: ChannelNoise,
    truth0: Vector,
    est0: Vector,
    p0: Mat,
    w: Mat,
    v: Mat,
}

/// Truth states `x_1..x_T` and measurements `z_1..z_T` of one trial.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub truth: Vec<Vector>,
    pub measurements: Vec<Vector>,
}

fn simulate(p: &Prepared, horizon: usize, stream: SeededStream) -> Trajectory {
    let model = p.system.model();
    let (n, m) = (model.state_dim(), model.meas_dim());
    let mut rng = stream.rng();
    let mut x = p.truth0.clone();
    let mut truth = Vec::with_capacity(horizon);
    let mut measurements = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let w = Vector::from_vec(p.process.sample_vec(n, &mut rng));
        x = model.transition(&x, k) + w;
        let v = Vector::from_vec(p.measurement.sample_vec(m, &mut rng));
        measurements.push(model.measure(&x) + v);
        truth.push(x.clone());
    }
    Trajectory { truth, measurements }
}

/// Per-trial outcome of one filter.
#[derive(Debug, Clone, Default)]
struct FilterTrial {
    /// `[group][step]` squared error norms.
    sq_err: Vec<Vec<f64>>,
    iterations: usize,
    divergences: usize,
    step_errors: usize,
    nonfinite: usize,
    nonpositive_factor: usize,
    fallbacks: usize,
    cost_nonincreasing: usize,
    cost_checked: usize,
    max_gain: f64,
    seconds: f64,
    /// Sums of `δ` and `θ` over steps that report GCI parameters, and their count.
    param_sum: (f64, f64, usize),
}

fn run_filter(
    spec: &FilterSpec,
    p: &Prepared,
    groups: &[(&'static str, Vec<usize>)],
    traj: &Trajectory,
) -> Result<FilterTrial> {
    let model = p.system.model();
    let mut f = Filter::new(spec.clone(), model, &p.w, &p.v, &p.est0, &p.p0)?;
    let horizon = traj.truth.len();
    let mut out = FilterTrial { sq_err: vec![Vec::with_capacity(horizon); groups.len()], ..Default::default() };
    for (x, z) in traj.truth.iter().zip(&traj.measurements) {
        let t0 = Instant::now();
        let res = f.step(z);
        out.seconds += t0.elapsed().as_secs_f64();
        match res {
            Ok(d) => {
                out.iterations += d.iterations_used;
                out.max_gain = out.max_gain.max(d.gain_norm);
                if let Some(p) = d.params {
                    out.param_sum.0 += p.delta;
                    out.param_sum.1 += p.theta;
                    out.param_sum.2 += 1;
                }
                if d.divergence_flag {
                    out.divergences += 1;
                } else if !(d.cov_min_diag > 0.0) {
                    out.nonpositive_factor += 1;
                }
                if d.posterior != PosteriorPath::Primary {
                    out.fallbacks += 1;
                }
                if d.cost_trace.len() >= 2 {
                    out.cost_checked += 1;
                    let first = d.cost_trace[0];
                    let last = *d.cost_trace.last().unwrap();
                    if last <= first * (1.0 + 1e-12) + 1e-15 {
                        out.cost_nonincreasing += 1;
                    }
                }
            }
            Err(_) => {
                out.divergences += 1;
                out.step_errors += 1;
            }
        }
        let est = f.estimate();
        if est.iter().any(|v| !v.is_finite()) {
            out.nonfinite += 1;
        }
        for (g, (_, idx)) in groups.iter().enumerate() {
            out.sq_err[g].push(idx.iter().map(|&i| (x[i] - est[i]).powi(2)).sum());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSeries {
    pub group: String,
    pub rmse: Vec<f64>,
    pub armse: f64,
    /// Running mean of `rmse²` at the last step over its value at mid-horizon.
    pub running_mse_ratio: f64,
}

/// Aggregated results of one filter over all trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub name: String,
    pub kind: FilterKind,
    pub groups: Vec<GroupSeries>,
    pub mean_iterations: f64,
    pub divergence_count: usize,
    /// Divergence-flagged steps over all steps of all trials.
    pub divergence_rate: f64,
    pub step_errors: usize,
    pub nonfinite_estimates: usize,
    pub nonpositive_factor_steps: usize,
    pub fallback_steps: usize,
    /// Fraction of iterated steps whose final kernel cost did not exceed the initial one.
    pub cost_nonincreasing_fraction: Option<f64>,
    pub max_gain_norm: f64,
    /// Mean `(δ, θ)` in force over all steps, for GCI kernels.
    pub mean_gci_params: Option<(f64, f64)>,
    /// Median over trials of the mean wall-clock seconds per step; excluded from `summary.json`.
    #[serde(skip)]
    pub seconds_per_step: f64,
}

impl TrialReport {
    pub fn group(&self, name: &str) -> Option<&GroupSeries> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn armse(&self, group: &str) -> Option<f64> {
        self.group(group).map(|g| g.armse)
    }

    /// ARMSE of the whole state vector, combining the group series.
    pub fn total_armse(&self) -> f64 {
        let horizon = self.groups.first().map_or(0, |g| g.rmse.len());
        let total: Vec<f64> =
            (0..horizon).map(|t| self.groups.iter().map(|g| g.rmse[t] * g.rmse[t]).sum::<f64>().sqrt()).collect();
        armse(&total)
    }
}

/// Per-timestep RMSE over trials: `sqrt(mean_c ‖x_t^c − x̂_t^c‖²)`.
///
/// `estimates[c][t]` and `truths[c][t]` are the trajectories of trial `c`.
pub fn rmse(estimates: &[Vec<Vector>], truths: &[Vec<Vector>]) -> Result<Vec<f64>> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch(estimates.len(), truths.len()));
    }
    if estimates.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let horizon = truths[0].len();
    let mut sq: Vec<Vec<f64>> = Vec::with_capacity(estimates.len());
    for (e, t) in estimates.iter().zip(truths) {
        if e.len() != t.len() || t.len() != horizon {
            return Err(Error::LengthMismatch(e.len(), t.len()));
        }
        let mut row = Vec::with_capacity(horizon);
        for (a, b) in e.iter().zip(t) {
            if a.len() != b.len() {
                return Err(Error::LengthMismatch(a.len(), b.len()));
            }
            row.push((a - b).norm_squared());
        }
        sq.push(row);
    }
    Ok(rmse_from_squared(&sq))
}

fn rmse_from_squared(sq: &[Vec<f64>]) -> Vec<f64> {
    let m = sq.len() as f64;
    (0..sq[0].len()).map(|t| (sq.iter().map(|r| r[t]).sum::<f64>() / m).sqrt()).collect()
}

/// Mean of a series.
pub fn armse(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

/// `r(H)/r(⌈H/2⌉)` with `r(k)` the mean of the first `k` squared entries.
pub fn running_mse_ratio(series: &[f64]) -> f64 {
    let running = |k: usize| series[..k].iter().map(|v| v * v).sum::<f64>() / k as f64;
    let h = series.len();
    if h < 2 {
        return 1.0;
    }
    running(h) / running(h.div_ceil(2))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// The configuration actually run.
    pub config: ExperimentConfig,
    pub reports: Vec<TrialReport>,
}

impl RunResult {
    pub fn report(&self, name: &str) -> Option<&TrialReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    /// Names of filters whose divergence rate exceeds the configured threshold.
    pub fn divergence_breaches(&self) -> Vec<&str> {
        self.reports
            .iter()
            .filter(|r| r.divergence_rate > self.config.divergence_threshold)
            .map(|r| r.name.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; the global rayon pool when `None`.
    pub workers: Option<usize>,
}

pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    run_with(config, RunOptions::default())
}

pub fn run_with(config: &ExperimentConfig, opts: RunOptions) -> Result<RunResult> {
    let prepared = config.prepare()?;
    match opts.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            pool.install(|| execute(config, &prepared))
        }
        None => execute(config, &prepared),
    }
}

fn execute(config: &ExperimentConfig, p: &Prepared) -> Result<RunResult> {
    let groups = p.system.groups();
    let specs: Vec<FilterSpec> = config.filters.iter().map(|f| f.spec(config.ut)).collect();
    let per_trial: Vec<Vec<FilterTrial>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let traj = simulate(p, config.horizon, SeededStream::new(config.seed, trial as u64));
            specs.iter().map(|s| run_filter(s, p, &groups, &traj)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let steps = (config.trials * config.horizon) as f64;
    let mut reports = Vec::with_capacity(specs.len());
    for (fi, entry) in config.filters.iter().enumerate() {
        let trials: Vec<&FilterTrial> = per_trial.iter().map(|t| &t[fi]).collect();
        let group_series = groups
            .iter()
            .enumerate()
            .map(|(g, (name, _))| {
                let sq: Vec<Vec<f64>> = trials.iter().map(|t| t.sq_err[g].clone()).collect();
                let rmse = rmse_from_squared(&sq);
                GroupSeries {
                    group: name.to_string(),
                    armse: armse(&rmse),
                    running_mse_ratio: running_mse_ratio(&rmse),
                    rmse,
                }
            })
            .collect();
        let sum = |f: fn(&FilterTrial) -> usize| trials.iter().map(|t| f(t)).sum::<usize>();
        let checked = sum(|t| t.cost_checked);
        let divergence_count = sum(|t| t.divergences);
        reports.push(TrialReport {
            name: entry.name.clone(),
            kind: entry.kind,
            groups: group_series,
            mean_iterations: sum(|t| t.iterations) as f64 / steps,
            divergence_count,
            divergence_rate: divergence_count as f64 / steps,
            step_errors: sum(|t| t.step_errors),
            nonfinite_estimates: sum(|t| t.nonfinite),
            nonpositive_factor_steps: sum(|t| t.nonpositive_factor),
            fallback_steps: sum(|t| t.fallbacks),
            cost_nonincreasing_fraction: (checked > 0)
                .then(|| sum(|t| t.cost_nonincreasing) as f64 / checked as f64),
            max_gain_norm: trials.iter().map(|t| t.max_gain).fold(0.0, f64::max),
            mean_gci_params: {
                let (d, t, c) = trials.iter().fold((0.0, 0.0, 0), |a, t| {
                    (a.0 + t.param_sum.0, a.1 + t.param_sum.1, a.2 + t.param_sum.2)
                });
                (c > 0).then(|| (d / c as f64, t / c as f64))
            },
            seconds_per_step: median(trials.iter().map(|t| t.seconds / config.horizon as f64).collect()),
        });
    }
    Ok(RunResult { config: config.clone(), reports })
}

/// Median seconds per step of each filter, keyed by filter name.
pub fn time_filters(config: &ExperimentConfig) -> Result<BTreeMap<String, f64>> {
    Ok(run(config)?.reports.into_iter().map(|r| (r.name, r.seconds_per_step)).collect())
}

#[derive(Serialize)]
struct Summary<'a> {
    name: Option<&'a str>,
    seed: u64,
    trials: usize,
    horizon: usize,
    filters: BTreeMap<&'a str, FilterSummary<'a>>,
}

#[derive(Serialize)]
struct FilterSummary<'a> {
    kind: FilterKind,
    armse: BTreeMap<&'a str, f64>,
    running_mse_ratio: BTreeMap<&'a str, f64>,
    mean_iterations: f64,
    divergence_count: usize,
    divergence_rate: f64,
    step_errors: usize,
    nonfinite_estimates: usize,
    nonpositive_factor_steps: usize,
    fallback_steps: usize,
    cost_nonincreasing_fraction: Option<f64>,
    max_gain_norm: f64,
    mean_gci_params: Option<(f64, f64)>,
}

/// Files written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub summary: PathBuf,
    pub config_echo: PathBuf,
    pub csv: Vec<PathBuf>,
    pub timing: PathBuf,
}

/// Formats a float with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `summary.json`, `config_echo.json`, `rmse_<filter>_<group>.csv`
/// and `timing.json` into `dir`.
///
/// Everything except `timing.json` is a pure function of the configuration.
pub fn emit_report(result: &RunResult, dir: impl AsRef<Path>) -> Result<EmittedFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let cfg = &result.config;
    let filters = result
        .reports
        .iter()
        .map(|r| {
            (
                r.name.as_str(),
                FilterSummary {
                    kind: r.kind,
                    armse: r.groups.iter().map(|g| (g.group.as_str(), g.armse)).collect(),
                    running_mse_ratio: r.groups.iter().map(|g| (g.group.as_str(), g.running_mse_ratio)).collect(),
                    mean_iterations: r.mean_iterations,
                    divergence_count: r.divergence_count,
                    divergence_rate: r.divergence_rate,
                    step_errors: r.step_errors,
                    nonfinite_estimates: r.nonfinite_estimates,
                    nonpositive_factor_steps: r.nonpositive_factor_steps,
                    fallback_steps: r.fallback_steps,
                    cost_nonincreasing_fraction: r.cost_nonincreasing_fraction,
                    max_gain_norm: r.max_gain_norm,
                    mean_gci_params: r.mean_gci_params,
                },
            )
        })
        .collect();
    let summary = Summary { name: cfg.name.as_deref(), seed: cfg.seed, trials: cfg.trials, horizon: cfg.horizon, filters };
    let summary_path = write_json(dir, "summary.json", &summary)?;
    let echo_path = write_json(dir, "config_echo.json", cfg)?;
    let timing: BTreeMap<&str, f64> = result.reports.iter().map(|r| (r.name.as_str(), r.seconds_per_step)).collect();
    let timing_path = write_json(dir, "timing.json", &timing)?;

    let mut csv = Vec::new();
    for r in &result.reports {
        for g in &r.groups {
            let mut text = String::from("step,rmse\n");
            for (t, v) in g.rmse.iter().enumerate() {
                let _ = writeln!(text, "{},{}", t + 1, format_float(*v));
            }
            let path = dir.join(format!("rmse_{}_{}.csv", r.name, g.group));
            std::fs::write(&path, text)?;
            csv.push(path);
        }
    }
    Ok(EmittedFiles { summary: summary_path, config_echo: echo_path, csv, timing: timing_path })
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_config() -> ExperimentConfig {
        ExperimentConfig::from_json_str(
            r#"{
                "system": {"type": "scalar"},
                "horizon": 10, "trials": 3, "seed": 7,
                "process_noise": [{"weight": 1, "family": "gaussian", "mean": 0, "variance": 1}],
                "measurement_noise": "a",
                "filters": [
                    {"name": "ukf", "kind": "ukf"},
                    {"name": "gci", "kind": "sr-gci-iukf", "kernel": {"type": "gci", "delta": 1.8, "theta": 15}}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn rmse_examples() {
        let v = |x: f64| Vector::from_element(1, x);
        let zero = rmse(&[vec![v(1.0), v(2.0)]], &[vec![v(1.0), v(2.0)]]).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        let one = rmse(&[vec![v(3.0), v(0.0)]], &[vec![v(0.0), v(0.0)]]).unwrap();
        assert_eq!(one, vec![3.0, 0.0]);
        let two = rmse(&[vec![v(3.0)], vec![v(-4.0)]], &[vec![v(0.0)], vec![v(0.0)]]).unwrap();
        assert_eq!(two, vec![12.5f64.sqrt()]);
        assert!(matches!(rmse(&[vec![v(0.0)]], &[]), Err(Error::LengthMismatch(1, 0))));
        assert!(matches!(rmse(&[vec![v(0.0)]], &[vec![]]), Err(Error::LengthMismatch(1, 0))));
    }

    #[test]
    fn config_validation() {
        let mut c = scalar_config();
        assert!(c.validate().is_ok());
        c.filters.push(FilterEntry::new("ukf", FilterKind::Ukf));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = scalar_config();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = scalar_config();
        c.measurement_noise = NoiseSpec::Preset("nope".into());
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"system": {"type": "scalar"}}"#).is_err());
    }

    #[test]
    fn single_step_single_trial() {
        let mut c = scalar_config();
        c.trials = 1;
        c.horizon = 1;
        let r = run(&c).unwrap();
        for rep in &r.reports {
            assert_eq!(rep.groups[0].rmse.len(), 1);
            assert_eq!(rep.groups[0].armse, rep.groups[0].rmse[0]);
        }
    }

    #[test]
    fn reports_are_deterministic_and_consistent() {
        let c = scalar_config();
        let a = run_with(&c, RunOptions { workers: Some(1) }).unwrap();
        let b = run_with(&c, RunOptions { workers: Some(4) }).unwrap();
        for (x, y) in a.reports.iter().zip(&b.reports) {
            assert_eq!(x.groups, y.groups);
            for g in &x.groups {
                assert!((g.armse - armse(&g.rmse)).abs() <= 1e-15 * g.armse.abs());
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&a, dir.path()).unwrap();
        assert_eq!(files.csv.len(), 2);
        let text = std::fs::read_to_string(&files.csv[0]).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("step,rmse\n1,"));
        let echo = ExperimentConfig::load(&files.config_echo).unwrap();
        assert_eq!(echo, c);
    }

    #[test]
    fn empty_filter_list_writes_no_csv() {
        let mut c = scalar_config();
        c.filters.clear();
        let r = run(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&r, dir.path()).unwrap();
        assert!(files.csv.is_empty());
        let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(files.summary).unwrap()).unwrap();
        assert_eq!(s["filters"], serde_json::json!({}));
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 12.5f64.sqrt(), 1e-300, 0.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }
}
