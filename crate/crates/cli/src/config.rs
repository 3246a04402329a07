//! Experiment configuration files.
//!
//! A config is TOML with an optional top-level `experiment` key, a `[run]`
//! section for the optimiser settings and one section named after the
//! experiment. Omitted keys take per-experiment defaults; unknown keys and
//! sections belonging to other experiments are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use performa::optim::Algorithm;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    Log2d,
    Quad7d,
    Pricing,
    Housing,
    EstimatorVariance,
    ConvexityProfile,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Log2d,
        Experiment::Quad7d,
        Experiment::Pricing,
        Experiment::Housing,
        Experiment::EstimatorVariance,
        Experiment::ConvexityProfile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Log2d => "log2d",
            Experiment::Quad7d => "quad7d",
            Experiment::Pricing => "pricing",
            Experiment::Housing => "housing",
            Experiment::EstimatorVariance => "estimator-variance",
            Experiment::ConvexityProfile => "convexity-profile",
        }
    }

    /// Experiments that run the optimisers and produce the run-level schema.
    pub fn is_optimisation(self) -> bool {
        !matches!(self, Experiment::EstimatorVariance | Experiment::ConvexityProfile)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}` (expected one of {})", known.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub algorithms: Vec<Algorithm>,
    pub num_iter: usize,
    pub n: usize,
    pub step_size: f64,
    pub reg_lambda: f64,
    pub pi_lambda: f64,
    pub n_runs: usize,
    pub master_seed: u64,
    /// Starting point; `None` means the origin.
    pub theta0: Option<Vec<f64>>,
    pub divergence_threshold: f64,
    pub estimate_pi: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShiftSpec {
    Diagonal(Vec<f64>),
    RowMajor(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Log2dSettings {
    pub gamma: Vec<f64>,
    pub sigma: f64,
    pub class0_mean: Vec<f64>,
    pub class1_mean: Vec<f64>,
    /// Shape of the class-0 shift; the effective operator is `γ·diag(shift_diag)`.
    pub shift_diag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quad7dSettings {
    pub sigma: Vec<f64>,
    pub class0_mean: Vec<f64>,
    pub class1_mean: Vec<f64>,
    pub shift: ShiftSpec,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingSettings {
    pub mu: Vec<f64>,
    pub pi_diag: Vec<f64>,
    pub sigma: f64,
    pub allow_nonconvex: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HousingSettings {
    /// Relative paths are resolved against the data directory.
    pub csv_path: PathBuf,
    pub shift_lambda: Vec<f64>,
    pub shifted_coords: Vec<usize>,
    pub standardize: bool,
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorVarianceSettings {
    pub dims: Vec<usize>,
    pub sigma: f64,
    pub n: usize,
    pub replications: usize,
    /// `Π = pi_scale·I`.
    pub pi_scale: f64,
    /// `‖a‖` with `a = Πθ − θ′`, spread evenly over the coordinates.
    pub a_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSettings {
    pub lambdas: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub class0_mean: Vec<f64>,
    pub class1_mean: Vec<f64>,
    pub sigma: f64,
    pub rho: f64,
    pub direction: Vec<f64>,
}

impl ProfileSettings {
    pub fn ts(&self) -> Vec<f64> {
        if self.t_points == 1 {
            return vec![self.t_min];
        }
        let step = (self.t_max - self.t_min) / (self.t_points - 1) as f64;
        (0..self.t_points).map(|i| self.t_min + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskSettings {
    Log2d(Log2dSettings),
    Quad7d(Quad7dSettings),
    Pricing(PricingSettings),
    Housing(HousingSettings),
    EstimatorVariance(EstimatorVarianceSettings),
    ConvexityProfile(ProfileSettings),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub run: RunSettings,
    pub task: TaskSettings,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        parse_config_str("", experiment).expect("defaults are valid")
    }

    /// `(sweep_key, values)` for the optimisation experiments.
    pub fn sweep(&self) -> Option<(&'static str, Vec<f64>)> {
        match &self.task {
            TaskSettings::Log2d(s) => Some(("gamma", s.gamma.clone())),
            TaskSettings::Quad7d(s) => Some(("sigma", s.sigma.clone())),
            TaskSettings::Pricing(s) => Some(("sigma", vec![s.sigma])),
            TaskSettings::Housing(s) => Some(("shift_lambda", s.shift_lambda.clone())),
            _ => None,
        }
    }
}

fn default_run(experiment: Experiment) -> RunSettings {
    use Algorithm::*;
    let base = RunSettings {
        algorithms: vec![Rrm, Rgd, Rrgd, SfPerfGd, RpPerfGd],
        num_iter: 100,
        n: 1000,
        step_size: 0.1,
        reg_lambda: 3e-2,
        pi_lambda: 3e-2,
        n_runs: 100,
        master_seed: 0,
        theta0: None,
        divergence_threshold: 1e6,
        estimate_pi: false,
    };
    match experiment {
        Experiment::Quad7d => RunSettings {
            algorithms: vec![Rrm, Rgd, Rrgd, SfPerfGd, RpPerfGd, RpPerfGdLearn],
            num_iter: 25,
            reg_lambda: 0.1,
            pi_lambda: 0.1,
            estimate_pi: true,
            ..base
        },
        Experiment::Housing => RunSettings {
            algorithms: vec![Rrm, Rgd, Rrgd, RpPerfGd, RpPerfGdLearn],
            num_iter: 15,
            n: 18_000,
            step_size: 0.2,
            reg_lambda: 5e-3,
            pi_lambda: 5e-3,
            n_runs: 20,
            ..base
        },
        Experiment::Pricing => RunSettings {
            algorithms: vec![Rrm, Rgd, RpPerfGd],
            num_iter: 500,
            reg_lambda: 0.0,
            pi_lambda: 0.1,
            n_runs: 10,
            ..base
        },
        _ => base,
    }
}

// ---------------------------------------------------------------------------
// Raw file layout

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<String>,
    run: Option<RawRun>,
    log2d: Option<RawLog2d>,
    quad7d: Option<RawQuad7d>,
    pricing: Option<RawPricing>,
    housing: Option<RawHousing>,
    #[serde(rename = "estimator-variance")]
    estimator_variance: Option<RawEstimatorVariance>,
    #[serde(rename = "convexity-profile")]
    convexity_profile: Option<RawProfile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    algorithms: Option<Vec<String>>,
    num_iter: Option<usize>,
    n: Option<usize>,
    step_size: Option<f64>,
    reg_lambda: Option<f64>,
    pi_lambda: Option<f64>,
    n_runs: Option<usize>,
    master_seed: Option<u64>,
    theta0: Option<Vec<f64>>,
    divergence_threshold: Option<f64>,
    estimate_pi: Option<bool>,
}

impl RawRun {
    /// Keys other than `master_seed` that were set.
    fn optimiser_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut note = |set: bool, k| {
            if set {
                keys.push(k)
            }
        };
        note(self.algorithms.is_some(), "algorithms");
        note(self.num_iter.is_some(), "num_iter");
        note(self.n.is_some(), "n");
        note(self.step_size.is_some(), "step_size");
        note(self.reg_lambda.is_some(), "reg_lambda");
        note(self.pi_lambda.is_some(), "pi_lambda");
        note(self.n_runs.is_some(), "n_runs");
        note(self.theta0.is_some(), "theta0");
        note(self.divergence_threshold.is_some(), "divergence_threshold");
        note(self.estimate_pi.is_some(), "estimate_pi");
        keys
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLog2d {
    gamma: Option<Vec<f64>>,
    sigma: Option<f64>,
    class0_mean: Option<Vec<f64>>,
    class1_mean: Option<Vec<f64>>,
    shift_diag: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuad7d {
    sigma: Option<Vec<f64>>,
    class0_mean: Option<Vec<f64>>,
    class1_mean: Option<Vec<f64>>,
    pi_diag: Option<Vec<f64>>,
    pi_matrix: Option<Vec<f64>>,
    rho: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPricing {
    mu: Option<Vec<f64>>,
    pi_diag: Option<Vec<f64>>,
    sigma: Option<f64>,
    allow_nonconvex: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHousing {
    csv_path: Option<PathBuf>,
    shift_lambda: Option<Vec<f64>>,
    shifted_coords: Option<Vec<usize>>,
    standardize: Option<bool>,
    intercept: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimatorVariance {
    dims: Option<Vec<usize>>,
    sigma: Option<f64>,
    n: Option<usize>,
    replications: Option<usize>,
    pi_scale: Option<f64>,
    a_norm: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    lambdas: Option<Vec<f64>>,
    t_min: Option<f64>,
    t_max: Option<f64>,
    t_points: Option<usize>,
    class0_mean: Option<Vec<f64>>,
    class1_mean: Option<Vec<f64>>,
    sigma: Option<f64>,
    rho: Option<f64>,
    direction: Option<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Validation

/// Locates keys in the source so semantic errors carry line numbers.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    /// 1-based line of `key` inside `[section]` (`None` for top level).
    fn line_of(&self, section: Option<&str>, key: &str) -> Option<usize> {
        let mut current: Option<String> = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('[') {
                if let Some(end) = rest.find(']') {
                    current = Some(rest[..end].trim().trim_matches('"').to_string());
                    if key.is_empty() && current.as_deref() == section {
                        return Some(i + 1);
                    }
                    continue;
                }
            }
            if key.is_empty() || current.as_deref() != section {
                continue;
            }
            if let Some((lhs, _)) = line.split_once('=') {
                if lhs.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
        None
    }

    fn error(&self, section: Option<&str>, key: &str, msg: impl fmt::Display) -> CliError {
        let what = match (section, key) {
            (Some(s), "") => format!("[{s}]"),
            (Some(s), k) => format!("{s}.{k}"),
            (None, k) => k.to_string(),
        };
        match self.line_of(section, key) {
            Some(line) => CliError::Config(format!("line {line}: {what}: {msg}")),
            None => CliError::Config(format!("{what}: {msg}")),
        }
    }
}

struct Checker<'a> {
    src: &'a Source<'a>,
    section: &'static str,
}

impl Checker<'_> {
    fn err(&self, key: &str, msg: impl fmt::Display) -> CliError {
        self.src.error(Some(self.section), key, msg)
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64, CliError> {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(key, format!("must be a positive number, got {v}")))
        }
    }

    fn non_negative(&self, key: &str, v: f64) -> Result<f64, CliError> {
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(self.err(key, format!("must be >= 0, got {v}")))
        }
    }

    fn finite_vec(&self, key: &str, v: Vec<f64>) -> Result<Vec<f64>, CliError> {
        if v.is_empty() {
            return Err(self.err(key, "must not be empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.err(key, "entries must be finite"));
        }
        Ok(v)
    }

    fn len(&self, key: &str, v: &[f64], expected: usize) -> Result<(), CliError> {
        if v.len() == expected {
            Ok(())
        } else {
            Err(self.err(key, format!("expected {expected} entries, found {}", v.len())))
        }
    }

    fn at_least_one(&self, key: &str, v: usize) -> Result<usize, CliError> {
        if v >= 1 {
            Ok(v)
        } else {
            Err(self.err(key, "must be >= 1"))
        }
    }

    fn probability(&self, key: &str, v: f64) -> Result<f64, CliError> {
        if v > 0.0 && v < 1.0 {
            Ok(v)
        } else {
            Err(self.err(key, format!("must lie strictly between 0 and 1, got {v}")))
        }
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> CliError {
    let msg = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            CliError::Config(format!("line {line}: {msg}"))
        }
        None => CliError::Config(msg),
    }
}

pub fn parse_config(path: &Path, experiment: Experiment) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text, experiment)
        .map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
}

/// Parses `text` for `experiment`; the top-level `experiment` key, when
/// present, must agree.
pub fn parse_config_str(text: &str, experiment: Experiment) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let src = Source { text };

    if let Some(name) = &raw.experiment {
        let named = Experiment::from_str(name).map_err(|m| src.error(None, "experiment", m))?;
        if named != experiment {
            return Err(src.error(
                None,
                "experiment",
                format!("config is for `{named}` but `{experiment}` was requested"),
            ));
        }
    }

    let present = [
        (Experiment::Log2d, raw.log2d.is_some()),
        (Experiment::Quad7d, raw.quad7d.is_some()),
        (Experiment::Pricing, raw.pricing.is_some()),
        (Experiment::Housing, raw.housing.is_some()),
        (Experiment::EstimatorVariance, raw.estimator_variance.is_some()),
        (Experiment::ConvexityProfile, raw.convexity_profile.is_some()),
    ];
    for (other, set) in present {
        if set && other != experiment {
            return Err(src.error(
                Some(other.name()),
                "",
                format!("section does not apply to experiment `{experiment}`"),
            ));
        }
    }

    let raw_run = raw.run.unwrap_or_default();
    if !experiment.is_optimisation() {
        if let Some(key) = raw_run.optimiser_keys().first() {
            return Err(src.error(
                Some("run"),
                key,
                format!("not used by `{experiment}` (only master_seed applies)"),
            ));
        }
    }
    let run = resolve_run(&src, raw_run, experiment)?;

    let task = match experiment {
        Experiment::Log2d => TaskSettings::Log2d(resolve_log2d(&src, raw.log2d.unwrap_or_default())?),
        Experiment::Quad7d => TaskSettings::Quad7d(resolve_quad7d(&src, raw.quad7d.unwrap_or_default())?),
        Experiment::Pricing => TaskSettings::Pricing(resolve_pricing(&src, raw.pricing.unwrap_or_default())?),
        Experiment::Housing => TaskSettings::Housing(resolve_housing(&src, raw.housing.unwrap_or_default())?),
        Experiment::EstimatorVariance => TaskSettings::EstimatorVariance(resolve_estimator_variance(
            &src,
            raw.estimator_variance.unwrap_or_default(),
        )?),
        Experiment::ConvexityProfile => {
            TaskSettings::ConvexityProfile(resolve_profile(&src, raw.convexity_profile.unwrap_or_default())?)
        }
    };

    let config = ExperimentConfig { experiment, run, task };
    check_compatibility(&src, &config)?;
    Ok(config)
}

fn resolve_run(src: &Source<'_>, raw: RawRun, experiment: Experiment) -> Result<RunSettings, CliError> {
    let c = Checker { src, section: "run" };
    let d = default_run(experiment);
    let algorithms = match raw.algorithms {
        None => d.algorithms,
        Some(names) => {
            if names.is_empty() {
                return Err(c.err("algorithms", "must list at least one algorithm"));
            }
            let mut out = Vec::with_capacity(names.len());
            for name in &names {
                let alg = Algorithm::from_str(name).map_err(|e| c.err("algorithms", e))?;
                if out.contains(&alg) {
                    return Err(c.err("algorithms", format!("`{name}` listed twice")));
                }
                out.push(alg);
            }
            out
        }
    };
    let theta0 = raw.theta0.map(|v| c.finite_vec("theta0", v)).transpose()?;
    Ok(RunSettings {
        algorithms,
        num_iter: c.at_least_one("num_iter", raw.num_iter.unwrap_or(d.num_iter))?,
        n: c.at_least_one("n", raw.n.unwrap_or(d.n))?,
        step_size: c.non_negative("step_size", raw.step_size.unwrap_or(d.step_size))?,
        reg_lambda: c.non_negative("reg_lambda", raw.reg_lambda.unwrap_or(d.reg_lambda))?,
        pi_lambda: c.non_negative("pi_lambda", raw.pi_lambda.unwrap_or(d.pi_lambda))?,
        n_runs: c.at_least_one("n_runs", raw.n_runs.unwrap_or(d.n_runs))?,
        master_seed: raw.master_seed.unwrap_or(d.master_seed),
        theta0,
        divergence_threshold: c.positive(
            "divergence_threshold",
            raw.divergence_threshold.unwrap_or(d.divergence_threshold),
        )?,
        estimate_pi: raw.estimate_pi.unwrap_or(d.estimate_pi),
    })
}

fn resolve_log2d(src: &Source<'_>, raw: RawLog2d) -> Result<Log2dSettings, CliError> {
    let c = Checker { src, section: "log2d" };
    let gamma = c.finite_vec("gamma", raw.gamma.unwrap_or_else(|| vec![0.0, 0.5, 1.0]))?;
    for &g in &gamma {
        c.non_negative("gamma", g)?;
    }
    let class0_mean = c.finite_vec("class0_mean", raw.class0_mean.unwrap_or_else(|| vec![-1.0, -1.0]))?;
    let class1_mean = c.finite_vec("class1_mean", raw.class1_mean.unwrap_or_else(|| vec![0.0, 0.0]))?;
    let shift_diag = c.finite_vec(
        "shift_diag",
        raw.shift_diag.unwrap_or_else(|| performa::tasks::GAUSS2D_SHIFT.to_vec()),
    )?;
    c.len("class0_mean", &class0_mean, 2)?;
    c.len("class1_mean", &class1_mean, 2)?;
    c.len("shift_diag", &shift_diag, 2)?;
    Ok(Log2dSettings {
        gamma,
        sigma: c.positive("sigma", raw.sigma.unwrap_or(0.5))?,
        class0_mean,
        class1_mean,
        shift_diag,
    })
}

fn resolve_quad7d(src: &Source<'_>, raw: RawQuad7d) -> Result<Quad7dSettings, CliError> {
    use performa::tasks::{GAUSS7D_CLASS0_MEAN, GAUSS7D_SHIFT};
    let c = Checker { src, section: "quad7d" };
    let sigma = c.finite_vec("sigma", raw.sigma.unwrap_or_else(|| vec![0.1, 0.5, 1.0]))?;
    for &s in &sigma {
        c.positive("sigma", s)?;
    }
    let class0_mean = c.finite_vec("class0_mean", raw.class0_mean.unwrap_or_else(|| GAUSS7D_CLASS0_MEAN.to_vec()))?;
    let d = class0_mean.len();
    let class1_mean = c.finite_vec("class1_mean", raw.class1_mean.unwrap_or_else(|| vec![0.0; d]))?;
    c.len("class1_mean", &class1_mean, d)?;
    let shift = match (raw.pi_diag, raw.pi_matrix) {
        (Some(_), Some(_)) => return Err(c.err("pi_matrix", "give either pi_diag or pi_matrix, not both")),
        (Some(diag), None) => {
            let diag = c.finite_vec("pi_diag", diag)?;
            c.len("pi_diag", &diag, d)?;
            ShiftSpec::Diagonal(diag)
        }
        (None, Some(m)) => {
            let m = c.finite_vec("pi_matrix", m)?;
            c.len("pi_matrix", &m, d * d)?;
            ShiftSpec::RowMajor(m)
        }
        (None, None) => {
            if d != GAUSS7D_SHIFT.len() {
                return Err(c.err("class0_mean", "a non-default dimension needs pi_diag or pi_matrix"));
            }
            ShiftSpec::Diagonal(GAUSS7D_SHIFT.to_vec())
        }
    };
    Ok(Quad7dSettings {
        sigma,
        class0_mean,
        class1_mean,
        shift,
        rho: c.probability("rho", raw.rho.unwrap_or(0.5))?,
    })
}

fn resolve_pricing(src: &Source<'_>, raw: RawPricing) -> Result<PricingSettings, CliError> {
    let c = Checker { src, section: "pricing" };
    let mu = c.finite_vec("mu", raw.mu.unwrap_or_else(|| vec![1.0, 2.0]))?;
    let pi_diag = c.finite_vec("pi_diag", raw.pi_diag.unwrap_or_else(|| vec![0.5, 1.0]))?;
    c.len("pi_diag", &pi_diag, mu.len())?;
    let allow_nonconvex = raw.allow_nonconvex.unwrap_or(false);
    if !allow_nonconvex && pi_diag.iter().any(|&p| p <= 0.0) {
        return Err(c.err("pi_diag", "entries must be positive unless allow_nonconvex = true"));
    }
    Ok(PricingSettings {
        mu,
        pi_diag,
        sigma: c.positive("sigma", raw.sigma.unwrap_or(1.0))?,
        allow_nonconvex,
    })
}

fn resolve_housing(src: &Source<'_>, raw: RawHousing) -> Result<HousingSettings, CliError> {
    let c = Checker { src, section: "housing" };
    let shift_lambda = c.finite_vec("shift_lambda", raw.shift_lambda.unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0]))?;
    let shifted_coords = raw
        .shifted_coords
        .unwrap_or_else(|| performa::housing::DEFAULT_SHIFTED.to_vec());
    let csv_path = raw.csv_path.unwrap_or_else(|| PathBuf::from(DEFAULT_HOUSING_FILE));
    if csv_path.as_os_str().is_empty() {
        return Err(c.err("csv_path", "must not be empty"));
    }
    Ok(HousingSettings {
        csv_path,
        shift_lambda,
        shifted_coords,
        standardize: raw.standardize.unwrap_or(true),
        intercept: raw.intercept.unwrap_or(false),
    })
}

fn resolve_estimator_variance(
    src: &Source<'_>,
    raw: RawEstimatorVariance,
) -> Result<EstimatorVarianceSettings, CliError> {
    let c = Checker { src, section: "estimator-variance" };
    let dims = raw.dims.unwrap_or_else(|| vec![2, 8, 32]);
    if dims.is_empty() || dims.contains(&0) {
        return Err(c.err("dims", "must be a non-empty list of positive dimensions"));
    }
    let replications = raw.replications.unwrap_or(100_000);
    if replications < 2 {
        return Err(c.err("replications", "must be >= 2"));
    }
    Ok(EstimatorVarianceSettings {
        dims,
        sigma: c.positive("sigma", raw.sigma.unwrap_or(1.0))?,
        n: c.at_least_one("n", raw.n.unwrap_or(1))?,
        replications,
        pi_scale: c.finite_vec("pi_scale", vec![raw.pi_scale.unwrap_or(1.0)])?[0],
        a_norm: c.non_negative("a_norm", raw.a_norm.unwrap_or(0.0))?,
    })
}

fn resolve_profile(src: &Source<'_>, raw: RawProfile) -> Result<ProfileSettings, CliError> {
    let c = Checker { src, section: "convexity-profile" };
    let lambdas = c.finite_vec("lambdas", raw.lambdas.unwrap_or_else(|| vec![-1.0, -0.5, 0.0, 0.5, 1.0]))?;
    let t_min = raw.t_min.unwrap_or(-2.0);
    let t_max = raw.t_max.unwrap_or(2.0);
    if !(t_min.is_finite() && t_max.is_finite() && t_min <= t_max) {
        return Err(c.err("t_max", format!("need finite t_min <= t_max, got [{t_min}, {t_max}]")));
    }
    let class0_mean = c.finite_vec("class0_mean", raw.class0_mean.unwrap_or_else(|| vec![0.0, 0.0]))?;
    let d = class0_mean.len();
    let class1_mean = c.finite_vec("class1_mean", raw.class1_mean.unwrap_or_else(|| vec![-1.0, 1.0]))?;
    c.len("class1_mean", &class1_mean, d)?;
    let direction = c.finite_vec("direction", raw.direction.unwrap_or_else(|| vec![-1.0, 1.0]))?;
    c.len("direction", &direction, d)?;
    Ok(ProfileSettings {
        lambdas,
        t_min,
        t_max,
        t_points: c.at_least_one("t_points", raw.t_points.unwrap_or(81))?,
        class0_mean,
        class1_mean,
        sigma: c.positive("sigma", raw.sigma.unwrap_or(0.5))?,
        rho: c.probability("rho", raw.rho.unwrap_or(0.5))?,
        direction,
    })
}

/// Cross-section checks that need both the run and task settings.
fn check_compatibility(src: &Source<'_>, config: &ExperimentConfig) -> Result<(), CliError> {
    let run = &config.run;
    let dim = match &config.task {
        TaskSettings::Log2d(_) => Some(2),
        TaskSettings::Quad7d(s) => Some(s.class0_mean.len()),
        TaskSettings::Pricing(s) => Some(s.mu.len()),
        _ => None,
    };
    if let (Some(d), Some(theta0)) = (dim, &run.theta0) {
        if theta0.len() != d {
            return Err(src.error(
                Some("run"),
                "theta0",
                format!("expected {d} entries, found {}", theta0.len()),
            ));
        }
    }
    let no_density = matches!(config.task, TaskSettings::Housing(_));
    if no_density && run.algorithms.contains(&Algorithm::SfPerfGd) {
        return Err(src.error(
            Some("run"),
            "algorithms",
            "SFPerfGD needs a Gaussian density and cannot run on housing data",
        ));
    }
    Ok(())
}

pub const DEFAULT_HOUSING_FILE: &str = "houses.csv";
pub const DEFAULT_DATA_DIR: &str = "data";
pub const DATA_DIR_ENV: &str = "PERFORMA_DATA_DIR";

/// Absolute paths are kept; relative ones are joined to `data_dir`, or to
/// [`DEFAULT_DATA_DIR`] when no directory is given.
pub fn resolve_data_path(path: &Path, data_dir: Option<&Path>) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        data_dir.unwrap_or_else(|| Path::new(DEFAULT_DATA_DIR)).join(path)
    }
}
