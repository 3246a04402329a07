//! Runs an experiment config and writes its CSV files.
//!
//! Every run gets its own seed derived from the master seed, the algorithm
//! name, the sweep value and the run index, so runs can execute in any order
//! and adding an algorithm leaves the others untouched. Rows are sorted
//! before writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use performa::estimators::{empirical_covariance, EstimatorKind, GaussianMeanCase};
use performa::housing::{load_housing, HousingTaskSpec};
use performa::losses::{Loss, Surrogate};
use performa::model::{BaseDistribution, Gaussian, PerformativeModel, ShiftOperator};
use performa::optim::{run, Algorithm, OptimizerConfig, RunRecord};
use performa::risk::{lambda_profile, ProfilePoint};
use performa::seed;
use performa::tasks::{build_pricing, Task};
use rayon::prelude::*;

use crate::config::{
    resolve_data_path, EstimatorVarianceSettings, Experiment, ExperimentConfig, ProfileSettings, ShiftSpec,
    TaskSettings,
};
use crate::CliError;

pub const RUN_HEADER: [&str; 11] = [
    "experiment",
    "algorithm",
    "sweep_key",
    "sweep_value",
    "run",
    "iteration",
    "theta_norm",
    "risk",
    "accuracy",
    "pi_error",
    "diverged",
];

pub const VARIANCE_HEADER: [&str; 10] = [
    "experiment",
    "estimator",
    "dim",
    "sigma",
    "n",
    "replications",
    "baseline",
    "empirical_trace",
    "analytic_trace",
    "relative_frobenius_error",
];

pub const PROFILE_HEADER: [&str; 3] = ["lambda", "t", "risk"];

/// One iteration of one run. `diverged` is the run-level flag, repeated on
/// every row of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub algorithm: Algorithm,
    pub sweep_value: f64,
    pub run: usize,
    pub iteration: usize,
    pub theta: DVector<f64>,
    pub risk: f64,
    pub accuracy: Option<f64>,
    pub pi_error: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct RunTable {
    pub experiment: Experiment,
    pub sweep_key: &'static str,
    pub dim: usize,
    pub rows: Vec<RunRow>,
    /// One entry per run, in the same order as the rows.
    pub records: Vec<(Algorithm, f64, usize, RunRecord)>,
}

impl RunTable {
    pub fn runs_of(&self, algorithm: Algorithm, sweep_value: f64) -> impl Iterator<Item = &RunRecord> {
        self.records
            .iter()
            .filter(move |(a, v, _, _)| *a == algorithm && *v == sweep_value)
            .map(|(_, _, _, r)| r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub estimator: EstimatorKind,
    pub dim: usize,
    pub sigma: f64,
    pub n: usize,
    pub replications: usize,
    pub baseline: Option<f64>,
    pub empirical_trace: f64,
    pub analytic_trace: f64,
    pub relative_frobenius_error: f64,
}

#[derive(Debug, Clone)]
pub enum SuiteOutput {
    Runs(RunTable),
    EstimatorVariance(Vec<VarianceRow>),
    Profile(Vec<ProfilePoint>),
}

pub fn run_seed(master: u64, algorithm: Algorithm, sweep_value: f64, run: usize) -> u64 {
    seed::derive(
        master,
        &[seed::hash_str(algorithm.name()), sweep_value.to_bits(), run as u64],
    )
}

fn isotropic(mean: &[f64], sigma: f64) -> performa::error::Result<BaseDistribution> {
    Ok(BaseDistribution::Gaussian(Gaussian::isotropic(
        DVector::from_column_slice(mean),
        sigma,
    )?))
}

fn as_config_error(e: performa::error::Error) -> CliError {
    match e {
        performa::error::Error::Data(_) => e.into(),
        other => CliError::Config(other.to_string()),
    }
}

/// One task per sweep value.
pub fn build_tasks(config: &ExperimentConfig, data_dir: Option<&Path>) -> Result<Vec<(f64, Task)>, CliError> {
    let built: performa::error::Result<Vec<(f64, Task)>> = match &config.task {
        TaskSettings::Log2d(s) => s
            .gamma
            .iter()
            .map(|&gamma| {
                let shift: Vec<f64> = s.shift_diag.iter().map(|p| p * gamma).collect();
                let model = PerformativeModel::classification(
                    isotropic(&s.class0_mean, s.sigma)?,
                    isotropic(&s.class1_mean, s.sigma)?,
                    0.5,
                    ShiftOperator::diagonal(&shift)?,
                )?;
                Ok((
                    gamma,
                    Task {
                        model,
                        loss: Loss::Classification(Surrogate::Logistic),
                        theta0: DVector::zeros(2),
                    },
                ))
            })
            .collect(),
        TaskSettings::Quad7d(s) => s
            .sigma
            .iter()
            .map(|&sigma| {
                let d = s.class0_mean.len();
                let shift = match &s.shift {
                    ShiftSpec::Diagonal(v) => ShiftOperator::diagonal(v)?,
                    ShiftSpec::RowMajor(v) => ShiftOperator::from_row_major(d, v)?,
                };
                let model = PerformativeModel::classification(
                    isotropic(&s.class0_mean, sigma)?,
                    isotropic(&s.class1_mean, sigma)?,
                    s.rho,
                    shift,
                )?;
                Ok((
                    sigma,
                    Task {
                        model,
                        loss: Loss::Classification(Surrogate::Quadratic),
                        theta0: DVector::zeros(d),
                    },
                ))
            })
            .collect(),
        TaskSettings::Pricing(s) => {
            build_pricing(&s.mu, &s.pi_diag, s.sigma, s.allow_nonconvex).map(|p| vec![(s.sigma, p.task)])
        }
        TaskSettings::Housing(s) => {
            let path = resolve_data_path(&s.csv_path, data_dir);
            s.shift_lambda
                .iter()
                .map(|&lambda| {
                    let spec = HousingTaskSpec {
                        csv_path: path.clone(),
                        lambda_shift: lambda,
                        shifted_coords: s.shifted_coords.clone(),
                        standardize: s.standardize,
                        intercept: s.intercept,
                    };
                    Ok((lambda, load_housing(&spec)?))
                })
                .collect()
        }
        TaskSettings::EstimatorVariance(_) | TaskSettings::ConvexityProfile(_) => Ok(Vec::new()),
    };
    built.map_err(as_config_error)
}

pub fn run_suite(config: &ExperimentConfig, data_dir: Option<&Path>) -> Result<SuiteOutput, CliError> {
    match &config.task {
        TaskSettings::EstimatorVariance(s) => {
            estimator_variance(s, config.run.master_seed).map(SuiteOutput::EstimatorVariance)
        }
        TaskSettings::ConvexityProfile(s) => profile(s).map(SuiteOutput::Profile),
        _ => run_optimisers(config, data_dir).map(SuiteOutput::Runs),
    }
}

fn run_optimisers(config: &ExperimentConfig, data_dir: Option<&Path>) -> Result<RunTable, CliError> {
    let (sweep_key, _) = config.sweep().expect("optimisation experiments sweep");
    let tasks = build_tasks(config, data_dir)?;
    let dim = tasks[0].1.model.dim();
    let theta0 = match &config.run.theta0 {
        Some(t) if t.len() != dim => {
            return Err(CliError::Config(format!(
                "run.theta0: expected {dim} entries, found {}",
                t.len()
            )))
        }
        Some(t) => DVector::from_column_slice(t),
        None => DVector::zeros(dim),
    };
    let run = &config.run;
    let jobs: Vec<(usize, Algorithm, usize)> = (0..tasks.len())
        .flat_map(|t| {
            run.algorithms
                .iter()
                .flat_map(move |&a| (0..run.n_runs).map(move |r| (t, a, r)))
        })
        .collect();
    let results: Vec<Result<(Algorithm, f64, usize, RunRecord), CliError>> = jobs
        .par_iter()
        .map(|&(t, algorithm, r)| {
            let (sweep_value, task) = &tasks[t];
            let opt = OptimizerConfig {
                step_size: run.step_size,
                reg_lambda: run.reg_lambda,
                pi_lambda: run.pi_lambda,
                num_iter: run.num_iter,
                n: run.n,
                seed: run_seed(run.master_seed, algorithm, *sweep_value, r),
                divergence_threshold: run.divergence_threshold,
                estimate_pi: run.estimate_pi,
                ..OptimizerConfig::new(algorithm, theta0.clone())
            };
            let record = performa_run(task, &opt)?;
            Ok((algorithm, *sweep_value, r, record))
        })
        .collect();
    let mut records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    records.sort_by(|a, b| {
        a.0.name()
            .cmp(b.0.name())
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let rows = records
        .iter()
        .flat_map(|(algorithm, sweep_value, r, record)| {
            record.iterations.iter().map(move |it| RunRow {
                algorithm: *algorithm,
                sweep_value: *sweep_value,
                run: *r,
                iteration: it.iteration,
                theta: it.theta.clone(),
                risk: it.train_risk,
                accuracy: it.accuracy,
                pi_error: it.pi_error,
                diverged: record.diverged,
            })
        })
        .collect();
    Ok(RunTable {
        experiment: config.experiment,
        sweep_key,
        dim,
        rows,
        records,
    })
}

fn performa_run(task: &Task, opt: &OptimizerConfig) -> Result<RunRecord, CliError> {
    run(&task.model, task.loss, opt).map_err(CliError::from)
}

fn estimator_variance(s: &EstimatorVarianceSettings, master_seed: u64) -> Result<Vec<VarianceRow>, CliError> {
    let mut out = Vec::new();
    for &d in &s.dims {
        let pi = DMatrix::identity(d, d) * s.pi_scale;
        let theta_prime = DVector::from_element(d, -s.a_norm / (d as f64).sqrt());
        let case = GaussianMeanCase::new(pi, s.sigma, DVector::zeros(d), theta_prime)?;
        let optimal = case.cov_sf_baseline_optimal(s.n)?;
        for kind in [EstimatorKind::Rp, EstimatorKind::Sf, EstimatorKind::SfBaseline] {
            let (analytic, baseline) = match kind {
                EstimatorKind::Rp => (case.cov_rp_analytic(s.n), None),
                EstimatorKind::Sf => (case.cov_sf_analytic(s.n)?, None),
                EstimatorKind::SfBaseline => (optimal.covariance.clone(), Some(optimal.loss_baseline)),
            };
            let seed = seed::derive(master_seed, &[seed::hash_str(kind.name()), d as u64]);
            let reps = case.replicate(kind, s.n, s.replications, baseline, seed)?;
            let empirical = empirical_covariance(&reps)?;
            out.push(VarianceRow {
                estimator: kind,
                dim: d,
                sigma: s.sigma,
                n: s.n,
                replications: s.replications,
                baseline,
                empirical_trace: empirical.trace(),
                analytic_trace: analytic.trace(),
                relative_frobenius_error: (&empirical - &analytic).norm() / analytic.norm(),
            });
        }
    }
    Ok(out)
}

fn profile(s: &ProfileSettings) -> Result<Vec<ProfilePoint>, CliError> {
    lambda_profile(
        &DVector::from_column_slice(&s.class0_mean),
        &DVector::from_column_slice(&s.class1_mean),
        s.sigma,
        s.rho,
        &DVector::from_column_slice(&s.direction),
        &s.lambdas,
        &s.ts(),
    )
    .map_err(as_config_error)
}

// ---------------------------------------------------------------------------
// CSV output

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn run_record(experiment: Experiment, sweep_key: &str, row: &RunRow) -> Vec<String> {
    vec![
        experiment.name().to_string(),
        row.algorithm.name().to_string(),
        sweep_key.to_string(),
        row.sweep_value.to_string(),
        row.run.to_string(),
        row.iteration.to_string(),
        row.theta.norm().to_string(),
        row.risk.to_string(),
        opt(row.accuracy),
        opt(row.pi_error),
        row.diverged.to_string(),
    ]
}

fn write_csv<I>(path: &Path, header: &[String], records: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::Run(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for r in records {
        w.write_record(&r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn strings(header: &[&str]) -> Vec<String> {
    header.iter().map(|s| s.to_string()).collect()
}

/// Writes the CSV files for `output` into `out_dir` and returns their paths.
///
/// Optimisation experiments produce `<experiment>.csv`, the RRM runs in
/// `<experiment>_rrm.csv` unless `inline_rrm` is set, and
/// `<experiment>_trajectory.csv` with one `theta_i` column per coordinate.
pub fn write_outputs(output: &SuiteOutput, out_dir: &Path, inline_rrm: bool) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut written = Vec::new();
    match output {
        SuiteOutput::Runs(table) => {
            let name = table.experiment.name();
            let header = strings(&RUN_HEADER);
            let is_rrm = |r: &&RunRow| r.algorithm == Algorithm::Rrm && !inline_rrm;
            let main = out_dir.join(format!("{name}.csv"));
            write_csv(
                &main,
                &header,
                table
                    .rows
                    .iter()
                    .filter(|r| !is_rrm(r))
                    .map(|r| run_record(table.experiment, table.sweep_key, r)),
            )?;
            written.push(main);
            if table.rows.iter().any(|r| is_rrm(&r)) {
                let rrm = out_dir.join(format!("{name}_rrm.csv"));
                write_csv(
                    &rrm,
                    &header,
                    table
                        .rows
                        .iter()
                        .filter(is_rrm)
                        .map(|r| run_record(table.experiment, table.sweep_key, r)),
                )?;
                written.push(rrm);
            }
            let mut traj_header = strings(&RUN_HEADER[..6]);
            traj_header.extend((0..table.dim).map(|i| format!("theta_{i}")));
            let traj = out_dir.join(format!("{name}_trajectory.csv"));
            write_csv(
                &traj,
                &traj_header,
                table.rows.iter().map(|r| {
                    let mut rec = run_record(table.experiment, table.sweep_key, r);
                    rec.truncate(6);
                    rec.extend(r.theta.iter().map(|x| x.to_string()));
                    rec
                }),
            )?;
            written.push(traj);
        }
        SuiteOutput::EstimatorVariance(rows) => {
            let path = out_dir.join(format!("{}.csv", Experiment::EstimatorVariance.name()));
            write_csv(
                &path,
                &strings(&VARIANCE_HEADER),
                rows.iter().map(|r| {
                    vec![
                        Experiment::EstimatorVariance.name().to_string(),
                        r.estimator.name().to_string(),
                        r.dim.to_string(),
                        r.sigma.to_string(),
                        r.n.to_string(),
                        r.replications.to_string(),
                        opt(r.baseline),
                        r.empirical_trace.to_string(),
                        r.analytic_trace.to_string(),
                        r.relative_frobenius_error.to_string(),
                    ]
                }),
            )?;
            written.push(path);
        }
        SuiteOutput::Profile(points) => {
            let path = out_dir.join(format!("{}.csv", Experiment::ConvexityProfile.name()));
            write_csv(
                &path,
                &strings(&PROFILE_HEADER),
                points
                    .iter()
                    .map(|p| vec![p.lambda.to_string(), p.t.to_string(), p.risk.to_string()]),
            )?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Writes the listed paths, one per line.
pub fn report(paths: &[PathBuf], mut w: impl Write) -> std::io::Result<()> {
    for p in paths {
        writeln!(w, "wrote {}", p.display())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn small(experiment: Experiment, extra: &str) -> ExperimentConfig {
        let text = format!("[run]\nn_runs = 2\nnum_iter = 3\nn = 200\n{extra}");
        parse_config_str(&text, experiment).unwrap()
    }

    #[test]
    fn run_seeds_are_separated() {
        let a = run_seed(7, Algorithm::Rgd, 1.0, 0);
        assert_ne!(a, run_seed(7, Algorithm::Rgd, 1.0, 1));
        assert_ne!(a, run_seed(7, Algorithm::Rrgd, 1.0, 0));
        assert_ne!(a, run_seed(7, Algorithm::Rgd, 0.5, 0));
        assert_ne!(a, run_seed(8, Algorithm::Rgd, 1.0, 0));
        assert_eq!(a, run_seed(7, Algorithm::Rgd, 1.0, 0));
    }

    #[test]
    fn counts_and_order() {
        let c = small(Experiment::Log2d, "algorithms = [\"RGD\", \"RRGD\", \"RPPerfGD\", \"SFPerfGD\"]\n");
        let SuiteOutput::Runs(t) = run_suite(&c, None).unwrap() else { panic!() };
        assert_eq!(t.records.len(), 3 * 4 * 2);
        assert_eq!(t.rows.len(), 3 * 4 * 2 * 3);
        let keys: Vec<_> = t
            .rows
            .iter()
            .map(|r| (r.algorithm.name(), r.sweep_value.to_bits(), r.run, r.iteration))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn adding_an_algorithm_leaves_other_runs_alone() {
        let one = small(Experiment::Log2d, "algorithms = [\"RGD\"]\n");
        let two = small(Experiment::Log2d, "algorithms = [\"RPPerfGD\", \"RGD\"]\n");
        let SuiteOutput::Runs(a) = run_suite(&one, None).unwrap() else { panic!() };
        let SuiteOutput::Runs(b) = run_suite(&two, None).unwrap() else { panic!() };
        let rgd: Vec<_> = b.rows.iter().filter(|r| r.algorithm == Algorithm::Rgd).cloned().collect();
        assert_eq!(a.rows, rgd);
    }

    #[test]
    fn variance_rows_cover_every_estimator() {
        let c = parse_config_str(
            "[estimator-variance]\ndims = [2, 3]\nreplications = 2000\n",
            Experiment::EstimatorVariance,
        )
        .unwrap();
        let SuiteOutput::EstimatorVariance(rows) = run_suite(&c, None).unwrap() else { panic!() };
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert!(r.relative_frobenius_error < 0.3, "{r:?}");
            assert_eq!(r.baseline.is_some(), r.estimator == EstimatorKind::SfBaseline);
        }
        let rp = &rows[0];
        assert_eq!(rp.analytic_trace, 2.0);
    }
}
