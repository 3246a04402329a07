//! Deploy–sample–update loops.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use crate::estimators::{sf_gradient, GaussianScore};
use crate::linalg;
use crate::losses::{BatchTerms, Loss};
use crate::model::{PerformativeModel, SampleBatch};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Rrm,
    Rgd,
    Rrgd,
    SfPerfGd,
    RpPerfGd,
    RpPerfGdLearn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Rrm,
        Algorithm::Rgd,
        Algorithm::Rrgd,
        Algorithm::SfPerfGd,
        Algorithm::RpPerfGd,
        Algorithm::RpPerfGdLearn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rrm => "RRM",
            Self::Rgd => "RGD",
            Self::Rrgd => "RRGD",
            Self::SfPerfGd => "SFPerfGD",
            Self::RpPerfGd => "RPPerfGD",
            Self::RpPerfGdLearn => "RPPerfGD_learn",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// `η`. Zero is accepted and freezes `θ`.
    pub step_size: f64,
    /// Ridge penalty added to the loss by RRGD.
    pub reg_lambda: f64,
    /// Ridge penalty of the Π regression.
    pub pi_lambda: f64,
    pub num_iter: usize,
    pub n: usize,
    pub theta0: DVector<f64>,
    pub seed: u64,
    pub divergence_threshold: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Run the Π regression alongside algorithms that do not use it, to
    /// report `pi_error`.
    pub estimate_pi: bool,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, theta0: DVector<f64>) -> Self {
        Self {
            algorithm,
            step_size: 0.1,
            reg_lambda: 0.0,
            pi_lambda: 0.1,
            num_iter: 100,
            n: 1000,
            theta0,
            seed: 0,
            divergence_threshold: 1e6,
            inner_tol: 1e-6,
            inner_max_iter: 10_000,
            estimate_pi: false,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        check_dim(d, self.theta0.len())?;
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(invalid(format!("step size must be >= 0, got {}", self.step_size)));
        }
        for (name, v) in [("reg_lambda", self.reg_lambda), ("pi_lambda", self.pi_lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.num_iter == 0 || self.n == 0 {
            return Err(invalid("num_iter and n must be >= 1"));
        }
        if !linalg::is_finite_vec(&self.theta0) {
            return Err(Error::NonFinite("theta0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Parameter deployed at this iteration.
    pub theta: DVector<f64>,
    /// Mean loss on the training batch drawn at `theta`.
    pub train_risk: f64,
    /// Sign accuracy on a fresh batch drawn at `theta` (classification).
    pub accuracy: Option<f64>,
    /// `‖Π̂ − Π‖_F` of the estimate in use at this iteration.
    pub pi_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    /// Iterate after the last update (possibly the one that diverged).
    pub final_theta: DVector<f64>,
    pub diverged: bool,
    pub pi_hat: Option<DMatrix<f64>>,
    pub final_pi_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Deployment {
    theta: DVector<f64>,
    n0: usize,
    sum: DVector<f64>,
}

/// Online diagonal ridge regression of class-0 rows on the deployed `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiEstimatorState {
    history: Vec<Deployment>,
    mu_hat: Option<DVector<f64>>,
    pi_hat: DMatrix<f64>,
}

impl PiEstimatorState {
    pub fn new(d: usize) -> Self {
        Self {
            history: Vec::new(),
            mu_hat: None,
            pi_hat: DMatrix::zeros(d, d),
        }
    }

    /// Uses a known base mean instead of estimating it.
    pub fn with_mean(mu_hat: DVector<f64>) -> Self {
        let d = mu_hat.len();
        Self {
            history: Vec::new(),
            mu_hat: Some(mu_hat),
            pi_hat: DMatrix::zeros(d, d),
        }
    }

    pub fn pi_hat(&self) -> &DMatrix<f64> {
        &self.pi_hat
    }

    pub fn mu_hat(&self) -> Option<&DVector<f64>> {
        self.mu_hat.as_ref()
    }

    pub fn deployments(&self) -> usize {
        self.history.len()
    }

    pub fn pi_error(&self, truth: &DMatrix<f64>) -> f64 {
        (&self.pi_hat - truth).norm()
    }

    /// Adds one deployment's class-0 rows and refits
    /// `Π̂ᵢᵢ = Σⱼ θⱼᵢ(Sⱼᵢ − n₀ⱼ μ̂ᵢ) / (Σⱼ n₀ⱼ θⱼᵢ² + λ)`.
    ///
    /// The base mean `μ̂` is fixed at the first deployment with class-0 rows,
    /// as their mean minus `Π̂θ` under the estimate current at that time.
    pub fn update(
        &mut self,
        theta: &DVector<f64>,
        class0_rows: &DMatrix<f64>,
        lambda: f64,
    ) -> Result<&DMatrix<f64>> {
        let sum = class0_rows.row_sum().transpose();
        self.record(theta, class0_rows.nrows(), sum, lambda)
    }

    pub fn observe(&mut self, theta: &DVector<f64>, batch: &SampleBatch, lambda: f64) -> Result<&DMatrix<f64>> {
        let (sum, n0) = batch.class_sum(0);
        self.record(theta, n0, sum, lambda)
    }

    fn record(
        &mut self,
        theta: &DVector<f64>,
        n0: usize,
        sum: DVector<f64>,
        lambda: f64,
    ) -> Result<&DMatrix<f64>> {
        let d = self.pi_hat.nrows();
        check_dim(d, theta.len())?;
        check_dim(d, sum.len())?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid(format!("pi_lambda must be >= 0, got {lambda}")));
        }
        if self.mu_hat.is_none() && n0 > 0 {
            self.mu_hat = Some(&sum / n0 as f64 - &self.pi_hat * theta);
        }
        self.history.push(Deployment {
            theta: theta.clone(),
            n0,
            sum,
        });
        let Some(mu) = &self.mu_hat else {
            return Ok(&self.pi_hat);
        };
        for i in 0..d {
            let mut num = 0.0;
            let mut den = lambda;
            for dep in &self.history {
                let t = dep.theta[i];
                num += t * (dep.sum[i] - dep.n0 as f64 * mu[i]);
                den += dep.n0 as f64 * t * t;
            }
            self.pi_hat[(i, i)] = if den > 0.0 { num / den } else { 0.0 };
        }
        Ok(&self.pi_hat)
    }
}

fn descend(theta: &DVector<f64>, grad: &DVector<f64>, step: f64) -> DVector<f64> {
    theta - grad * step
}

fn classical_mean(terms: &BatchTerms, n: usize) -> DVector<f64> {
    &terms.grad_theta_sum / n as f64
}

/// `θ − η(mean ∇_θ ℓ + λθ)`; `ridge = 0` is plain RGD.
pub fn step_rgd(theta: &DVector<f64>, batch: &SampleBatch, loss: Loss, step: f64, ridge: f64) -> DVector<f64> {
    let terms = loss.batch_terms(batch, theta);
    rgd_from_terms(theta, &terms, batch.len(), step, ridge)
}

fn rgd_from_terms(theta: &DVector<f64>, terms: &BatchTerms, n: usize, step: f64, ridge: f64) -> DVector<f64> {
    let mut g = classical_mean(terms, n);
    if ridge != 0.0 {
        g += theta * ridge;
    }
    descend(theta, &g, step)
}

/// `θ − η(∇₁ + ∇₂)` with `∇₂ = (1/n) Πᵀ Σ_{class 0} ∇_z ℓ`. When class 1
/// also moves, `pi1` adds `−(1/n) Π₁ᵀ Σ_{class 1} ∇_z ℓ`.
pub fn step_rpperfgd(
    theta: &DVector<f64>,
    batch: &SampleBatch,
    loss: Loss,
    pi: &DMatrix<f64>,
    pi1: Option<&DMatrix<f64>>,
    step: f64,
) -> DVector<f64> {
    let terms = loss.batch_terms(batch, theta);
    rp_from_terms(theta, &terms, batch.len(), pi, pi1, step)
}

fn rp_from_terms(
    theta: &DVector<f64>,
    terms: &BatchTerms,
    n: usize,
    pi: &DMatrix<f64>,
    pi1: Option<&DMatrix<f64>>,
    step: f64,
) -> DVector<f64> {
    let mut g = classical_mean(terms, n);
    g += pi.tr_mul(&terms.grad_z_sums[0]) / n as f64;
    if let Some(pi1) = pi1 {
        g -= pi1.tr_mul(&terms.grad_z_sums[1]) / n as f64;
    }
    descend(theta, &g, step)
}

/// `θ − η(∇₁ + Ĝ_SF)`.
pub fn step_sfperfgd(
    theta: &DVector<f64>,
    batch: &SampleBatch,
    loss: Loss,
    score: &GaussianScore,
    step: f64,
) -> Result<DVector<f64>> {
    let terms = loss.batch_terms(batch, theta);
    sf_from_terms(theta, batch, &terms, loss, score, step)
}

fn sf_from_terms(
    theta: &DVector<f64>,
    batch: &SampleBatch,
    terms: &BatchTerms,
    loss: Loss,
    score: &GaussianScore,
    step: f64,
) -> Result<DVector<f64>> {
    let mut g = classical_mean(terms, batch.len());
    g += sf_gradient(batch, score, loss, theta, None)?.value;
    Ok(descend(theta, &g, step))
}

/// `argmin_θ′ DPR(θ, θ′)` on the batch by gradient descent with Armijo
/// backtracking (the trial step doubles after each accepted step). `None`
/// when the gradient norm does not reach `tol` within `max_iter` steps or
/// the iterate leaves the ball of radius `threshold`.
pub fn step_rrm(
    theta: &DVector<f64>,
    batch: &SampleBatch,
    loss: Loss,
    tol: f64,
    max_iter: usize,
    threshold: f64,
) -> Option<DVector<f64>> {
    let n = batch.len() as f64;
    let objective = |w: &DVector<f64>| loss.losses(batch, w).sum() / n;
    let mut w = theta.clone();
    let mut t = 1.0;
    for _ in 0..max_iter {
        let terms = loss.batch_terms(batch, &w);
        let f = terms.losses.sum() / n;
        let g = &terms.grad_theta_sum / n;
        let g2 = g.norm_squared();
        if g2.sqrt() <= tol {
            return Some(w);
        }
        loop {
            let cand = &w - &g * t;
            if objective(&cand) <= f - 0.5 * t * g2 {
                w = cand;
                t *= 2.0;
                break;
            }
            t *= 0.5;
            if t < 1e-30 {
                return None;
            }
        }
        if !linalg::is_finite_vec(&w) || w.norm() > threshold {
            return None;
        }
    }
    let g = loss.batch_terms(batch, &w).grad_theta_sum / n;
    (g.norm() <= tol).then_some(w)
}

/// Runs `num_iter` deploy–sample–update rounds. Round `k` trains on a batch
/// seeded by `(seed, k, 0)` and measures accuracy on one seeded by
/// `(seed, k, 1)`, both drawn at the deployed `θ_k`.
pub fn run(model: &PerformativeModel, loss: Loss, config: &OptimizerConfig) -> Result<RunRecord> {
    let d = model.dim();
    config.validate(d)?;
    let alg = config.algorithm;
    let truth = model.shift().matrix();
    let learn = alg == Algorithm::RpPerfGdLearn;
    let mut pi_state = (learn || config.estimate_pi).then(|| PiEstimatorState::new(d));
    let score = match alg {
        Algorithm::SfPerfGd => Some(GaussianScore::from_model(model)?),
        _ => None,
    };
    let pi1 = model.class1_shift().map(|s| s.matrix().clone());
    let mut theta = config.theta0.clone();
    let mut iterations = Vec::with_capacity(config.num_iter);
    let mut diverged = false;
    for k in 0..config.num_iter {
        let batch = model.sample_deployed(&theta, config.n, seed::derive(config.seed, &[k as u64, 0]))?;
        let terms = loss.batch_terms(&batch, &theta);
        let accuracy = if loss.is_classification() {
            let eval = model.sample_deployed(&theta, config.n, seed::derive(config.seed, &[k as u64, 1]))?;
            Some(Loss::accuracy(&eval, &theta))
        } else {
            None
        };
        iterations.push(IterationRecord {
            iteration: k,
            theta: theta.clone(),
            train_risk: terms.mean_loss(),
            accuracy,
            pi_error: pi_state.as_ref().map(|s| s.pi_error(truth)),
        });
        let n = batch.len();
        let next = match alg {
            Algorithm::Rgd => Some(rgd_from_terms(&theta, &terms, n, config.step_size, 0.0)),
            Algorithm::Rrgd => Some(rgd_from_terms(&theta, &terms, n, config.step_size, config.reg_lambda)),
            Algorithm::RpPerfGd => Some(rp_from_terms(&theta, &terms, n, truth, pi1.as_ref(), config.step_size)),
            Algorithm::RpPerfGdLearn => {
                let pi_hat = pi_state.as_ref().expect("learning keeps an estimator").pi_hat();
                Some(rp_from_terms(&theta, &terms, n, pi_hat, None, config.step_size))
            }
            Algorithm::SfPerfGd => Some(sf_from_terms(
                &theta,
                &batch,
                &terms,
                loss,
                score.as_ref().expect("score built for SF"),
                config.step_size,
            )?),
            Algorithm::Rrm => step_rrm(
                &theta,
                &batch,
                loss,
                config.inner_tol,
                config.inner_max_iter,
                config.divergence_threshold,
            ),
        };
        if let Some(state) = pi_state.as_mut() {
            state.observe(&theta, &batch, config.pi_lambda)?;
        }
        match next {
            Some(t) if linalg::is_finite_vec(&t) && t.norm() <= config.divergence_threshold => theta = t,
            other => {
                diverged = true;
                if let Some(t) = other {
                    theta = t;
                }
                break;
            }
        }
    }
    Ok(RunRecord {
        algorithm: alg,
        seed: config.seed,
        iterations,
        final_theta: theta,
        diverged,
        final_pi_error: pi_state.as_ref().map(|s| s.pi_error(truth)),
        pi_hat: pi_state.map(|s| s.pi_hat),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Surrogate;
    use crate::model::{BaseDistribution, Gaussian, ShiftOperator};
    use crate::tasks::{build_gauss2d, build_pricing};
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("SGD".parse::<Algorithm>().is_err());
    }

    #[test]
    fn rgd_zero_gradient_keeps_theta() {
        // Logistic at θ = 0 with a symmetric batch: gradients cancel.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, -2.0]);
        let batch = SampleBatch::new(x, vec![1, 1]).unwrap();
        let theta = dv(&[0.0, 0.0]);
        let next = step_rgd(&theta, &batch, Loss::Classification(Surrogate::Logistic), 0.5, 0.0);
        assert_eq!(next, theta);
    }

    #[test]
    fn rgd_logistic_at_origin() {
        let x = DMatrix::from_row_slice(4, 2, &[0.5, 1.0, 1.5, -1.0, -1.0, -2.0, -2.0, 0.0]);
        let batch = SampleBatch::new(x, vec![1, 1, 0, 0]).unwrap();
        let m1 = batch.class_mean(1).unwrap();
        let m0 = batch.class_mean(0).unwrap();
        let eta = 0.3;
        let next = step_rgd(&dv(&[0.0, 0.0]), &batch, Loss::Classification(Surrogate::Logistic), eta, 0.0);
        assert_relative_eq!(next, (m1 - m0) * (eta / 4.0), epsilon = 1e-15);
    }

    #[test]
    fn rgd_on_pricing_settles_at_the_stable_point() {
        // Each step adds η·mean(z) and E[z] = μ − Πθ, so RGD contracts to
        // Π⁻¹μ instead of growing without bound.
        let p = build_pricing(&[1.0, 2.0], &[0.5, 1.0], 1.0, false).unwrap();
        let mut cfg = OptimizerConfig::new(Algorithm::Rgd, dv(&[0.0, 0.0]));
        cfg.num_iter = 500;
        cfg.seed = 3;
        let rec = run(&p.task.model, Loss::Pricing, &cfg).unwrap();
        assert!(!rec.diverged);
        assert!((&rec.final_theta - p.stable_point()).amax() < 0.05, "{}", rec.final_theta);
    }

    #[test]
    fn rrm_on_pricing_diverges() {
        let p = build_pricing(&[1.0, 2.0], &[0.5, 1.0], 1.0, false).unwrap();
        let mut cfg = OptimizerConfig::new(Algorithm::Rrm, dv(&[0.0, 0.0]));
        cfg.num_iter = 10;
        let rec = run(&p.task.model, Loss::Pricing, &cfg).unwrap();
        assert!(rec.diverged);
        assert_eq!(rec.iterations.len(), 1);
    }

    #[test]
    fn rrm_without_shift_matches_direct_minimisation() {
        let model = PerformativeModel::classification(
            BaseDistribution::Gaussian(Gaussian::isotropic(dv(&[-1.0, 0.5]), 1.0).unwrap()),
            BaseDistribution::Gaussian(Gaussian::isotropic(dv(&[1.0, 0.0]), 1.0).unwrap()),
            0.5,
            ShiftOperator::zeros(2),
        )
        .unwrap();
        let loss = Loss::Classification(Surrogate::Quadratic);
        let batch = model.sample_base(2000, 9).unwrap();
        let w = step_rrm(&dv(&[0.0, 0.0]), &batch, loss, 1e-6, 10_000, 1e6).unwrap();
        // Normal equations of Σ(1 − s xᵀw)²: (XᵀX) w = Xᵀs.
        let s = DVector::from_fn(batch.len(), |i, _| if batch.labels()[i] == 1 { 1.0 } else { -1.0 });
        let x = batch.x();
        let direct = (x.transpose() * x).lu().solve(&x.tr_mul(&s)).unwrap();
        assert_relative_eq!(w, direct, epsilon = 1e-5);
    }

    #[test]
    fn rrm_on_logistic_feedback_stays_bounded() {
        // Class 1 sits at the origin and there is no intercept, so the
        // retrained minimiser is always finite.
        let task = build_gauss2d(1.0, 0.5).unwrap();
        let mut cfg = OptimizerConfig::new(Algorithm::Rrm, task.theta0.clone());
        cfg.seed = 1;
        cfg.num_iter = 20;
        let rec = run(&task.model, task.loss, &cfg).unwrap();
        assert!(!rec.diverged);
        assert_eq!(rec.iterations.len(), 20);
        assert!(rec.final_theta.norm() < 10.0);
    }

    #[test]
    fn rp_with_zero_estimate_is_rgd() {
        let task = build_gauss2d(1.0, 0.5).unwrap();
        let batch = task.model.sample_deployed(&dv(&[0.4, -0.2]), 500, 2).unwrap();
        let theta = dv(&[0.4, -0.2]);
        let a = step_rgd(&theta, &batch, task.loss, 0.1, 0.0);
        let b = step_rpperfgd(&theta, &batch, task.loss, &DMatrix::zeros(2, 2), None, 0.1);
        assert_eq!(a, b);
    }

    #[test]
    fn pricing_gradient_has_closed_form_expectation() {
        let p = build_pricing(&[1.0, 2.0], &[0.5, 1.0], 0.0, false).unwrap();
        let theta = dv(&[0.3, 1.7]);
        let batch = p.task.model.sample_deployed(&theta, 10, 1).unwrap();
        let next = step_rpperfgd(&theta, &batch, Loss::Pricing, p.task.model.shift().matrix(), None, 1.0);
        let grad = &theta - next;
        let expected = -&p.mu + p.pi_diag.component_mul(&theta) * 2.0;
        assert_relative_eq!(grad, expected, epsilon = 1e-12);
    }

    #[test]
    fn single_frozen_iteration() {
        let task = build_gauss2d(1.0, 0.5).unwrap();
        let mut cfg = OptimizerConfig::new(Algorithm::RpPerfGd, dv(&[0.2, 0.1]));
        cfg.num_iter = 1;
        cfg.step_size = 0.0;
        let rec = run(&task.model, task.loss, &cfg).unwrap();
        assert_eq!(rec.iterations.len(), 1);
        assert_eq!(rec.final_theta, dv(&[0.2, 0.1]));
        assert!(rec.iterations[0].accuracy.is_some());
        assert!(rec.iterations[0].pi_error.is_none());
    }

    #[test]
    fn pricing_rpperfgd_reaches_optimum() {
        let p = build_pricing(&[1.0, 2.0], &[0.5, 1.0], 1.0, false).unwrap();
        let mut cfg = OptimizerConfig::new(Algorithm::RpPerfGd, dv(&[0.0, 0.0]));
        cfg.num_iter = 500;
        let rec = run(&p.task.model, Loss::Pricing, &cfg).unwrap();
        assert!((&rec.final_theta - dv(&[1.0, 1.0])).amax() < 2e-2, "{}", rec.final_theta);
        assert!(rec.iterations[0].accuracy.is_none());
    }

    #[test]
    fn runs_are_deterministic() {
        let task = build_gauss2d(0.5, 0.5).unwrap();
        let mut cfg = OptimizerConfig::new(Algorithm::SfPerfGd, task.theta0.clone());
        cfg.num_iter = 20;
        cfg.seed = 42;
        assert_eq!(run(&task.model, task.loss, &cfg).unwrap(), run(&task.model, task.loss, &cfg).unwrap());
    }

    #[test]
    fn methods_coincide_without_shift() {
        let task = build_gauss2d(0.0, 0.5).unwrap();
        let traj = |alg| {
            let mut cfg = OptimizerConfig::new(alg, task.theta0.clone());
            cfg.num_iter = 30;
            cfg.seed = 5;
            run(&task.model, task.loss, &cfg).unwrap().iterations
        };
        let rgd = traj(Algorithm::Rgd);
        assert_eq!(rgd, traj(Algorithm::RpPerfGd));
        assert_eq!(rgd, traj(Algorithm::SfPerfGd));
    }

    #[test]
    fn pi_estimate_examples() {
        let empty = PiEstimatorState::new(3);
        assert_eq!(empty.pi_hat(), &DMatrix::zeros(3, 3));

        let mut zero_theta = PiEstimatorState::new(2);
        for _ in 0..3 {
            zero_theta
                .update(&dv(&[0.0, 0.0]), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]), 0.0)
                .unwrap();
        }
        assert_eq!(zero_theta.pi_hat(), &DMatrix::zeros(2, 2));

        let mut one = PiEstimatorState::with_mean(dv(&[0.5]));
        one.update(&dv(&[1.0]), &DMatrix::from_element(1, 1, 2.5), 0.0).unwrap();
        assert_relative_eq!(one.pi_hat()[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn pi_estimate_recovers_noiseless_shift() {
        let mu = dv(&[1.0, -2.0, 0.5]);
        let pi = DMatrix::from_diagonal(&dv(&[0.3, 2.0, -1.0]));
        let mut state = PiEstimatorState::new(3);
        let thetas = [dv(&[0.0, 0.0, 0.0]), dv(&[1.0, 0.5, -1.0]), dv(&[-0.5, 2.0, 0.3]), dv(&[0.7, -1.0, 1.2])];
        for t in &thetas {
            let row = (&mu + &pi * t).transpose();
            let rows = DMatrix::from_fn(5, 3, |_, j| row[j]);
            state.update(t, &rows, 1e-12).unwrap();
        }
        assert!(state.pi_error(&pi) < 1e-6, "{}", state.pi_hat());
        assert_relative_eq!(state.mu_hat().unwrap(), &mu, epsilon = 1e-15);
    }
}
