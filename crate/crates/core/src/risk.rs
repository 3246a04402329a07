//! Performative and decoupled risks, closed forms, and numerical
//! certificates for convexity, the adversarial rewriting and the norm bound.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::estimators::full_gradient_rp;
use crate::linalg;
use crate::losses::{margin_sign, Loss, Surrogate};
use crate::model::{BaseDistribution, Gaussian, PerformativeModel, SampleBatch, ShiftOperator};
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskMethod {
    MonteCarlo,
    ClosedFormQuadratic,
    ClosedFormPricing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskEvaluation {
    pub value: f64,
    pub method: RiskMethod,
    /// Sample count for Monte Carlo evaluations.
    pub n: Option<usize>,
    pub std_err: f64,
}

impl RiskEvaluation {
    fn exact(value: f64, method: RiskMethod) -> Self {
        Self {
            value,
            method,
            n: None,
            std_err: 0.0,
        }
    }

    fn from_losses(losses: &DVector<f64>) -> Self {
        let n = losses.len();
        // Centre on the first loss so a constant sample reproduces it exactly.
        let x0 = losses[0];
        let (s, s2) = losses
            .iter()
            .fold((0.0, 0.0), |(s, s2), &x| (s + (x - x0), s2 + (x - x0) * (x - x0)));
        let nf = n as f64;
        let shift = s / nf;
        let std_err = if n > 1 {
            ((s2 - s * shift).max(0.0) / (nf - 1.0) / nf).sqrt()
        } else {
            0.0
        };
        Self {
            value: x0 + shift,
            method: RiskMethod::MonteCarlo,
            n: Some(n),
            std_err,
        }
    }
}

/// `DPR(θ, θ′)`: mean loss at `θ′` over `n` draws at deployment `θ`.
pub fn dpr_monte_carlo(
    model: &PerformativeModel,
    loss: Loss,
    theta: &DVector<f64>,
    theta_prime: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<RiskEvaluation> {
    check_dim(model.dim(), theta_prime.len())?;
    let batch = model.sample_deployed(theta, n, seed)?;
    Ok(RiskEvaluation::from_losses(&loss.losses(&batch, theta_prime)))
}

/// `PR(θ) = DPR(θ, θ)`.
pub fn pr_monte_carlo(
    model: &PerformativeModel,
    loss: Loss,
    theta: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<RiskEvaluation> {
    dpr_monte_carlo(model, loss, theta, theta, n, seed)
}

fn gaussian_class(model: &PerformativeModel, label: u8) -> Result<&Gaussian> {
    model
        .base(label)
        .and_then(BaseDistribution::as_gaussian)
        .ok_or_else(|| invalid("closed form needs Gaussian class laws"))
}

/// Exact PR of the quadratic surrogate for Gaussian classes:
/// `ρ[‖θ‖²_{Σ₁} + (1 − m₁ᵀθ)²] + (1−ρ)[‖θ‖²_{Σ₀} + (m₀ᵀθ + 1)²]`
/// with `m_c` the class means under deployment `θ`.
pub fn pr_closed_quadratic(model: &PerformativeModel, theta: &DVector<f64>) -> Result<RiskEvaluation> {
    check_dim(model.dim(), theta.len())?;
    let g0 = gaussian_class(model, 0)?;
    let g1 = gaussian_class(model, 1)?;
    let rho = model.rho();
    let m0 = model.class_mean(0, theta).expect("class 0 present");
    let m1 = model.class_mean(1, theta).expect("class 1 present");
    let pos = linalg::quad_form(&g1.covariance(), theta) + (1.0 - m1.dot(theta)).powi(2);
    let neg = linalg::quad_form(&g0.covariance(), theta) + (m0.dot(theta) + 1.0).powi(2);
    Ok(RiskEvaluation::exact(
        rho * pos + (1.0 - rho) * neg,
        RiskMethod::ClosedFormQuadratic,
    ))
}

fn require_pricing(model: &PerformativeModel) -> Result<()> {
    if model.is_labeled() {
        Err(invalid("pricing closed form needs an unlabelled model"))
    } else {
        Ok(())
    }
}

/// Exact `DPR(θ, θ′) = −E_θ[Z]ᵀθ′` of the pricing loss.
pub fn dpr_closed_pricing(
    model: &PerformativeModel,
    theta: &DVector<f64>,
    theta_prime: &DVector<f64>,
) -> Result<RiskEvaluation> {
    require_pricing(model)?;
    check_dim(model.dim(), theta.len())?;
    check_dim(model.dim(), theta_prime.len())?;
    let mean = model.class_mean(0, theta).expect("class 0 present");
    Ok(RiskEvaluation::exact(-mean.dot(theta_prime), RiskMethod::ClosedFormPricing))
}

pub fn pr_closed_pricing(model: &PerformativeModel, theta: &DVector<f64>) -> Result<RiskEvaluation> {
    dpr_closed_pricing(model, theta, theta)
}

/// PR estimated on one fixed set of base draws, pushed forward to each
/// queried `θ`. Evaluations at different `θ` share their randomness, so the
/// estimate is a smooth deterministic function of `θ`.
#[derive(Debug, Clone)]
pub struct FrozenSampleRisk {
    model: PerformativeModel,
    loss: Loss,
    base: SampleBatch,
}

impl FrozenSampleRisk {
    pub fn new(model: &PerformativeModel, loss: Loss, n: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            base: model.sample_base(n, seed)?,
            model: model.clone(),
            loss,
        })
    }

    pub fn batch_at(&self, theta: &DVector<f64>) -> Result<SampleBatch> {
        let mut batch = self.base.clone();
        self.model.displace(&mut batch, theta)?;
        Ok(batch)
    }

    pub fn dpr(&self, theta: &DVector<f64>, theta_prime: &DVector<f64>) -> Result<f64> {
        check_dim(self.model.dim(), theta_prime.len())?;
        let losses = match self.loss {
            Loss::Classification(phi) => {
                let scores = self.scores(theta, theta_prime)?;
                let labels = self.base.labels();
                DVector::from_fn(scores.len(), |i, _| phi.value(margin_sign(labels[i]) * scores[i]))
            }
            _ => self.loss.losses(&self.batch_at(theta)?, theta_prime),
        };
        Ok(RiskEvaluation::from_losses(&losses).value)
    }

    pub fn pr(&self, theta: &DVector<f64>) -> Result<f64> {
        self.dpr(theta, theta)
    }

    /// Exact gradient of [`Self::pr`]: classical plus pathwise term.
    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let Loss::Classification(phi) = self.loss else {
            return full_gradient_rp(&self.model, &self.batch_at(theta)?, self.loss, theta);
        };
        let scores = self.scores(theta, theta)?;
        let labels = self.base.labels();
        let mut wsum = [0.0; 2];
        let weights = DVector::from_fn(scores.len(), |i, _| {
            let s = margin_sign(labels[i]);
            let w = s * phi.derivative(s * scores[i]);
            wsum[usize::from(labels[i])] += w;
            w
        });
        // Rows of class c sit at x + δ_c(θ), and ∇_z ℓ = w θ.
        let mut g = self.base.x().tr_mul(&weights);
        for c in [0u8, 1] {
            g += self.model.displacement(c, theta) * wsum[usize::from(c)];
        }
        g += self.model.shift().matrix().tr_mul(theta) * wsum[0];
        if let Some(pi1) = self.model.class1_shift() {
            g -= pi1.matrix().tr_mul(theta) * wsum[1];
        }
        Ok(g / scores.len() as f64)
    }

    /// `zᵢᵀθ′` for the rows pushed forward to `θ`, without materialising them.
    fn scores(&self, theta: &DVector<f64>, theta_prime: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.model.dim(), theta.len())?;
        if !linalg::is_finite_vec(theta) {
            return Err(Error::NonFinite("theta"));
        }
        let offset = [0u8, 1].map(|c| self.model.displacement(c, theta).dot(theta_prime));
        let mut scores = self.base.x() * theta_prime;
        for (s, &y) in scores.iter_mut().zip(self.base.labels()) {
            *s += offset[usize::from(y)];
        }
        Ok(scores)
    }
}

/// Segment probes `(θ₁, θ₂, t)` for convexity checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub probes: Vec<(DVector<f64>, DVector<f64>, f64)>,
}

fn uniform_in_ball(rng: &mut impl Rng, d: usize, radius: f64) -> DVector<f64> {
    let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    let norm = g.norm();
    if norm == 0.0 {
        g
    } else {
        g * (r / norm)
    }
}

impl ProbeSet {
    /// `count` pairs drawn uniformly in the ball of the given radius, probed
    /// at their midpoints.
    pub fn midpoints(d: usize, count: usize, radius: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let probes = (0..count)
            .map(|_| {
                let a = uniform_in_ball(&mut rng, d, radius);
                let b = uniform_in_ball(&mut rng, d, radius);
                (a, b, 0.5)
            })
            .collect();
        Self { probes }
    }

    /// Like [`Self::midpoints`] with `t` uniform in `(0, 1)`.
    pub fn segments(d: usize, count: usize, radius: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let probes = (0..count)
            .map(|_| {
                let a = uniform_in_ball(&mut rng, d, radius);
                let b = uniform_in_ball(&mut rng, d, radius);
                (a, b, rng.random::<f64>())
            })
            .collect();
        Self { probes }
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub probe_pairs: usize,
    /// Largest `f(tθ₁ + (1−t)θ₂) − [t f(θ₁) + (1−t) f(θ₂)]` over the probes.
    pub max_violation: f64,
    /// Worst probe, when it exceeds the tolerance.
    pub violating_pair: Option<(DVector<f64>, DVector<f64>, f64)>,
    /// Number of probes above the tolerance.
    pub violations: usize,
}

impl ConvexityReport {
    pub fn is_convex_on_probes(&self) -> bool {
        self.violations == 0
    }
}

pub fn convexity_profile<F>(risk_fn: F, probes: &ProbeSet, tolerance: f64) -> ConvexityReport
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let gaps: Vec<f64> = probes
        .probes
        .par_iter()
        .map(|(a, b, t)| {
            let mid = a * *t + b * (1.0 - t);
            risk_fn(&mid) - (t * risk_fn(a) + (1.0 - t) * risk_fn(b))
        })
        .collect();
    let mut worst: Option<usize> = None;
    for (i, g) in gaps.iter().enumerate() {
        if worst.is_none_or(|w| *g > gaps[w]) {
            worst = Some(i);
        }
    }
    let max_violation = worst.map_or(f64::NEG_INFINITY, |w| gaps[w]);
    let violations = gaps.iter().filter(|g| **g > tolerance).count();
    ConvexityReport {
        probe_pairs: probes.len(),
        max_violation,
        violating_pair: worst
            .filter(|_| max_violation > tolerance)
            .map(|w| probes.probes[w].clone()),
        violations,
    }
}

/// Central finite-difference Hessian.
pub fn numerical_hessian<F>(f: &F, at: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = at.len();
    let f0 = f(at);
    let mut hess = DMatrix::zeros(d, d);
    let shifted = |pairs: &[(usize, f64)]| {
        let mut p = at.clone();
        for &(k, s) in pairs {
            p[k] += s;
        }
        f(&p)
    };
    for i in 0..d {
        hess[(i, i)] = (shifted(&[(i, h)]) - 2.0 * f0 + shifted(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (shifted(&[(i, h), (j, h)]) - shifted(&[(i, h), (j, -h)])
                - shifted(&[(i, -h), (j, h)])
                + shifted(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Looks for a midpoint-convexity violation along the most negatively curved
/// direction of `f` at each candidate centre. Returns the first probe
/// `(c + εv, c − εv, ½)` whose gap exceeds `tolerance`.
pub fn nonconvexity_witness<F>(
    f: &F,
    centres: &[DVector<f64>],
    eps: f64,
    tolerance: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64)>
where
    F: Fn(&DVector<f64>) -> f64,
{
    for c in centres {
        let hess = numerical_hessian(f, c, 1e-3);
        let eig = SymmetricEigen::new(hess);
        let k = eig.eigenvalues.imin();
        if eig.eigenvalues[k] >= 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k).into_owned();
        let a = c + &v * eps;
        let b = c - &v * eps;
        if f(c) - 0.5 * (f(&a) + f(&b)) > tolerance {
            return Some((a, b, 0.5));
        }
    }
    None
}

/// One point of the profile figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub lambda: f64,
    pub t: f64,
    pub risk: f64,
}

/// Quadratic-surrogate PR along `θ = t·direction` for `Π = λI`, one curve
/// per `λ`, using the closed form.
pub fn lambda_profile(
    class0_mean: &DVector<f64>,
    class1_mean: &DVector<f64>,
    sigma: f64,
    rho: f64,
    direction: &DVector<f64>,
    lambdas: &[f64],
    ts: &[f64],
) -> Result<Vec<ProfilePoint>> {
    let d = class0_mean.len();
    check_dim(d, class1_mean.len())?;
    check_dim(d, direction.len())?;
    let mut out = Vec::with_capacity(lambdas.len() * ts.len());
    for &lambda in lambdas {
        let model = PerformativeModel::classification(
            BaseDistribution::Gaussian(Gaussian::isotropic(class0_mean.clone(), sigma)?),
            BaseDistribution::Gaussian(Gaussian::isotropic(class1_mean.clone(), sigma)?),
            rho,
            ShiftOperator::scaled_identity(d, lambda)?,
        )?;
        for &t in ts {
            let risk = pr_closed_quadratic(&model, &(direction * t))?.value;
            out.push(ProfilePoint { lambda, t, risk });
        }
    }
    Ok(out)
}

/// Worst case of the class-0 loss over the budget `‖Δ‖_{Π⁻¹} ≤ ‖θ‖_Π`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerMax {
    pub value: f64,
    pub argmax: DVector<f64>,
}

fn require_adversarial(surrogate: Surrogate, shift: &ShiftOperator) -> Result<()> {
    if !surrogate.is_non_increasing() {
        return Err(Error::NotNonIncreasing(surrogate));
    }
    if !shift.is_symmetric() || !shift.is_pd() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

/// `max_Δ Φ(−(u₀ + Δ)ᵀθ)` over the Π-ellipsoid: attained at `Δ = Πθ`
/// with value `Φ(−u₀ᵀθ − θᵀΠθ)`.
pub fn adversarial_inner_max(
    surrogate: Surrogate,
    u0: &DVector<f64>,
    theta: &DVector<f64>,
    shift: &ShiftOperator,
) -> Result<InnerMax> {
    require_adversarial(surrogate, shift)?;
    check_dim(shift.dim(), u0.len())?;
    check_dim(shift.dim(), theta.len())?;
    Ok(InnerMax {
        value: surrogate.value(-u0.dot(theta) - shift.quad_form(theta)),
        argmax: shift.apply(theta),
    })
}

/// PR through its adversarial rewriting: class-1 rows contribute
/// `Φ(u₁ᵀθ)`, class-0 rows the inner maximum at their base draw. With the
/// same seed this reproduces [`pr_monte_carlo`].
pub fn pr_adversarial_form(
    model: &PerformativeModel,
    loss: Loss,
    theta: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<RiskEvaluation> {
    let surrogate = loss
        .surrogate()
        .ok_or_else(|| invalid("adversarial form needs a classification loss"))?;
    require_adversarial(surrogate, model.shift())?;
    if !model.is_labeled() || model.class1_shift().is_some() {
        return Err(invalid("adversarial form needs a labelled model with a fixed class 1"));
    }
    if model.anchor().iter().any(|&a| a != 0.0) {
        return Err(invalid("adversarial form needs an un-relocalised model"));
    }
    check_dim(model.dim(), theta.len())?;
    let base = model.sample_base(n, seed)?;
    let scores = base.x() * theta;
    let budget = model.shift().quad_form(theta);
    let losses = DVector::from_fn(base.len(), |i, _| match base.labels()[i] {
        0 => surrogate.value(-scores[i] - budget),
        _ => surrogate.value(scores[i]),
    });
    Ok(RiskEvaluation::from_losses(&losses))
}

/// Upper bound on `‖θ*‖_Π` for a performatively optimal `θ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationBound {
    pub value: f64,
    pi: DMatrix<f64>,
}

pub const BOUND_SLACK: f64 = 1e-8;

/// `‖Π^{−1/2}(ρμ₁ − (1−ρ)μ₀)‖ / (1 − ρ)` for base class means `μ₀, μ₁`.
pub fn regularization_bound(model: &PerformativeModel) -> Result<RegularizationBound> {
    let shift = model.shift();
    if !shift.is_symmetric() || shift.min_eigenvalue() < 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    if shift.min_eigenvalue() <= 1e-12 {
        return Err(Error::Singular(shift.min_eigenvalue()));
    }
    let rho = model.rho();
    if !model.is_labeled() || rho >= 1.0 {
        return Err(invalid("bound needs a labelled model with rho < 1"));
    }
    let mu0 = model.base(0).expect("class 0").mean();
    let mu1 = model.base(1).expect("class 1").mean();
    let inv_sqrt = linalg::symmetric_power(shift.matrix(), -0.5, 1e-12);
    let v = inv_sqrt * (mu1 * rho - mu0 * (1.0 - rho));
    Ok(RegularizationBound {
        value: v.norm() / (1.0 - rho),
        pi: shift.matrix().clone(),
    })
}

impl RegularizationBound {
    /// `‖θ‖_Π`.
    pub fn pi_norm(&self, theta: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.pi, theta).max(0.0).sqrt()
    }

    pub fn check_bound(&self, theta_star: &DVector<f64>) -> bool {
        self.check_with_slack(theta_star, BOUND_SLACK)
    }

    pub fn check_with_slack(&self, theta_star: &DVector<f64>, slack: f64) -> bool {
        self.pi_norm(theta_star) <= self.value + slack
    }
}
