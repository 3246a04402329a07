//! Monte Carlo estimators of the performative part of the gradient.
//!
//! Under a linear shift the performative term of `∇PR(θ)` is
//! `Πᵀ E[∇_z ℓ(Z; θ)]` over the moving class, which the reparameterisation
//! (RP) estimator averages directly. The score-function (SF) estimator needs
//! the density and is only offered for Gaussian base laws.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::losses::Loss;
use crate::model::{
    BaseDistribution, Covariance, Gaussian, Label, PerformativeModel, SampleBatch, ShiftOperator,
};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Rp,
    Sf,
    SfBaseline,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rp => "RP",
            Self::Sf => "SF",
            Self::SfBaseline => "SF_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub value: DVector<f64>,
    pub n: usize,
    pub kind: EstimatorKind,
    pub baseline: Option<f64>,
}

impl GradientEstimate {
    fn new(value: DVector<f64>, n: usize, kind: EstimatorKind, baseline: Option<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient estimate"));
        }
        Ok(Self {
            value,
            n,
            kind,
            baseline,
        })
    }
}

/// `Πᵀ (1/n) Σ_{i: yᵢ = 0} ∇_z ℓ(Zᵢ; θ)`.
///
/// The sum runs over the rows that move (class 0, or every row of an
/// unlabelled population) but is divided by the full batch size.
pub fn rp_gradient(
    batch: &SampleBatch,
    shift: &ShiftOperator,
    loss: Loss,
    theta: &DVector<f64>,
) -> Result<GradientEstimate> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_dim(shift.dim(), batch.dim())?;
    check_dim(shift.dim(), theta.len())?;
    let terms = loss.batch_terms(batch, theta);
    let value = shift.matrix().tr_mul(&terms.grad_z_sums[0]) / batch.len() as f64;
    GradientEstimate::new(value, batch.len(), EstimatorKind::Rp, None)
}

/// Classical term `mean ∇_θ ℓ` plus the RP performative term: an unbiased
/// estimate of `∇PR(θ)` from a batch drawn at `θ`.
pub fn full_gradient_rp(
    model: &PerformativeModel,
    batch: &SampleBatch,
    loss: Loss,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_dim(model.dim(), batch.dim())?;
    check_dim(model.dim(), theta.len())?;
    let terms = loss.batch_terms(batch, theta);
    let n = batch.len() as f64;
    let mut g = model.shift().matrix().tr_mul(&terms.grad_z_sums[0]);
    if let Some(pi1) = model.class1_shift() {
        g -= pi1.matrix().tr_mul(&terms.grad_z_sums[1]);
    }
    g += &terms.grad_theta_sum;
    Ok(g / n)
}

/// Per-class score `∇_θ log p_θ(z) = Jᵀ Σ⁻¹ (z − E_θ[Z])` of a Gaussian
/// shift family, `J` being the class's shift Jacobian.
#[derive(Debug, Clone)]
pub struct GaussianScore {
    model: PerformativeModel,
    /// `JᵀΣ⁻¹` for each class that moves.
    factors: [Option<DMatrix<f64>>; 2],
}

fn precision(g: &Gaussian) -> Result<DMatrix<f64>> {
    let d = g.dim();
    match g.covariance_kind() {
        Covariance::Isotropic(s) if *s > 0.0 => Ok(DMatrix::identity(d, d) / (s * s)),
        Covariance::Isotropic(_) => Err(Error::ScoreUnavailable("zero noise scale")),
        Covariance::Full { matrix, .. } => matrix
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::ScoreUnavailable("singular covariance")),
    }
}

fn gaussian_base(base: Option<&BaseDistribution>) -> Result<&Gaussian> {
    base.and_then(BaseDistribution::as_gaussian)
        .ok_or(Error::ScoreUnavailable("base law has no analytic density"))
}

impl GaussianScore {
    pub fn from_model(model: &PerformativeModel) -> Result<Self> {
        let g0 = gaussian_base(model.base(0))?;
        let f0 = model.shift().matrix().tr_mul(&precision(g0)?);
        let f1 = match model.class1_shift() {
            Some(pi1) => {
                let g1 = gaussian_base(model.base(1))?;
                Some(-pi1.matrix().tr_mul(&precision(g1)?))
            }
            None => None,
        };
        Ok(Self {
            model: model.clone(),
            factors: [Some(f0), f1],
        })
    }

    pub fn score(&self, label: Label, z: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        match (&self.factors[usize::from(label.min(1))], self.model.class_mean(label, theta)) {
            (Some(f), Some(mean)) => f * (z - mean),
            _ => DVector::zeros(self.model.dim()),
        }
    }
}

/// `(1/n) Σ (ℓ(Zᵢ; θ) − m) ∇_θ log p_θ(Zᵢ)` with the batch drawn at `θ`.
pub fn sf_gradient(
    batch: &SampleBatch,
    score: &GaussianScore,
    loss: Loss,
    theta: &DVector<f64>,
    baseline: Option<f64>,
) -> Result<GradientEstimate> {
    sf_gradient_decoupled(batch, score, loss, theta, theta, baseline)
}

/// SF estimate of `∇_θ DPR(θ, θ′)`: data at `theta`, loss at `theta_prime`.
pub fn sf_gradient_decoupled(
    batch: &SampleBatch,
    score: &GaussianScore,
    loss: Loss,
    theta: &DVector<f64>,
    theta_prime: &DVector<f64>,
    baseline: Option<f64>,
) -> Result<GradientEstimate> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = score.model.dim();
    check_dim(d, batch.dim())?;
    check_dim(d, theta.len())?;
    check_dim(d, theta_prime.len())?;
    let m = baseline.unwrap_or(0.0);
    if !m.is_finite() {
        return Err(Error::NonFinite("baseline"));
    }
    let losses = loss.losses(batch, theta_prime);
    let x = batch.x();
    let mut value = DVector::zeros(d);
    for label in [0u8, 1] {
        let (Some(f), Some(mean)) = (
            &score.factors[usize::from(label)],
            score.model.class_mean(label, theta),
        ) else {
            continue;
        };
        let mut wsum = 0.0;
        let mut xw = DVector::<f64>::zeros(d);
        for (i, &y) in batch.labels().iter().enumerate() {
            if y != label {
                continue;
            }
            let w = losses[i] - m;
            wsum += w;
            for j in 0..d {
                xw[j] += w * x[(i, j)];
            }
        }
        value += f * (xw - mean * wsum);
    }
    value /= batch.len() as f64;
    let kind = if baseline.is_some() {
        EstimatorKind::SfBaseline
    } else {
        EstimatorKind::Sf
    };
    GradientEstimate::new(value, batch.len(), kind, baseline)
}

/// Unbiased (Bessel-corrected) sample covariance of replicated estimates.
pub fn empirical_covariance(replications: &[GradientEstimate]) -> Result<DMatrix<f64>> {
    if replications.len() < 2 {
        return Err(Error::TooFewReplications(replications.len()));
    }
    let d = replications[0].value.len();
    for r in replications {
        check_dim(d, r.value.len())?;
    }
    let count = replications.len() as f64;
    let mean = replications
        .iter()
        .fold(DVector::zeros(d), |acc, r| acc + &r.value)
        / count;
    let mut cov = DMatrix::zeros(d, d);
    for r in replications {
        let c = &r.value - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    Ok(cov / (count - 1.0))
}

/// Mean of replicated estimates and the standard error of each coordinate.
pub fn replication_mean(replications: &[GradientEstimate]) -> Result<(DVector<f64>, DVector<f64>)> {
    let cov = empirical_covariance(replications)?;
    let count = replications.len() as f64;
    let d = cov.nrows();
    let mean = replications
        .iter()
        .fold(DVector::zeros(d), |acc, r| acc + &r.value)
        / count;
    let se = DVector::from_fn(d, |j, _| (cov[(j, j)] / count).sqrt());
    Ok((mean, se))
}

/// Performative mean estimation: `ℓ(z; θ′) = ‖z − θ′‖²/2`,
/// `Z = U + Πθ`, `U ~ N(0, σ²I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeanCase {
    pub pi: DMatrix<f64>,
    pub sigma: f64,
    pub theta: DVector<f64>,
    pub theta_prime: DVector<f64>,
}

/// Minimum-covariance SF baseline. `optimal_m` is on the scale of
/// `‖U + a‖²`; the equivalent baseline subtracted from the loss
/// `‖U + a‖²/2` is `loss_baseline = optimal_m / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalBaseline {
    pub covariance: DMatrix<f64>,
    pub optimal_m: f64,
    pub loss_baseline: f64,
}

const REPLICATION_BLOCK: usize = 4096;

impl GaussianMeanCase {
    pub fn new(
        pi: DMatrix<f64>,
        sigma: f64,
        theta: DVector<f64>,
        theta_prime: DVector<f64>,
    ) -> Result<Self> {
        let d = pi.nrows();
        if pi.ncols() != d {
            return Err(invalid("Π must be square"));
        }
        check_dim(d, theta.len())?;
        check_dim(d, theta_prime.len())?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self {
            pi,
            sigma,
            theta,
            theta_prime,
        })
    }

    pub fn dim(&self) -> usize {
        self.pi.nrows()
    }

    /// `a = Πθ − θ′`.
    pub fn a(&self) -> DVector<f64> {
        &self.pi * &self.theta - &self.theta_prime
    }

    pub fn model(&self) -> Result<PerformativeModel> {
        let base = Gaussian::isotropic(DVector::zeros(self.dim()), self.sigma)?;
        PerformativeModel::unlabeled(
            BaseDistribution::Gaussian(base),
            ShiftOperator::new(self.pi.clone())?,
        )
    }

    /// Expected value of every unbiased estimator: `Πᵀa`.
    pub fn expected_gradient(&self) -> DVector<f64> {
        self.pi.tr_mul(&self.a())
    }

    fn require_sigma(&self) -> Result<()> {
        if self.sigma > 0.0 {
            Ok(())
        } else {
            Err(invalid("sigma must be positive"))
        }
    }

    /// `σ²ΠᵀΠ/n`.
    pub fn cov_rp_analytic(&self, n: usize) -> DMatrix<f64> {
        self.pi.tr_mul(&self.pi) * (self.sigma * self.sigma / n as f64)
    }

    pub fn cov_sf_analytic(&self, n: usize) -> Result<DMatrix<f64>> {
        self.require_sigma()?;
        let d = self.dim() as f64;
        let s2 = self.sigma * self.sigma;
        let a = self.a();
        let a2 = a.norm_squared();
        let c = ((d * d + 6.0 * d + 8.0) * s2 + 2.0 * (d + 4.0) * a2 + a2 * a2 / s2) / 4.0;
        Ok(self.sandwich(c, &a, n))
    }

    pub fn cov_sf_baseline_optimal(&self, n: usize) -> Result<OptimalBaseline> {
        self.require_sigma()?;
        let d = self.dim() as f64;
        let s2 = self.sigma * self.sigma;
        let a = self.a();
        let a2 = a.norm_squared();
        let c = (1.0 + d / 2.0) * s2 + a2;
        let optimal_m = (d + 2.0) * s2 + a2;
        Ok(OptimalBaseline {
            covariance: self.sandwich(c, &a, n),
            optimal_m,
            loss_baseline: optimal_m / 2.0,
        })
    }

    /// `(1/n) Πᵀ (c I + aaᵀ) Π`.
    fn sandwich(&self, c: f64, a: &DVector<f64>, n: usize) -> DMatrix<f64> {
        let d = self.dim();
        let mut inner = DMatrix::identity(d, d) * c;
        inner.ger(1.0, a, a, 1.0);
        self.pi.tr_mul(&(inner * &self.pi)) / n as f64
    }

    /// `reps` independent estimates, each from its own batch of `n` draws at
    /// `θ`. `baseline` is on the loss scale and only used by `SfBaseline`.
    pub fn replicate(
        &self,
        kind: EstimatorKind,
        n: usize,
        reps: usize,
        baseline: Option<f64>,
        seed: u64,
    ) -> Result<Vec<GradientEstimate>> {
        if n == 0 {
            return Err(invalid("sample size must be >= 1"));
        }
        let model = self.model()?;
        let shift = model.shift().clone();
        let score = match kind {
            EstimatorKind::Rp => None,
            _ => {
                self.require_sigma()?;
                Some(GaussianScore::from_model(&model)?)
            }
        };
        let baseline = match kind {
            EstimatorKind::SfBaseline => Some(baseline.ok_or_else(|| invalid("SF_baseline needs a baseline"))?),
            _ => None,
        };
        let blocks = reps.div_ceil(REPLICATION_BLOCK);
        let per_block: Vec<Result<Vec<GradientEstimate>>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let count = REPLICATION_BLOCK.min(reps - b * REPLICATION_BLOCK);
                let big = model.sample_deployed(&self.theta, n * count, seed::derive(seed, &[b as u64]))?;
                (0..count)
                    .map(|r| {
                        let rows = big.x().rows(r * n, n).into_owned();
                        let batch = SampleBatch::new(rows, vec![0; n])?;
                        match &score {
                            None => rp_gradient(&batch, &shift, Loss::SquaredDistance, &self.theta_prime),
                            Some(s) => sf_gradient_decoupled(
                                &batch,
                                s,
                                Loss::SquaredDistance,
                                &self.theta,
                                &self.theta_prime,
                                baseline,
                            ),
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(reps);
        for block in per_block {
            out.extend(block?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Surrogate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn case(pi: DMatrix<f64>, sigma: f64, theta: &[f64], theta_prime: &[f64]) -> GaussianMeanCase {
        GaussianMeanCase::new(pi, sigma, dv(theta), dv(theta_prime)).unwrap()
    }

    fn estimate(v: &[f64]) -> GradientEstimate {
        GradientEstimate::new(dv(v), 1, EstimatorKind::Rp, None).unwrap()
    }

    #[test]
    fn rp_zero_shift_is_zero() {
        let c = case(DMatrix::zeros(2, 2), 1.0, &[1.0, 2.0], &[0.0, 0.0]);
        let batch = c.model().unwrap().sample_deployed(&c.theta, 50, 1).unwrap();
        let g = rp_gradient(&batch, &ShiftOperator::zeros(2), Loss::SquaredDistance, &c.theta_prime).unwrap();
        assert_eq!(g.value, dv(&[0.0, 0.0]));
    }

    #[test]
    fn rp_pricing_identity_shift_gives_minus_theta() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, -4.0, 0.5, 0.0]);
        let batch = SampleBatch::new(x, vec![0; 3]).unwrap();
        let theta = dv(&[0.3, -1.2]);
        let id = ShiftOperator::scaled_identity(2, 1.0).unwrap();
        let g = rp_gradient(&batch, &id, Loss::Pricing, &theta).unwrap();
        assert_relative_eq!(g.value, -theta, epsilon = 1e-15);
    }

    #[test]
    fn rp_mean_case_is_pi_t_mean_of_u_plus_a() {
        let c = case(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]), 0.7, &[0.4, -0.2], &[1.0, 1.0]);
        let model = c.model().unwrap();
        let base = model.sample_base(20, 9).unwrap();
        let batch = model.sample_deployed(&c.theta, 20, 9).unwrap();
        let g = rp_gradient(&batch, model.shift(), Loss::SquaredDistance, &c.theta_prime).unwrap();
        let u_mean = base.x().row_mean().transpose();
        assert_relative_eq!(g.value, c.pi.tr_mul(&(u_mean + c.a())), epsilon = 1e-12);
    }

    #[test]
    fn rp_rejects_empty_and_mismatched() {
        let batch = SampleBatch::new(DMatrix::zeros(0, 2), vec![]).unwrap();
        assert!(matches!(
            rp_gradient(&batch, &ShiftOperator::zeros(2), Loss::Pricing, &dv(&[0.0, 0.0])),
            Err(Error::EmptyBatch)
        ));
        let batch = SampleBatch::new(DMatrix::zeros(1, 2), vec![0]).unwrap();
        assert!(matches!(
            rp_gradient(&batch, &ShiftOperator::zeros(3), Loss::Pricing, &dv(&[0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sf_zero_when_samples_at_mean() {
        let c = case(DMatrix::identity(2, 2), 1.0, &[0.5, 1.0], &[0.0, 0.0]);
        let model = c.model().unwrap();
        let centre = &c.pi * &c.theta;
        let x = DMatrix::from_fn(4, 2, |_, j| centre[j]);
        let batch = SampleBatch::new(x, vec![0; 4]).unwrap();
        let score = GaussianScore::from_model(&model).unwrap();
        let g = sf_gradient(&batch, &score, Loss::SquaredDistance, &c.theta, None).unwrap();
        assert_eq!(g.value, dv(&[0.0, 0.0]));
    }

    #[test]
    fn sf_single_sample_is_half_cube() {
        let c = case(DMatrix::identity(1, 1), 1.0, &[0.0], &[0.0]);
        let score = GaussianScore::from_model(&c.model().unwrap()).unwrap();
        for u in [-1.3, 0.2, 2.0] {
            let batch = SampleBatch::new(DMatrix::from_element(1, 1, u), vec![0]).unwrap();
            let g = sf_gradient(&batch, &score, Loss::SquaredDistance, &c.theta, None).unwrap();
            assert_relative_eq!(g.value[0], u * u * u / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sf_needs_density() {
        let zero_noise = case(DMatrix::identity(1, 1), 0.0, &[0.0], &[0.0]);
        assert!(matches!(
            GaussianScore::from_model(&zero_noise.model().unwrap()),
            Err(Error::ScoreUnavailable(_))
        ));
        assert!(zero_noise.cov_sf_analytic(1).is_err());
        let pool = crate::model::EmpiricalPool::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let m = PerformativeModel::unlabeled(BaseDistribution::Empirical(pool), ShiftOperator::zeros(1)).unwrap();
        assert!(matches!(GaussianScore::from_model(&m), Err(Error::ScoreUnavailable(_))));
    }

    #[test]
    fn analytic_covariance_examples() {
        let one = case(DMatrix::identity(1, 1), 1.0, &[0.0], &[0.0]);
        assert_eq!(one.cov_rp_analytic(1)[(0, 0)], 1.0);
        assert_relative_eq!(one.cov_sf_analytic(1).unwrap()[(0, 0)], 3.75);
        let opt = one.cov_sf_baseline_optimal(1).unwrap();
        assert_relative_eq!(opt.covariance[(0, 0)], 1.5);
        assert_eq!(opt.optimal_m, 3.0);
        assert_eq!(opt.loss_baseline, 1.5);

        let two = case(DMatrix::from_diagonal(&dv(&[1.0, 2.0])), 0.5, &[3.0, -1.0], &[0.0, 7.0]);
        assert_relative_eq!(
            two.cov_rp_analytic(10),
            DMatrix::from_diagonal(&dv(&[0.025, 0.1])),
            epsilon = 1e-15
        );

        let shifted = case(DMatrix::identity(2, 2), 1.0, &[0.0, 0.0], &[-1.0, 0.0]);
        assert_eq!(shifted.a(), dv(&[1.0, 0.0]));
        assert_relative_eq!(
            shifted.cov_sf_analytic(1).unwrap(),
            DMatrix::from_diagonal(&dv(&[10.25, 9.25])),
            epsilon = 1e-12
        );

        let zero = case(DMatrix::zeros(3, 3), 1.0, &[1.0, 1.0, 1.0], &[0.0; 3]);
        assert_eq!(zero.cov_rp_analytic(5), DMatrix::zeros(3, 3));
        let zopt = zero.cov_sf_baseline_optimal(5).unwrap();
        assert_eq!(zopt.covariance, DMatrix::zeros(3, 3));
        assert_eq!(zopt.optimal_m, 5.0);
    }

    #[test]
    fn sf_at_a_zero_scales_pi_t_pi() {
        for d in [1usize, 3, 6] {
            let pi = DMatrix::from_fn(d, d, |i, j| 0.1 * (i + 2 * j) as f64 + if i == j { 1.0 } else { 0.0 });
            let c = case(pi.clone(), 0.8, &vec![0.0; d], &vec![0.0; d]);
            let df = d as f64;
            let expected = pi.tr_mul(&pi) * ((df * df + 6.0 * df + 8.0) * 0.64 / 4.0 / 3.0);
            assert_relative_eq!(c.cov_sf_analytic(3).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn baseline_advantage_grows_with_dimension() {
        for d in [2usize, 8, 32, 128] {
            let c = case(DMatrix::identity(d, d), 1.0, &vec![0.0; d], &vec![0.0; d]);
            let ratio = c.cov_sf_baseline_optimal(1).unwrap().covariance.trace() / c.cov_rp_analytic(1).trace();
            assert_relative_eq!(ratio, 1.0 + d as f64 / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empirical_covariance_examples() {
        let same = vec![estimate(&[1.0, 2.0]); 5];
        assert_eq!(empirical_covariance(&same).unwrap(), DMatrix::zeros(2, 2));
        let v = dv(&[1.0, -3.0]);
        let pair = [estimate(v.as_slice()), estimate((-&v).as_slice())];
        assert_relative_eq!(empirical_covariance(&pair).unwrap(), &v * v.transpose() * 2.0, epsilon = 1e-15);
        assert!(matches!(
            empirical_covariance(&pair[..1]),
            Err(Error::TooFewReplications(1))
        ));
    }

    fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn rp_covariance_matches_analytic() {
        let c = case(DMatrix::from_diagonal(&dv(&[1.0, 2.0])), 0.5, &[0.3, -0.4], &[1.0, 0.0]);
        let reps = c.replicate(EstimatorKind::Rp, 10, 1_000_000, None, 11).unwrap();
        let emp = empirical_covariance(&reps).unwrap();
        assert!(frob_rel(&emp, &c.cov_rp_analytic(10)) < 0.02);
    }

    #[test]
    fn sf_covariance_matches_analytic() {
        let one = case(DMatrix::identity(1, 1), 1.0, &[0.0], &[0.0]);
        let reps = one.replicate(EstimatorKind::Sf, 1, 1_000_000, None, 12).unwrap();
        let emp = empirical_covariance(&reps).unwrap();
        assert!((emp[(0, 0)] - 3.75).abs() / 3.75 < 0.03, "{}", emp[(0, 0)]);

        let shifted = case(DMatrix::identity(2, 2), 1.0, &[0.0, 0.0], &[-1.0, 0.0]);
        let reps = shifted.replicate(EstimatorKind::Sf, 1, 1_000_000, None, 13).unwrap();
        let emp = empirical_covariance(&reps).unwrap();
        assert!(frob_rel(&emp, &shifted.cov_sf_analytic(1).unwrap()) < 0.03);
    }

    #[test]
    fn baseline_sweep_minimum_near_optimum() {
        let one = case(DMatrix::identity(1, 1), 1.0, &[0.0], &[0.0]);
        let opt = one.cov_sf_baseline_optimal(1).unwrap();
        let grid: Vec<f64> = (0..=24).map(|k| 0.25 * k as f64).collect();
        let variances: Vec<f64> = grid
            .iter()
            .map(|&m| {
                let reps = one.replicate(EstimatorKind::SfBaseline, 1, 200_000, Some(m / 2.0), 14).unwrap();
                empirical_covariance(&reps).unwrap()[(0, 0)]
            })
            .collect();
        let best = variances
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| grid[i])
            .unwrap();
        assert!((best - opt.optimal_m).abs() <= 0.2 * opt.optimal_m, "argmin {best}");
        let at_opt = one.replicate(EstimatorKind::SfBaseline, 1, 200_000, Some(opt.loss_baseline), 15).unwrap();
        let v = empirical_covariance(&at_opt).unwrap()[(0, 0)];
        assert!((v - 1.5).abs() / 1.5 < 0.05, "{v}");
    }

    #[test]
    fn estimators_are_unbiased() {
        let configs = [
            (DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]), 0.9, [0.5, -1.0], [0.2, 0.1]),
            (DMatrix::from_diagonal(&dv(&[2.0, 0.5])), 0.4, [-0.3, 0.7], [1.0, -1.0]),
            (DMatrix::identity(2, 2) * 0.5, 1.3, [1.0, 1.0], [0.0, 0.0]),
            (DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 0.6, [0.2, 0.2], [0.4, -0.4]),
            (DMatrix::from_diagonal(&dv(&[1.5, -0.5])), 1.0, [0.1, -0.6], [-0.5, 0.3]),
        ];
        for (i, (pi, sigma, theta, theta_prime)) in configs.into_iter().enumerate() {
            let c = case(pi, sigma, &theta, &theta_prime);
            let target = c.expected_gradient();
            let m = c.cov_sf_baseline_optimal(1).unwrap().loss_baseline;
            for (kind, b) in [
                (EstimatorKind::Rp, None),
                (EstimatorKind::Sf, None),
                (EstimatorKind::SfBaseline, Some(m)),
            ] {
                let reps = c.replicate(kind, 4, 100_000, b, 100 + i as u64).unwrap();
                let (mean, se) = replication_mean(&reps).unwrap();
                for j in 0..2 {
                    assert!(
                        (mean[j] - target[j]).abs() <= 4.0 * se[j] + 1e-12,
                        "config {i} {kind:?} coord {j}: {} vs {}",
                        mean[j],
                        target[j]
                    );
                }
            }
        }
    }

    #[test]
    fn full_gradient_matches_finite_differences_of_common_random_risk() {
        let model = PerformativeModel::classification(
            BaseDistribution::Gaussian(Gaussian::isotropic(dv(&[-1.0, -1.0]), 0.5).unwrap()),
            BaseDistribution::Gaussian(Gaussian::isotropic(dv(&[0.0, 0.0]), 0.5).unwrap()),
            0.5,
            ShiftOperator::diagonal(&[0.1, 0.9]).unwrap(),
        )
        .unwrap();
        let loss = Loss::Classification(Surrogate::Logistic);
        let n = 100_000;
        let theta = dv(&[0.7, -0.4]);
        let risk = |t: &DVector<f64>| loss.losses(&model.sample_deployed(t, n, 5).unwrap(), t).mean();
        let h = 1e-4;
        let fd = DVector::from_fn(2, |j, _| {
            let mut p = theta.clone();
            let mut q = theta.clone();
            p[j] += h;
            q[j] -= h;
            (risk(&p) - risk(&q)) / (2.0 * h)
        });
        let batch = model.sample_deployed(&theta, n, 5).unwrap();
        let g = full_gradient_rp(&model, &batch, loss, &theta).unwrap();
        assert!((&g - &fd).norm() / fd.norm() <= 1e-4, "{g} vs {fd}");
    }

    proptest! {
        #[test]
        fn optimal_baseline_is_below_plain_sf(
            entries in proptest::collection::vec(-2.0..2.0f64, 9),
            theta in proptest::collection::vec(-2.0..2.0f64, 3),
            theta_prime in proptest::collection::vec(-2.0..2.0f64, 3),
            sigma in 0.1..3.0f64,
        ) {
            let c = case(DMatrix::from_row_slice(3, 3, &entries), sigma, &theta, &theta_prime);
            let opt = c.cov_sf_baseline_optimal(1).unwrap();
            prop_assume!(opt.optimal_m > 0.0);
            let gap = c.cov_sf_analytic(1).unwrap() - opt.covariance;
            let gap = (&gap + gap.transpose()) / 2.0;
            let scale = 1.0 + gap.norm();
            prop_assert!(gap.symmetric_eigenvalues().min() >= -1e-12 * scale);
        }
    }
}
