//! Synthetic performative tasks used in the experiments.

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::losses::{Loss, Surrogate};
use crate::model::{BaseDistribution, Gaussian, PerformativeModel, ShiftOperator};

/// A model, the loss optimised on it, and the starting point.
#[derive(Debug, Clone)]
pub struct Task {
    pub model: PerformativeModel,
    pub loss: Loss,
    pub theta0: DVector<f64>,
}

pub const GAUSS2D_SHIFT: [f64; 2] = [0.1, 0.9];
pub const GAUSS7D_CLASS0_MEAN: [f64; 7] = [1.0, 2.0, 0.5, 0.5, 0.0, 0.0, 0.0];
pub const GAUSS7D_SHIFT: [f64; 7] = [0.1, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0];

fn isotropic(mean: &[f64], sigma: f64) -> Result<BaseDistribution> {
    Ok(BaseDistribution::Gaussian(Gaussian::isotropic(
        DVector::from_column_slice(mean),
        sigma,
    )?))
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Two isotropic Gaussians in the plane with logistic loss. Class 1 sits at
/// the origin; class 0 starts at `(−1, −1)` and moves by `γ·diag(0.1, 0.9)·θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauss2dSpec {
    pub gamma: f64,
    pub sigma: f64,
    pub class0_mean: [f64; 2],
    pub class1_mean: [f64; 2],
}

impl Default for Gauss2dSpec {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            sigma: 0.5,
            class0_mean: [-1.0, -1.0],
            class1_mean: [0.0, 0.0],
        }
    }
}

impl Gauss2dSpec {
    pub fn build(&self) -> Result<Task> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        require_positive("sigma", self.sigma)?;
        let shift = ShiftOperator::diagonal(&GAUSS2D_SHIFT.map(|s| s * self.gamma))?;
        let model = PerformativeModel::classification(
            isotropic(&self.class0_mean, self.sigma)?,
            isotropic(&self.class1_mean, self.sigma)?,
            0.5,
            shift,
        )?;
        Ok(Task {
            model,
            loss: Loss::Classification(Surrogate::Logistic),
            theta0: DVector::zeros(2),
        })
    }
}

pub fn build_gauss2d(gamma: f64, sigma: f64) -> Result<Task> {
    Gauss2dSpec {
        gamma,
        sigma,
        ..Gauss2dSpec::default()
    }
    .build()
}

/// Seven-dimensional quadratic-loss classification where two coordinates
/// of class 0 respond to the deployment.
pub fn build_gauss7d(sigma: f64) -> Result<Task> {
    require_positive("sigma", sigma)?;
    let model = PerformativeModel::classification(
        isotropic(&GAUSS7D_CLASS0_MEAN, sigma)?,
        isotropic(&[0.0; 7], sigma)?,
        0.5,
        ShiftOperator::diagonal(&GAUSS7D_SHIFT)?,
    )?;
    Ok(Task {
        model,
        loss: Loss::Classification(Surrogate::Quadratic),
        theta0: DVector::zeros(7),
    })
}

/// Demand `Z = U − Πθ` at prices `θ`, loss `−zᵀθ` (negative revenue).
#[derive(Debug, Clone)]
pub struct PricingTask {
    pub task: Task,
    pub mu: DVector<f64>,
    pub pi_diag: DVector<f64>,
}

/// `sigma` is the demand noise scale; the risk only depends on its mean.
pub fn build_pricing(mu: &[f64], pi_diag: &[f64], sigma: f64, allow_nonconvex: bool) -> Result<PricingTask> {
    if mu.len() != pi_diag.len() {
        return Err(crate::error::Error::DimensionMismatch {
            expected: mu.len(),
            found: pi_diag.len(),
        });
    }
    if !allow_nonconvex && pi_diag.iter().any(|&p| p.is_nan() || p <= 0.0) {
        return Err(invalid(
            "pricing elasticities must be positive (set the nonconvex flag to override)",
        ));
    }
    let neg: Vec<f64> = pi_diag.iter().map(|p| -p).collect();
    let model = PerformativeModel::unlabeled(isotropic(mu, sigma)?, ShiftOperator::diagonal(&neg)?)?;
    Ok(PricingTask {
        task: Task {
            model,
            loss: Loss::Pricing,
            theta0: DVector::zeros(mu.len()),
        },
        mu: DVector::from_column_slice(mu),
        pi_diag: DVector::from_column_slice(pi_diag),
    })
}

impl PricingTask {
    /// `θ*ᵢ = μᵢ / (2Πᵢᵢ)`; only meaningful for positive elasticities.
    pub fn optimum(&self) -> DVector<f64> {
        self.mu.component_div(&(&self.pi_diag * 2.0))
    }

    /// `PR(θ*) = −Σ μᵢ² / (4Πᵢᵢ)`.
    pub fn optimal_risk(&self) -> f64 {
        -self
            .mu
            .iter()
            .zip(self.pi_diag.iter())
            .map(|(m, p)| m * m / (4.0 * p))
            .sum::<f64>()
    }

    /// Stable point of repeated retraining with gradient steps: `θ = Π⁻¹μ`,
    /// where the expected demand vanishes.
    pub fn stable_point(&self) -> DVector<f64> {
        self.mu.component_div(&self.pi_diag)
    }
}
