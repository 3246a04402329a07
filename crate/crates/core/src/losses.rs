//! Convex surrogates and the performative losses built from them.
//!
//! A classification loss is `ℓ((x, y); θ) = Φ(s · xᵀθ)` with `s = +1` for
//! class 1 and `s = −1` for class 0. Pricing and mean estimation are plain
//! losses on an unlabelled `z`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{invalid, Error};
use crate::model::{Label, SampleBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Surrogate {
    /// `(1 − v)²`
    Quadratic,
    /// `log(1 + e^{−v})`
    Logistic,
    /// `max(0, 1 − v)`
    Hinge,
    /// `e^{−v}`
    Exponential,
}

impl Surrogate {
    pub const ALL: [Surrogate; 4] = [
        Surrogate::Quadratic,
        Surrogate::Logistic,
        Surrogate::Hinge,
        Surrogate::Exponential,
    ];

    pub fn value(self, v: f64) -> f64 {
        match self {
            Self::Quadratic => (1.0 - v) * (1.0 - v),
            Self::Logistic => (-v).max(0.0) + (-v.abs()).exp().ln_1p(),
            Self::Hinge => (1.0 - v).max(0.0),
            Self::Exponential => (-v).exp(),
        }
    }

    /// `Φ′(v)`. The hinge kink at `v = 1` takes the subgradient 0.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Self::Quadratic => -2.0 * (1.0 - v),
            Self::Logistic => {
                // −1 / (1 + e^v), evaluated without overflow
                if v >= 0.0 {
                    let e = (-v).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + v.exp())
                }
            }
            Self::Hinge => {
                if v < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Self::Exponential => -(-v).exp(),
        }
    }

    pub fn is_non_increasing(self) -> bool {
        !matches!(self, Self::Quadratic)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Quadratic => "quadratic",
            Self::Logistic => "logistic",
            Self::Hinge => "hinge",
            Self::Exponential => "exponential",
        }
    }
}

impl fmt::Display for Surrogate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Surrogate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown surrogate `{s}`")))
    }
}

/// `+1` for class 1, `−1` for class 0.
pub fn margin_sign(label: Label) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Predicted class of a linear classifier: 1 iff `xᵀθ > 0`.
pub fn predict(x: &DVector<f64>, theta: &DVector<f64>) -> Label {
    u8::from(x.dot(theta) > 0.0)
}

/// Value and gradients of the pricing loss `−zᵀθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingLoss {
    pub value: f64,
    pub grad_z: DVector<f64>,
    pub grad_theta: DVector<f64>,
}

pub fn pricing_loss(z: &DVector<f64>, theta: &DVector<f64>) -> PricingLoss {
    PricingLoss {
        value: -z.dot(theta),
        grad_z: -theta,
        grad_theta: -z,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    /// Linear classifier with a surrogate of the signed margin.
    Classification(Surrogate),
    /// Revenue loss `−zᵀθ`.
    Pricing,
    /// `‖z − θ‖² / 2`.
    SquaredDistance,
}

/// Per-row losses and gradient sums of one batch at one parameter.
#[derive(Debug, Clone)]
pub struct BatchTerms {
    pub losses: DVector<f64>,
    /// `Σᵢ ∇_θ ℓ(zᵢ; θ)`.
    pub grad_theta_sum: DVector<f64>,
    /// `Σ_{i: yᵢ = c} ∇_z ℓ(zᵢ; θ)` for `c = 0, 1`.
    pub grad_z_sums: [DVector<f64>; 2],
}

impl BatchTerms {
    pub fn mean_loss(&self) -> f64 {
        self.losses.mean()
    }

    pub fn grad_theta_mean(&self) -> DVector<f64> {
        &self.grad_theta_sum / self.losses.len() as f64
    }
}

impl Loss {
    pub fn surrogate(self) -> Option<Surrogate> {
        match self {
            Self::Classification(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Self::Classification(_))
    }

    pub fn value(self, x: &DVector<f64>, y: Label, theta: &DVector<f64>) -> f64 {
        match self {
            Self::Classification(phi) => phi.value(margin_sign(y) * x.dot(theta)),
            Self::Pricing => -x.dot(theta),
            Self::SquaredDistance => (x - theta).norm_squared() / 2.0,
        }
    }

    pub fn grad_z(self, x: &DVector<f64>, y: Label, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Classification(phi) => {
                let s = margin_sign(y);
                theta * (s * phi.derivative(s * x.dot(theta)))
            }
            Self::Pricing => -theta,
            Self::SquaredDistance => x - theta,
        }
    }

    pub fn grad_theta(self, x: &DVector<f64>, y: Label, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Classification(phi) => {
                let s = margin_sign(y);
                x * (s * phi.derivative(s * x.dot(theta)))
            }
            Self::Pricing => -x,
            Self::SquaredDistance => theta - x,
        }
    }

    /// Per-row losses only.
    pub fn losses(self, batch: &SampleBatch, theta: &DVector<f64>) -> DVector<f64> {
        let x = batch.x();
        match self {
            Self::Classification(phi) => {
                let scores = x * theta;
                DVector::from_fn(batch.len(), |i, _| {
                    phi.value(margin_sign(batch.labels()[i]) * scores[i])
                })
            }
            Self::Pricing => -(x * theta),
            Self::SquaredDistance => DVector::from_fn(batch.len(), |i, _| {
                (x.row(i).transpose() - theta).norm_squared() / 2.0
            }),
        }
    }

    /// Losses and gradient sums over a whole batch, vectorised.
    pub fn batch_terms(self, batch: &SampleBatch, theta: &DVector<f64>) -> BatchTerms {
        let x = batch.x();
        let labels = batch.labels();
        let n = batch.len();
        let d = batch.dim();
        match self {
            Self::Classification(phi) => {
                let scores = x * theta;
                let mut losses = DVector::zeros(n);
                let mut weights = DVector::zeros(n);
                let mut wsum = [0.0; 2];
                for i in 0..n {
                    let s = margin_sign(labels[i]);
                    let v = s * scores[i];
                    losses[i] = phi.value(v);
                    let w = s * phi.derivative(v);
                    weights[i] = w;
                    wsum[usize::from(labels[i])] += w;
                }
                BatchTerms {
                    losses,
                    grad_theta_sum: x.tr_mul(&weights),
                    grad_z_sums: wsum.map(|w| theta * w),
                }
            }
            Self::Pricing => {
                let losses = -(x * theta);
                let counts = [0, 1].map(|c| labels.iter().filter(|&&y| y == c).count() as f64);
                let colsum = x.row_sum().transpose();
                BatchTerms {
                    losses,
                    grad_theta_sum: -colsum,
                    grad_z_sums: counts.map(|c| theta * -c),
                }
            }
            Self::SquaredDistance => {
                let mut losses = DVector::zeros(n);
                let mut sums = [DVector::zeros(d), DVector::zeros(d)];
                for i in 0..n {
                    let r = x.row(i).transpose() - theta;
                    losses[i] = r.norm_squared() / 2.0;
                    sums[usize::from(labels[i])] += r;
                }
                let total = &sums[0] + &sums[1];
                BatchTerms {
                    losses,
                    grad_theta_sum: -total,
                    grad_z_sums: sums,
                }
            }
        }
    }

    /// Fraction of rows whose sign prediction matches the label.
    pub fn accuracy(batch: &SampleBatch, theta: &DVector<f64>) -> f64 {
        let scores = batch.x() * theta;
        let correct = scores
            .iter()
            .zip(batch.labels())
            .filter(|(s, &y)| u8::from(**s > 0.0) == y)
            .count();
        correct as f64 / batch.len() as f64
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Classification(s) => write!(f, "{s}"),
            Self::Pricing => f.write_str("pricing"),
            Self::SquaredDistance => f.write_str("squared_distance"),
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pricing" => Ok(Self::Pricing),
            "squared_distance" => Ok(Self::SquaredDistance),
            other => other.parse().map(Self::Classification),
        }
    }
}
