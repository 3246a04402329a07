//! Performative effects as push-forward measures.
//!
//! Data observed after deploying `θ` are `Z = φ(U; θ)` with `U` drawn from a
//! fixed base law. For classification the base law is class-conditional and
//! only class 0 moves, through the linear shift `u ↦ u + Πθ`. Class 1 is left
//! untouched unless a second operator `Π₁` is supplied, in which case it moves
//! as `u ↦ u − Π₁θ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg;
use crate::seed::stream_rng;

/// Labels are encoded 0/1. Class 1 is the favoured class.
pub type Label = u8;

const LABEL_STREAM: u64 = 0;
const CLASS_STREAM: [u64; 2] = [1, 2];

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Linear shift map `θ ↦ Πθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperator {
    pi: DMatrix<f64>,
    symmetric: bool,
    min_eigenvalue: f64,
}

impl ShiftOperator {
    pub fn new(pi: DMatrix<f64>) -> Result<Self> {
        if pi.nrows() != pi.ncols() {
            return Err(invalid(format!(
                "shift operator must be square, got {}x{}",
                pi.nrows(),
                pi.ncols()
            )));
        }
        if pi.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("shift operator"));
        }
        let symmetric = linalg::asymmetry(&pi) <= SYMMETRY_TOL;
        let min_eigenvalue = linalg::min_symmetric_eigenvalue(&pi);
        Ok(Self {
            pi,
            symmetric,
            min_eigenvalue,
        })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Row-major `d × d` entries.
    pub fn from_row_major(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(DMatrix::zeros(d, d)).expect("zero matrix is a valid operator")
    }

    pub fn scaled_identity(d: usize, gamma: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * gamma)
    }

    pub fn dim(&self) -> usize {
        self.pi.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.pi
    }

    pub fn apply(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.pi * theta
    }

    /// Jacobian of `θ ↦ Πθ`; constant in `θ`.
    pub fn jacobian(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        self.pi.clone()
    }

    /// `θᵀΠθ`, the squared Π-norm when Π is symmetric PD.
    pub fn quad_form(&self, theta: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.pi, theta)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// PSD/PD flags refer to the symmetric part `(Π + Πᵀ)/2`, which is what
    /// governs the sign of `θᵀΠθ`.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -PSD_TOL
    }

    pub fn is_pd(&self) -> bool {
        self.min_eigenvalue > PSD_TOL
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn is_zero(&self) -> bool {
        self.pi.iter().all(|&x| x == 0.0)
    }

    pub fn negated(&self) -> Self {
        Self::new(-&self.pi).expect("negation preserves validity")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// `σ² I`.
    Isotropic(f64),
    /// Full PSD matrix, with a cached factor `A` such that `A Aᵀ = Σ`.
    Full {
        matrix: DMatrix<f64>,
        factor: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: Covariance,
}

impl Gaussian {
    pub fn isotropic(mean: DVector<f64>, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(invalid(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        if !linalg::is_finite_vec(&mean) {
            return Err(Error::NonFinite("gaussian mean"));
        }
        Ok(Self {
            mean,
            cov: Covariance::Isotropic(sigma),
        })
    }

    pub fn full(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), cov.nrows())?;
        check_dim(mean.len(), cov.ncols())?;
        if cov.iter().any(|x| !x.is_finite()) || !linalg::is_finite_vec(&mean) {
            return Err(Error::NonFinite("gaussian parameters"));
        }
        if linalg::asymmetry(&cov) > SYMMETRY_TOL
            || linalg::min_symmetric_eigenvalue(&cov) < -PSD_TOL
        {
            return Err(invalid("covariance must be symmetric positive semidefinite"));
        }
        let factor = linalg::psd_factor(&cov);
        Ok(Self {
            mean,
            cov: Covariance::Full {
                matrix: cov,
                factor,
            },
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Isotropic(s) => DMatrix::identity(self.dim(), self.dim()) * (s * s),
            Covariance::Full { matrix, .. } => matrix.clone(),
        }
    }

    pub fn covariance_kind(&self) -> &Covariance {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let d = self.dim();
        match &self.cov {
            Covariance::Isotropic(s) => {
                for (j, o) in out.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = self.mean[j] + s * z;
                }
            }
            Covariance::Full { factor, .. } => {
                let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
                let x = factor * z + &self.mean;
                out.copy_from_slice(x.as_slice());
            }
        }
    }
}

/// A finite pool of rows, resampled uniformly with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPool {
    rows: DMatrix<f64>,
}

impl EmpiricalPool {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(invalid("empirical pool has no rows"));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("empirical pool"));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn mean(&self) -> DVector<f64> {
        self.rows.row_mean().transpose()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let i = rng.random_range(0..self.rows.nrows());
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.rows[(i, j)];
        }
    }
}

/// Base (un-shifted) law of one class.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseDistribution {
    Gaussian(Gaussian),
    Empirical(EmpiricalPool),
}

impl BaseDistribution {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Empirical(p) => p.rows.ncols(),
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            Self::Gaussian(g) => g.mean.clone(),
            Self::Empirical(p) => p.mean(),
        }
    }

    pub fn as_gaussian(&self) -> Option<&Gaussian> {
        match self {
            Self::Gaussian(g) => Some(g),
            Self::Empirical(_) => None,
        }
    }

    /// The same law translated by `offset`.
    pub fn translated(&self, offset: &DVector<f64>) -> Self {
        match self {
            Self::Gaussian(g) => Self::Gaussian(Gaussian {
                mean: &g.mean + offset,
                cov: g.cov.clone(),
            }),
            Self::Empirical(p) => {
                let mut rows = p.rows.clone();
                for mut row in rows.row_iter_mut() {
                    row += offset.transpose();
                }
                Self::Empirical(EmpiricalPool { rows })
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Self::Gaussian(g) => g.draw(rng, out),
            Self::Empirical(p) => p.draw(rng, out),
        }
    }
}

/// `n` labelled rows drawn under one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    x: DMatrix<f64>,
    labels: Vec<Label>,
}

impl SampleBatch {
    pub fn new(x: DMatrix<f64>, labels: Vec<Label>) -> Result<Self> {
        check_dim(x.nrows(), labels.len())?;
        if labels.iter().any(|&y| y > 1) {
            return Err(invalid("labels must be 0 or 1"));
        }
        Ok(Self { x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Row-per-sample design matrix.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    pub fn class_count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&y| y == label).count()
    }

    /// Sum of the rows carrying `label`, and how many there are.
    pub fn class_sum(&self, label: Label) -> (DVector<f64>, usize) {
        let mut sum = DVector::zeros(self.dim());
        let mut count = 0;
        for (i, &y) in self.labels.iter().enumerate() {
            if y == label {
                sum += self.x.row(i).transpose();
                count += 1;
            }
        }
        (sum, count)
    }

    pub fn class_mean(&self, label: Label) -> Option<DVector<f64>> {
        let (sum, count) = self.class_sum(label);
        (count > 0).then(|| sum / count as f64)
    }

    /// Unbiased covariance of the rows carrying `label`.
    pub fn class_covariance(&self, label: Label) -> Option<DMatrix<f64>> {
        let mean = self.class_mean(label)?;
        let count = self.class_count(label);
        if count < 2 {
            return None;
        }
        let mut cov = DMatrix::zeros(self.dim(), self.dim());
        for (i, &y) in self.labels.iter().enumerate() {
            if y == label {
                let c = self.x.row(i).transpose() - &mean;
                cov += &c * c.transpose();
            }
        }
        Some(cov / (count - 1) as f64)
    }

    fn shift_class(&mut self, label: Label, offset: &DVector<f64>) {
        for (i, &y) in self.labels.iter().enumerate() {
            if y == label {
                for j in 0..offset.len() {
                    self.x[(i, j)] += offset[j];
                }
            }
        }
    }
}

/// Base law plus the performative map.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformativeModel {
    class0: BaseDistribution,
    class1: Option<BaseDistribution>,
    rho: f64,
    shift: ShiftOperator,
    shift1: Option<ShiftOperator>,
    anchor: DVector<f64>,
}

impl PerformativeModel {
    /// Binary classification: labels are Bernoulli(`rho`), class 0 is shifted.
    pub fn classification(
        class0: BaseDistribution,
        class1: BaseDistribution,
        rho: f64,
        shift: ShiftOperator,
    ) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
        }
        check_dim(class0.dim(), class1.dim())?;
        check_dim(class0.dim(), shift.dim())?;
        let d = class0.dim();
        Ok(Self {
            class0,
            class1: Some(class1),
            rho,
            shift,
            shift1: None,
            anchor: DVector::zeros(d),
        })
    }

    /// A single unlabelled population where every row moves (pricing, mean
    /// estimation). Rows carry label 0.
    pub fn unlabeled(base: BaseDistribution, shift: ShiftOperator) -> Result<Self> {
        check_dim(base.dim(), shift.dim())?;
        let d = base.dim();
        Ok(Self {
            class0: base,
            class1: None,
            rho: 0.0,
            shift,
            shift1: None,
            anchor: DVector::zeros(d),
        })
    }

    /// Let class 1 move as `u ↦ u − Π₁θ`.
    pub fn with_class1_shift(mut self, pi1: ShiftOperator) -> Result<Self> {
        if self.class1.is_none() {
            return Err(invalid("class-1 shift requires a labelled model"));
        }
        check_dim(self.dim(), pi1.dim())?;
        self.shift1 = Some(pi1);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.class0.dim()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn is_labeled(&self) -> bool {
        self.class1.is_some()
    }

    pub fn shift(&self) -> &ShiftOperator {
        &self.shift
    }

    pub fn class1_shift(&self) -> Option<&ShiftOperator> {
        self.shift1.as_ref()
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn base(&self, label: Label) -> Option<&BaseDistribution> {
        match label {
            0 => Some(&self.class0),
            _ => self.class1.as_ref(),
        }
    }

    /// How far class `label` has moved at `theta`, relative to its base.
    pub fn displacement(&self, label: Label, theta: &DVector<f64>) -> DVector<f64> {
        let rel = theta - &self.anchor;
        match (label, &self.shift1) {
            (0, _) => self.shift.apply(&rel),
            (_, Some(pi1)) => -pi1.apply(&rel),
            (_, None) => DVector::zeros(self.dim()),
        }
    }

    /// Mean of class `label` under deployment `theta`.
    pub fn class_mean(&self, label: Label, theta: &DVector<f64>) -> Option<DVector<f64>> {
        self.base(label)
            .map(|b| b.mean() + self.displacement(label, theta))
    }

    /// Draws from the base law (no performative displacement). Labels come
    /// from stream 0 and each class from its own stream, so the draws of a
    /// class do not depend on where the model is deployed.
    pub fn sample_base(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(invalid("sample size must be >= 1"));
        }
        let d = self.dim();
        let mut label_rng = stream_rng(seed, LABEL_STREAM);
        let mut class_rng = CLASS_STREAM.map(|s| stream_rng(seed, s));
        let mut x = DMatrix::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        let mut buf = vec![0.0; d];
        for i in 0..n {
            let y: Label = match &self.class1 {
                Some(_) => u8::from(label_rng.random_bool(self.rho)),
                None => 0,
            };
            let base = self.base(y).expect("label drawn only for present classes");
            base.draw(&mut class_rng[usize::from(y)], &mut buf);
            for (j, v) in buf.iter().enumerate() {
                x[(i, j)] = *v;
            }
            labels.push(y);
        }
        Ok(SampleBatch { x, labels })
    }

    /// Draws `n` labelled rows from the distribution induced by deploying `theta`.
    pub fn sample_deployed(&self, theta: &DVector<f64>, n: usize, seed: u64) -> Result<SampleBatch> {
        let mut batch = self.sample_base(n, seed)?;
        self.displace(&mut batch, theta)?;
        Ok(batch)
    }

    /// Pushes a base batch forward to deployment `theta`.
    pub fn displace(&self, batch: &mut SampleBatch, theta: &DVector<f64>) -> Result<()> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), batch.dim())?;
        if !linalg::is_finite_vec(theta) {
            return Err(Error::NonFinite("theta"));
        }
        batch.shift_class(0, &self.displacement(0, theta));
        if self.shift1.is_some() {
            batch.shift_class(1, &self.displacement(1, theta));
        }
        Ok(())
    }

    /// Re-expresses the model around `theta_bar`: the base laws become the
    /// laws under deployment `theta_bar` and the shift acts on `θ − θ̄`.
    pub fn relocalize(&self, theta_bar: &DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), theta_bar.len())?;
        if !linalg::is_finite_vec(theta_bar) {
            return Err(Error::NonFinite("theta_bar"));
        }
        let class0 = self.class0.translated(&self.displacement(0, theta_bar));
        let class1 = self
            .class1
            .as_ref()
            .map(|b| b.translated(&self.displacement(1, theta_bar)));
        Ok(Self {
            class0,
            class1,
            rho: self.rho,
            shift: self.shift.clone(),
            shift1: self.shift1.clone(),
            anchor: theta_bar.clone(),
        })
    }
}
