use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{check_dim, squared_distance, LatentVector};

/// Isotropic RBF kernel hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Signal scale; the prior variance of the goodness is `amplitude²`.
    pub amplitude: f64,
    pub lengthscale: f64,
    /// Diagonal jitter added to the covariance.
    pub noise: f64,
}

/// Fixed observation jitter used by the preference model.
pub const DEFAULT_NOISE: f64 = 1e-6;

impl KernelParams {
    pub fn new(amplitude: f64, lengthscale: f64, noise: f64) -> Result<Self> {
        let p = Self {
            amplitude,
            lengthscale,
            noise,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("lengthscale", self.lengthscale),
            ("noise", self.noise),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("kernel {name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub(crate) fn from_sq_dist(&self, d2: f64) -> f64 {
        self.amplitude * self.amplitude * (-d2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            lengthscale: 0.5,
            noise: DEFAULT_NOISE,
        }
    }
}

/// `amplitude² · exp(-‖a-b‖² / (2 lengthscale²))`.
pub fn kernel_value(a: &LatentVector, b: &LatentVector, params: &KernelParams) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(params.from_sq_dist(squared_distance(a, b)))
}

/// Covariance of `points` with `noise` on the diagonal.
///
/// Fails with [`Error::KernelDegenerate`] when the matrix cannot be
/// factorized even after jitter escalation.
pub fn kernel_matrix(points: &[LatentVector], params: &KernelParams) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("kernel matrix needs at least one point"));
    }
    let d2 = pairwise_sq_dists(points)?;
    let k = covariance_from_sq_dists(&d2, params);
    factorize(k.clone())?;
    Ok(k)
}

pub(crate) fn pairwise_sq_dists(points: &[LatentVector]) -> Result<DMatrix<f64>> {
    let m = points.len();
    let dim = points.first().map_or(0, |p| p.dim());
    let mut d2 = DMatrix::zeros(m, m);
    for i in 0..m {
        check_dim(dim, points[i].dim())?;
        for j in 0..i {
            let v = squared_distance(&points[i], &points[j]);
            d2[(i, j)] = v;
            d2[(j, i)] = v;
        }
    }
    Ok(d2)
}

pub(crate) fn covariance_from_sq_dists(d2: &DMatrix<f64>, params: &KernelParams) -> DMatrix<f64> {
    let mut k = d2.map(|v| params.from_sq_dist(v));
    for i in 0..k.nrows() {
        k[(i, i)] += params.noise;
    }
    k
}

/// Cholesky factorization with escalating diagonal jitter.
pub(crate) fn factorize(k: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let scale = (0..k.nrows()).map(|i| k[(i, i)]).fold(0.0_f64, f64::max).max(1e-300);
    let mut extra = 0.0;
    for attempt in 0..8 {
        let mut trial = k.clone();
        if extra > 0.0 {
            for i in 0..trial.nrows() {
                trial[(i, i)] += extra;
            }
        }
        if trial.iter().all(|v| v.is_finite()) {
            if let Some(ch) = Cholesky::new(trial) {
                return Ok(ch);
            }
        }
        extra = scale * 1e-10 * 10f64.powi(attempt);
    }
    Err(Error::KernelDegenerate(format!(
        "{}x{} covariance not positive definite after jitter up to {extra:e}",
        k.nrows(),
        k.ncols()
    )))
}
