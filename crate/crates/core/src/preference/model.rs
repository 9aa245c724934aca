use nalgebra::{Cholesky, DVector, Dyn};

use super::kernel::{covariance_from_sq_dists, factorize, pairwise_sq_dists, KernelParams};
use crate::error::{Error, Result};
use crate::latent::{check_dim, squared_distance, LatentVector};

/// Goodness values at the observed points plus the kernel they were fitted
/// with. Immutable; the factorization of `K + noise·I` is cached.
#[derive(Clone, Debug)]
pub struct FittedModel {
    points: Vec<LatentVector>,
    goodness: Vec<f64>,
    params: KernelParams,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

/// Posterior mean and variance with their gradients in the query point.
#[derive(Clone, Debug)]
pub(crate) struct PredictionGrad {
    pub mean: f64,
    pub variance: f64,
    pub d_mean: Vec<f64>,
    pub d_variance: Vec<f64>,
}

impl FittedModel {
    pub fn new(points: Vec<LatentVector>, goodness: Vec<f64>, params: KernelParams) -> Result<Self> {
        check_dim(points.len(), goodness.len())?;
        params.validate()?;
        if goodness.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("goodness values must be finite"));
        }
        if points.is_empty() {
            return Ok(Self {
                points,
                goodness,
                params,
                chol: None,
                alpha: DVector::zeros(0),
            });
        }
        let d2 = pairwise_sq_dists(&points)?;
        let chol = factorize(covariance_from_sq_dists(&d2, &params))?;
        let alpha = chol.solve(&DVector::from_column_slice(&goodness));
        Ok(Self {
            points,
            goodness,
            params,
            chol: Some(chol),
            alpha,
        })
    }

    pub fn points(&self) -> &[LatentVector] {
        &self.points
    }

    pub fn goodness(&self) -> &[f64] {
        &self.goodness
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(|p| p.dim())
    }

    /// Largest fitted goodness value.
    pub fn incumbent(&self) -> Result<f64> {
        self.goodness
            .iter()
            .copied()
            .reduce(f64::max)
            .ok_or(Error::EmptyModel)
    }

    /// Observed point with the largest goodness (first on ties).
    pub fn best_point(&self) -> Result<&LatentVector> {
        let mut best = None;
        for (i, g) in self.goodness.iter().enumerate() {
            if best.is_none_or(|(_, b)| *g > b) {
                best = Some((i, *g));
            }
        }
        best.map(|(i, _)| &self.points[i]).ok_or(Error::EmptyModel)
    }

    /// Same kernel, extra points with fixed goodness values.
    pub fn augmented(&self, extra: &[LatentVector], value: f64) -> Result<Self> {
        let mut points = self.points.clone();
        points.extend_from_slice(extra);
        let mut goodness = self.goodness.clone();
        goodness.extend(std::iter::repeat_n(value, extra.len()));
        Self::new(points, goodness, self.params)
    }

    /// Posterior mean and variance of the goodness at `z`. The variance is
    /// that of the latent function (no observation noise) and is clamped
    /// at zero.
    pub fn posterior_predict(&self, z: &LatentVector) -> Result<(f64, f64)> {
        if let Some(d) = self.dim() {
            check_dim(d, z.dim())?;
        }
        let p = self.predict_grad(z, false);
        Ok((p.mean, p.variance))
    }

    pub(crate) fn predict_grad(&self, z: &[f64], with_grad: bool) -> PredictionGrad {
        let prior_var = self.params.amplitude * self.params.amplitude;
        let dim = z.len();
        let Some(chol) = &self.chol else {
            return PredictionGrad {
                mean: 0.0,
                variance: prior_var,
                d_mean: vec![0.0; dim],
                d_variance: vec![0.0; dim],
            };
        };
        let kstar = DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| self.params.from_sq_dist(squared_distance(z, p))),
        );
        let mean = kstar.dot(&self.alpha);
        let w = chol.solve(&kstar);
        let variance = (prior_var - kstar.dot(&w)).max(0.0);

        let mut d_mean = vec![0.0; dim];
        let mut d_variance = vec![0.0; dim];
        if with_grad {
            // ∂k(z, x_i)/∂z = -k_i (z - x_i) / ℓ²
            let inv_l2 = 1.0 / (self.params.lengthscale * self.params.lengthscale);
            for (i, p) in self.points.iter().enumerate() {
                let c_mean = -kstar[i] * inv_l2 * self.alpha[i];
                let c_var = 2.0 * kstar[i] * inv_l2 * w[i];
                for k in 0..dim {
                    let diff = z[k] - p[k];
                    d_mean[k] += c_mean * diff;
                    d_variance[k] += c_var * diff;
                }
            }
        }
        PredictionGrad {
            mean,
            variance,
            d_mean,
            d_variance,
        }
    }
}
