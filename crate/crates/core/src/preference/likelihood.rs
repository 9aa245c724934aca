use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::{covariance_from_sq_dists, factorize, pairwise_sq_dists, KernelParams};
use crate::error::{Error, Result};
use crate::latent::{check_dim, LatentVector};

/// Sensitivity `s` of the choice model.
pub const BTL_SCALE: f64 = 1.0;

/// Log-normal hyperprior on amplitude and lengthscale: `LN(ln 0.5, 0.1)`.
/// The second parameter is the variance of the underlying normal.
pub const HYPERPRIOR_LOG_MEAN: f64 = -std::f64::consts::LN_2;
pub const HYPERPRIOR_LOG_VARIANCE: f64 = 0.1;

/// Points closer than this in every coordinate are the same observation.
pub const DEDUP_TOL: f64 = 1e-9;

/// One slider round: the blended point the user settled on and the
/// candidates that spanned the slider subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub chosen: LatentVector,
    pub competitors: Vec<LatentVector>,
}

impl PreferenceRecord {
    /// Validates dimensions and that `chosen` lies within the per-coordinate
    /// range of the competitors (a necessary condition for lying in their
    /// convex hull).
    pub fn new(chosen: LatentVector, competitors: Vec<LatentVector>) -> Result<Self> {
        if competitors.is_empty() {
            return Err(Error::invalid("preference record needs at least one competitor"));
        }
        for c in &competitors {
            check_dim(chosen.dim(), c.dim())?;
        }
        for i in 0..chosen.dim() {
            let lo = competitors.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
            let hi = competitors.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max);
            if chosen[i] < lo - DEDUP_TOL || chosen[i] > hi + DEDUP_TOL {
                return Err(Error::invalid(format!(
                    "chosen coordinate {i} = {} outside competitor range [{lo}, {hi}]",
                    chosen[i]
                )));
            }
        }
        Ok(Self { chosen, competitors })
    }
}

/// Distinct observed points and, per record, which of them took part.
///
/// A point shared between records (the carried-over choice) is stored once.
#[derive(Clone, Debug)]
pub struct PointIndex {
    pub points: Vec<LatentVector>,
    /// Per record: option indices into `points`, chosen first, no repeats.
    pub options: Vec<Vec<usize>>,
}

impl PointIndex {
    pub fn build(records: &[PreferenceRecord]) -> Result<Self> {
        let mut points: Vec<LatentVector> = Vec::new();
        let mut options = Vec::with_capacity(records.len());
        let dim = records.first().map(|r| r.chosen.dim());
        for r in records {
            if let Some(d) = dim {
                check_dim(d, r.chosen.dim())?;
            }
            let mut opts = Vec::with_capacity(r.competitors.len() + 1);
            for p in std::iter::once(&r.chosen).chain(&r.competitors) {
                check_dim(r.chosen.dim(), p.dim())?;
                let idx = match points.iter().position(|q| q.approx_eq(p, DEDUP_TOL)) {
                    Some(i) => i,
                    None => {
                        points.push(p.clone());
                        points.len() - 1
                    }
                };
                if !opts.contains(&idx) {
                    opts.push(idx);
                }
            }
            options.push(opts);
        }
        Ok(Self { points, options })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `log softmax(goodness / s)[chosen]`.
pub fn btl_choice_log_prob(goodness: &[f64], chosen: usize, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("BTL scale must be positive, got {s}")));
    }
    if chosen >= goodness.len() {
        return Err(Error::invalid(format!(
            "chosen index {chosen} out of range for {} options",
            goodness.len()
        )));
    }
    if goodness.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("goodness values must be finite"));
    }
    Ok(goodness[chosen] / s - log_sum_exp(goodness.iter().map(|g| g / s)))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log LN(θ; ln 0.5, 0.1)` and its derivative with respect to `ln θ`.
pub fn log_hyperprior(theta: f64) -> (f64, f64) {
    let u = theta.ln();
    let z = u - HYPERPRIOR_LOG_MEAN;
    let value = -z * z / (2.0 * HYPERPRIOR_LOG_VARIANCE)
        - u
        - 0.5 * (2.0 * std::f64::consts::PI * HYPERPRIOR_LOG_VARIANCE).ln();
    (value, -z / HYPERPRIOR_LOG_VARIANCE - 1.0)
}

/// Value and gradient of the log posterior.
#[derive(Clone, Debug)]
pub struct LogPosterior {
    pub value: f64,
    pub grad_goodness: Vec<f64>,
    /// Derivatives with respect to `ln amplitude` and `ln lengthscale`.
    pub grad_log_params: [f64; 2],
}

/// Log posterior of goodness values and kernel hyperparameters given the
/// choice records: BTL terms, the GP prior `N(g; 0, K)` and the log-normal
/// hyperpriors on amplitude and lengthscale.
pub fn dataset_log_posterior(
    goodness: &[f64],
    params: &KernelParams,
    records: &[PreferenceRecord],
    index: &PointIndex,
) -> Result<f64> {
    dataset_log_posterior_grad(goodness, params, records, index).map(|lp| lp.value)
}

/// [`dataset_log_posterior`] with its analytic gradient.
pub fn dataset_log_posterior_grad(
    goodness: &[f64],
    params: &KernelParams,
    records: &[PreferenceRecord],
    index: &PointIndex,
) -> Result<LogPosterior> {
    if index.options.len() != records.len() {
        return Err(Error::invalid("point index was built from a different record list"));
    }
    let d2 = pairwise_sq_dists(&index.points)?;
    log_posterior_from_parts(goodness, params, &index.options, &d2)
}

pub(crate) fn log_posterior_from_parts(
    goodness: &[f64],
    params: &KernelParams,
    options: &[Vec<usize>],
    d2: &DMatrix<f64>,
) -> Result<LogPosterior> {
    let m = d2.nrows();
    check_dim(m, goodness.len())?;
    params.validate()?;

    let mut value = 0.0;
    let mut grad_g = vec![0.0; m];
    for opts in options {
        let gs: Vec<f64> = opts.iter().map(|&i| goodness[i]).collect();
        value += btl_choice_log_prob(&gs, 0, BTL_SCALE)?;
        let lse = log_sum_exp(gs.iter().map(|g| g / BTL_SCALE));
        for (k, &i) in opts.iter().enumerate() {
            let p = (gs[k] / BTL_SCALE - lse).exp();
            let indicator = if k == 0 { 1.0 } else { 0.0 };
            grad_g[i] += (indicator - p) / BTL_SCALE;
        }
    }

    let prior = gaussian_log_prior(goodness, params, d2)?;
    value += prior.value;
    for (a, b) in grad_g.iter_mut().zip(&prior.grad_goodness) {
        *a += b;
    }
    Ok(LogPosterior {
        value,
        grad_goodness: grad_g,
        grad_log_params: prior.grad_log_params,
    })
}

/// `log N(y; 0, K(θ)) + Σ log LN(θ_i)` with gradients in `y` and `ln θ`.
pub(crate) fn gaussian_log_prior(
    y: &[f64],
    params: &KernelParams,
    d2: &DMatrix<f64>,
) -> Result<LogPosterior> {
    let m = d2.nrows();
    let k = covariance_from_sq_dists(d2, params);
    let chol = factorize(k)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(m).map(|v| v.ln()).sum::<f64>();
    let mut value = -0.5 * yv.dot(&alpha)
        - 0.5 * log_det
        - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();

    // d/dθ = ½ tr((ααᵀ - K⁻¹) ∂K/∂θ)
    let kinv = chol.inverse();
    let inv_l2 = 1.0 / (params.lengthscale * params.lengthscale);
    let mut g_amp = 0.0;
    let mut g_len = 0.0;
    for i in 0..m {
        for j in 0..m {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let kf = params.from_sq_dist(d2[(i, j)]);
            g_amp += w * 2.0 * kf;
            g_len += w * kf * d2[(i, j)] * inv_l2;
        }
    }
    let (lp_amp, dlp_amp) = log_hyperprior(params.amplitude);
    let (lp_len, dlp_len) = log_hyperprior(params.lengthscale);
    value += lp_amp + lp_len;

    Ok(LogPosterior {
        value,
        grad_goodness: alpha.iter().map(|a| -a).collect(),
        grad_log_params: [0.5 * g_amp + dlp_amp, 0.5 * g_len + dlp_len],
    })
}
