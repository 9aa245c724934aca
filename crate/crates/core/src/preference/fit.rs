use nalgebra::DVector;

use super::kernel::{covariance_from_sq_dists, factorize, pairwise_sq_dists, KernelParams, DEFAULT_NOISE};
use super::likelihood::{log_posterior_from_parts, PointIndex, PreferenceRecord};
use super::model::FittedModel;
use crate::error::{Error, Result};
use crate::optim::{minimize, LbfgsConfig};

pub const MAP_MAX_ITERS: usize = 200;
pub const MAP_GRAD_TOL: f64 = 1e-6;
/// Log-space hyperparameter movement below which a converged pass is final.
const PRECONDITION_REFRESH: f64 = 1e-3;

/// Joint MAP estimate of goodness values and kernel hyperparameters.
///
/// Goodness values for points already present in `init` start from their
/// previous estimates, new points start at 0. Hyperparameters are optimized
/// in log space; the jitter stays at [`DEFAULT_NOISE`] (or `init`'s noise).
pub fn map_fit(records: &[PreferenceRecord], init: Option<&FittedModel>) -> Result<FittedModel> {
    if records.is_empty() {
        return Err(Error::invalid("map_fit needs at least one preference record"));
    }
    let index = PointIndex::build(records)?;
    let m = index.len();
    let d2 = pairwise_sq_dists(&index.points)?;

    let mut x0 = vec![0.0; m + 2];
    let base = init.map(|f| *f.params()).unwrap_or(KernelParams {
        noise: DEFAULT_NOISE,
        ..KernelParams::default()
    });
    if let Some(prev) = init {
        for (i, p) in index.points.iter().enumerate() {
            if let Some(j) = prev.points().iter().position(|q| q == p) {
                x0[i] = prev.goodness()[j];
            }
        }
    }
    x0[m] = base.amplitude.ln();
    x0[m + 1] = base.lengthscale.ln();

    let unpack = |x: &[f64]| KernelParams {
        amplitude: x[0].exp(),
        lengthscale: x[1].exp(),
        noise: base.noise,
    };

    // With tiny noise K is badly conditioned and plain quasi-Newton steps in
    // g stall. Each pass optimizes u with g = L₀u, L₀ the Cholesky factor of
    // K at the pass's starting θ. The map is linear and fixed within a pass,
    // so the maximizer is unchanged; refreshing L₀ keeps it well scaled as θ
    // moves.
    let mut g = x0[..m].to_vec();
    let mut log_theta = [x0[m], x0[m + 1]];
    let mut budget = MAP_MAX_ITERS;
    while budget > 0 {
        let l0 = factorize(covariance_from_sq_dists(&d2, &unpack(&log_theta)))?.l();
        let u0 = l0
            .solve_lower_triangular(&DVector::from_column_slice(&g))
            .ok_or_else(|| Error::Optimization("singular preconditioner".into()))?;
        let mut y0: Vec<f64> = u0.iter().copied().collect();
        y0.extend(log_theta);

        let objective = |y: &[f64]| -> (f64, Vec<f64>) {
            let gy = &l0 * DVector::from_column_slice(&y[..m]);
            match log_posterior_from_parts(gy.as_slice(), &unpack(&y[m..]), &index.options, &d2) {
                Ok(lp) => {
                    let du = l0.tr_mul(&DVector::from_column_slice(&lp.grad_goodness));
                    let mut grad: Vec<f64> = du.iter().map(|v| -v).collect();
                    grad.push(-lp.grad_log_params[0]);
                    grad.push(-lp.grad_log_params[1]);
                    (-lp.value, grad)
                }
                Err(_) => (f64::INFINITY, vec![f64::NAN; m + 2]),
            }
        };
        let cfg = LbfgsConfig {
            max_iters: budget,
            grad_tol: MAP_GRAD_TOL,
            ..Default::default()
        };
        let result = minimize(objective, &y0, None, &cfg).map_err(|e| {
            Error::Optimization(format!("MAP fit over {m} points from {} records: {e}", records.len()))
        })?;
        if !result.value.is_finite() {
            return Err(Error::Optimization(format!(
                "MAP fit ended at non-finite objective (amplitude {}, lengthscale {})",
                result.x[m].exp(),
                result.x[m + 1].exp()
            )));
        }
        g = (&l0 * DVector::from_column_slice(&result.x[..m])).iter().copied().collect();
        let shift = (result.x[m] - log_theta[0]).abs().max((result.x[m + 1] - log_theta[1]).abs());
        log_theta = [result.x[m], result.x[m + 1]];
        budget = budget.saturating_sub(result.iterations.max(1));
        if result.converged && shift < PRECONDITION_REFRESH {
            break;
        }
    }
    FittedModel::new(index.points, g, unpack(&log_theta))
}
