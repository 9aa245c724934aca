//! Limited-memory BFGS with optional box constraints.
//!
//! Box handling is the simple projected variant: variables sitting on a
//! bound with the gradient pointing outward are frozen for the iteration,
//! the two-loop direction is computed on the remaining free variables and
//! trial points are projected back into the box during the backtracking
//! line search. That is enough for the smooth, low-curvature objectives in
//! this crate (log posteriors and acquisition surfaces).

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once the infinity norm of the projected gradient drops below this.
    pub grad_tol: f64,
    /// Stop once the relative decrease of one step drops below this.
    pub rel_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iters: 200,
            grad_tol: 1e-6,
            rel_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::invalid("lower bound exceeds upper bound"));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dimension: usize) -> Self {
        Self {
            lower: vec![0.0; dimension],
            upper: vec![1.0; dimension],
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `objective`, which returns the value and gradient at a point.
///
/// The returned value never exceeds the value at the (projected) start.
pub fn minimize<F>(
    mut objective: F,
    x0: &[f64],
    bounds: Option<&Bounds>,
    config: &LbfgsConfig,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    if let Some(b) = bounds {
        if b.lower.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.lower.len(),
            });
        }
        b.project(&mut x);
    }
    let (mut fx, mut gx) = objective(&x);
    if !fx.is_finite() || gx.iter().any(|g| !g.is_finite()) {
        return Err(Error::Optimization(format!(
            "non-finite objective at start point (value {fx})"
        )));
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let free = free_mask(&x, &gx, bounds);
        if projected_grad_norm(&x, &gx, bounds) < config.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut dir = two_loop(&gx, &history, &free);
        let mut slope: f64 = dir.iter().zip(&gx).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            history.clear();
            dir = gx
                .iter()
                .zip(&free)
                .map(|(g, &f)| if f { -g } else { 0.0 })
                .collect();
            slope = dir.iter().zip(&gx).map(|(d, g)| d * g).sum();
            if !(slope < 0.0) {
                converged = true;
                break;
            }
        }

        let mut step = if history.is_empty() {
            let dmax = dir.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
            (1.0 / dmax).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            if let Some(b) = bounds {
                b.project(&mut trial);
            }
            let decrease: f64 = trial
                .iter()
                .zip(&x)
                .zip(&gx)
                .map(|((t, xi), g)| (t - xi) * g)
                .sum();
            let (ft, gt) = objective(&trial);
            if ft.is_finite()
                && gt.iter().all(|g| g.is_finite())
                && ft <= fx + 1e-4 * decrease
            {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-10 * (ss * yy).sqrt() && sy > 0.0 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let rel = (fx - f_new).abs() / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        gx = g_new;
        if rel < config.rel_tol {
            converged = projected_grad_norm(&x, &gx, bounds) < config.grad_tol.sqrt();
            break;
        }
    }

    Ok(Minimum {
        x,
        value: fx,
        gradient: gx,
        iterations,
        converged,
    })
}

fn free_mask(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> Vec<bool> {
    match bounds {
        None => vec![true; x.len()],
        Some(b) => x
            .iter()
            .zip(g)
            .zip(b.lower.iter().zip(&b.upper))
            .map(|((xi, gi), (l, u))| !((*xi <= *l && *gi > 0.0) || (*xi >= *u && *gi < 0.0)))
            .collect(),
    }
}

fn projected_grad_norm(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> f64 {
    match bounds {
        None => g.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        Some(b) => x
            .iter()
            .zip(g)
            .zip(b.lower.iter().zip(&b.upper))
            .map(|((xi, gi), (l, u))| (xi - (xi - gi).clamp(*l, *u)).abs())
            .fold(0.0_f64, f64::max),
    }
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) -> Vec<f64> {
    let masked = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(free)
            .map(|(x, &f)| if f { *x } else { 0.0 })
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };

    let mut q = masked(g);
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let s = masked(s);
        let a = rho * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(y.iter()) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    q = masked(&q);
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        if gamma.is_finite() && gamma > 0.0 {
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(&masked(y), &q);
        for (qi, si) in q.iter_mut().zip(s.iter()) {
            *qi += (a - b) * si;
        }
    }
    masked(&q).into_iter().map(|v| -v).collect()
}
