//! Simulated-user benchmark.
//!
//! A benchmark function stands in for the user's taste and an oracle stands
//! in for the user's hand on the sliders: each round it returns the blend
//! that minimizes the function over the candidates' simplex. Variants differ
//! in how candidates are produced (BO with several sliders, BO with one
//! slider, random draws) and are compared with plain value-based BO at the
//! same evaluation budget.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{select_candidates, AcquisitionConfig};
use crate::error::{Error, Result};
use crate::generators::{latent_prior_sample, TestFunction};
use crate::latent::{check_dim, LatentVector};
use crate::optim::{minimize, LbfgsConfig};
use crate::preference::{gaussian_log_prior, pairwise_sq_dists, FittedModel, KernelParams, DEFAULT_NOISE};
use crate::session::{blend_weights, CandidateStrategy, Session, SessionConfig, Weights};

/// Default lattice resolution of the oracle user.
pub const DEFAULT_ORACLE_RESOLUTION: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Preferential BO with `c` sliders (the full method at `c = 4`).
    SlidersBo(usize),
    /// Previous choice plus one acquisition maximizer.
    Slider1Bo,
    /// Previous choice plus three prior draws.
    RandomSampling,
    /// Value-observation BO with batches of the given size.
    PointwiseBo(usize),
}

impl Method {
    /// Evaluations (or candidates shown) per round.
    pub fn batch_size(&self) -> usize {
        match self {
            Method::SlidersBo(c) | Method::PointwiseBo(c) => *c,
            Method::Slider1Bo => 2,
            Method::RandomSampling => 4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::SlidersBo(c) => write!(f, "sliders{c}"),
            Method::Slider1Bo => write!(f, "slider1"),
            Method::RandomSampling => write!(f, "random"),
            Method::PointwiseBo(4) => write!(f, "pointwise"),
            Method::PointwiseBo(c) => write!(f, "pointwise{c}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let count = |rest: &str| -> Result<usize> {
            rest.parse::<usize>()
                .ok()
                .filter(|c| *c >= 1)
                .ok_or_else(|| Error::invalid(format!("bad method '{s}'")))
        };
        match s {
            "slider1" | "slider1_bo" | "sliders1" => Ok(Method::Slider1Bo),
            "random" | "random_sampling" => Ok(Method::RandomSampling),
            "pointwise" | "pointwise_bo" => Ok(Method::PointwiseBo(4)),
            _ if s.starts_with("sliders") => {
                let c = count(&s["sliders".len()..])?;
                if c < 2 {
                    return Err(Error::invalid("sliders method needs at least 2 sliders"));
                }
                Ok(Method::SlidersBo(c))
            }
            _ if s.starts_with("pointwise") => Ok(Method::PointwiseBo(count(&s["pointwise".len()..])?)),
            _ => Err(Error::invalid(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub function: TestFunction,
    pub method: Method,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub oracle_resolution: usize,
    pub acquisition: AcquisitionConfig,
}

impl StudyConfig {
    pub fn new(function: TestFunction, method: Method) -> Self {
        Self {
            function,
            method,
            iterations: 20,
            seeds: (1..=10).collect(),
            oracle_resolution: DEFAULT_ORACLE_RESOLUTION,
            acquisition: AcquisitionConfig {
                sigma1: 0.0,
                ..AcquisitionConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.oracle_resolution == 0 {
            return Err(Error::invalid("oracle resolution must be positive"));
        }
        self.acquisition.validate()
    }
}

/// Residual curves of one method on one function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub method: Method,
    pub function: TestFunction,
    pub seeds: Vec<u64>,
    /// `seeds × iterations`.
    pub residuals: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: Vec<f64>,
}

impl StudyResult {
    pub fn final_residuals(&self) -> Vec<f64> {
        self.residuals.iter().map(|r| *r.last().expect("iterations >= 1")).collect()
    }

    pub fn mean_final(&self) -> f64 {
        *self.mean.last().expect("iterations >= 1")
    }
}

/// Squared Euclidean distance.
pub fn residual(x: &LatentVector, x_hat: &LatentVector) -> Result<f64> {
    x.squared_distance(x_hat)
}

/// Blend weights that approximately minimize `function` over the convex
/// hull of `candidates`: best point of a simplex lattice with `resolution`
/// steps per edge, refined by pairwise coordinate descent on the simplex.
pub fn oracle_select(function: &TestFunction, candidates: &[LatentVector], resolution: usize) -> Result<Weights> {
    if candidates.len() < 2 {
        return Err(Error::invalid("oracle needs at least two candidates"));
    }
    if resolution == 0 {
        return Err(Error::invalid("oracle resolution must be positive"));
    }
    for c in candidates {
        check_dim(function.dimension, c.dim())?;
    }
    let c = candidates.len();
    let dim = function.dimension;
    let mut buf = vec![0.0; dim];
    let mut eval = |w: &[f64]| -> f64 {
        buf.fill(0.0);
        for (z, wi) in candidates.iter().zip(w) {
            if *wi != 0.0 {
                for (b, v) in buf.iter_mut().zip(z.iter()) {
                    *b += wi * v;
                }
            }
        }
        function.value(&buf).expect("dimension checked")
    };

    let mut best_w = vec![0.0; c];
    best_w[0] = 1.0;
    let mut best_f = eval(&best_w);
    for_each_composition(resolution, c, &mut |counts| {
        let w: Vec<f64> = counts.iter().map(|k| *k as f64 / resolution as f64).collect();
        let f = eval(&w);
        if f < best_f {
            best_f = f;
            best_w = w;
        }
    });

    for _sweep in 0..200 {
        let start = best_f;
        for i in 0..c {
            for j in (i + 1)..c {
                // Move mass t from j to i, t ∈ [-w_i, w_j].
                let (lo, hi) = (-best_w[i], best_w[j]);
                if hi - lo <= 0.0 {
                    continue;
                }
                let base = best_w.clone();
                let mut phi = |t: f64| {
                    let mut w = base.clone();
                    w[i] = (w[i] + t).max(0.0);
                    w[j] = (w[j] - t).max(0.0);
                    eval(&w)
                };
                let (t, f) = line_minimize(&mut phi, lo, hi);
                if f < best_f {
                    best_w[i] = (best_w[i] + t).max(0.0);
                    best_w[j] = (best_w[j] - t).max(0.0);
                    best_f = f;
                }
            }
        }
        if start - best_f <= 1e-15 * (1.0 + best_f.abs()) {
            break;
        }
    }
    blend_weights(&best_w)
}

/// Calls `visit` with every vector of `parts` non-negative integers summing
/// to `total`.
fn for_each_composition(total: usize, parts: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(buf: &mut Vec<usize>, remaining: usize, parts: usize, visit: &mut impl FnMut(&[usize])) {
        if buf.len() + 1 == parts {
            buf.push(remaining);
            visit(buf);
            buf.pop();
            return;
        }
        for k in 0..=remaining {
            buf.push(k);
            rec(buf, remaining - k, parts, visit);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(parts);
    rec(&mut buf, total, parts, visit);
}

/// Coarse scan followed by golden-section search on the best bracket.
fn line_minimize(phi: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    const SCAN: usize = 10;
    let step = (hi - lo) / SCAN as f64;
    let mut best = (0.0, phi(0.0));
    let mut best_k = None;
    for k in 0..=SCAN {
        let t = if k == SCAN { hi } else { lo + step * k as f64 };
        let f = phi(t);
        if f < best.1 {
            best = (t, f);
            best_k = Some(k);
        }
    }
    let (mut a, mut b) = match best_k {
        Some(k) => (
            (lo + step * (k as f64 - 1.0)).max(lo),
            (lo + step * (k as f64 + 1.0)).min(hi),
        ),
        None => ((-step).max(lo), step.min(hi)),
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = phi(x1);
    let mut f2 = phi(x2);
    for _ in 0..80 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = phi(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = phi(x2);
        }
    }
    for (t, f) in [(x1, f1), (x2, f2)] {
        if f < best.1 {
            best = (t, f);
        }
    }
    best
}

/// One simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    /// Residual of the current point after each round.
    pub residuals: Vec<f64>,
    /// Candidates shown to the oracle user, or function evaluations for
    /// pointwise BO.
    pub evaluations: usize,
}

/// Residual of the current point after each of `config.iterations` rounds.
pub fn run_trial(config: &StudyConfig, seed: u64) -> Result<Vec<f64>> {
    run_trial_counted(config, seed).map(|t| t.residuals)
}

/// [`run_trial`] together with the evaluation count.
pub fn run_trial_counted(config: &StudyConfig, seed: u64) -> Result<Trial> {
    config.validate()?;
    match config.method {
        Method::PointwiseBo(batch) => run_pointwise(config, batch, seed),
        Method::SlidersBo(c) => run_sliders(config, c, CandidateStrategy::Acquisition, seed),
        Method::Slider1Bo => run_sliders(config, 2, CandidateStrategy::Acquisition, seed),
        Method::RandomSampling => run_sliders(config, 4, CandidateStrategy::Random, seed),
    }
}

fn run_sliders(config: &StudyConfig, c: usize, strategy: CandidateStrategy, seed: u64) -> Result<Trial> {
    let f = &config.function;
    let optimum = f.optimum();
    let session_config = SessionConfig {
        candidate_count: c,
        acquisition: AcquisitionConfig {
            sigma1: 0.0,
            ..config.acquisition.clone()
        },
        seed,
        strategy,
        ..SessionConfig::new(f.dimension, f.prior())
    };
    let mut session = Session::create(session_config)?;
    let mut trajectory = Vec::with_capacity(config.iterations);
    let mut evaluations = 0;
    for _ in 0..config.iterations {
        evaluations += session.candidates().len();
        let w = oracle_select(f, session.candidates(), config.oracle_resolution)?;
        session.step(w.as_slice(), &[])?;
        trajectory.push(residual(&session.candidates()[0], &optimum)?);
    }
    Ok(Trial { residuals: trajectory, evaluations })
}

/// Plain BO on observed values: `batch` prior draws, then constant-liar EI
/// batches of the same size, for `iterations · batch` evaluations in total.
fn run_pointwise(config: &StudyConfig, batch: usize, seed: u64) -> Result<Trial> {
    let f = &config.function;
    let prior = f.prior();
    let optimum = f.optimum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<LatentVector> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut trajectory = Vec::with_capacity(config.iterations);
    let mut params = KernelParams::default();

    for round in 0..config.iterations {
        let next = if round == 0 {
            (0..batch)
                .map(|_| latent_prior_sample(&prior, f.dimension, &mut rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            let unit: Vec<LatentVector> = xs.iter().map(|x| prior.to_unit(x)).collect::<Result<_>>()?;
            let goodness = standardize(&ys.iter().map(|y| -y).collect::<Vec<_>>());
            params = fit_regression_params(&unit, &goodness, params)?;
            let model = FittedModel::new(unit, goodness, params)?;
            select_candidates(&model, batch, &config.acquisition, &prior, None, None, &mut rng)?
        };
        for x in next {
            ys.push(f.value(&x)?);
            xs.push(x);
        }
        let best = ys
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("at least one evaluation");
        trajectory.push(residual(&xs[best], &optimum)?);
    }
    Ok(Trial { residuals: trajectory, evaluations: ys.len() })
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// MAP kernel hyperparameters for GP regression on observed values.
fn fit_regression_params(points: &[LatentVector], y: &[f64], init: KernelParams) -> Result<KernelParams> {
    let d2 = pairwise_sq_dists(points)?;
    let noise = DEFAULT_NOISE;
    let objective = |x: &[f64]| {
        let p = KernelParams {
            amplitude: x[0].exp(),
            lengthscale: x[1].exp(),
            noise,
        };
        match gaussian_log_prior(y, &p, &d2) {
            Ok(lp) => (-lp.value, vec![-lp.grad_log_params[0], -lp.grad_log_params[1]]),
            Err(_) => (f64::INFINITY, vec![f64::NAN; 2]),
        }
    };
    let cfg = LbfgsConfig {
        max_iters: 100,
        ..Default::default()
    };
    let m = minimize(objective, &[init.amplitude.ln(), init.lengthscale.ln()], None, &cfg)?;
    KernelParams::new(m.x[0].exp(), m.x[1].exp(), noise)
}

/// Runs every seed (in parallel) and aggregates per-iteration statistics.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let residuals = config
        .seeds
        .par_iter()
        .map(|&seed| run_trial(config, seed))
        .collect::<Result<Vec<_>>>()?;
    let n = residuals.len() as f64;
    let mut mean = vec![0.0; config.iterations];
    let mut std = vec![0.0; config.iterations];
    for k in 0..config.iterations {
        let col: Vec<f64> = residuals.iter().map(|r| r[k]).collect();
        mean[k] = col.iter().sum::<f64>() / n;
        if col.len() > 1 {
            std[k] = (col.iter().map(|v| (v - mean[k]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        }
    }
    Ok(StudyResult {
        method: config.method,
        function: config.function,
        seeds: config.seeds.clone(),
        residuals,
        mean,
        std,
    })
}

/// Long-format CSV: `method,function,d,seed,iteration,residual`.
pub fn write_trajectories_csv<W: Write>(results: &[StudyResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "function", "d", "seed", "iteration", "residual"])?;
    for r in results {
        for (seed, row) in r.seeds.iter().zip(&r.residuals) {
            for (k, v) in row.iter().enumerate() {
                w.write_record([
                    r.method.to_string(),
                    r.function.kind.name().to_string(),
                    r.function.dimension.to_string(),
                    seed.to_string(),
                    (k + 1).to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `method,function,d,iteration,mean,std`.
pub fn write_summary_csv<W: Write>(results: &[StudyResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "function", "d", "iteration", "mean", "std"])?;
    for r in results {
        for (k, (m, s)) in r.mean.iter().zip(&r.std).enumerate() {
            w.write_record([
                r.method.to_string(),
                r.function.kind.name().to_string(),
                r.function.dimension.to_string(),
                (k + 1).to_string(),
                m.to_string(),
                s.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
