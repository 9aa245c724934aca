//! Black-box targets: benchmark functions, prior sampling and a procedural
//! stand-in for an image generator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::acquisition::PriorSpec;
use crate::error::{Error, Result};
use crate::guidance::Image;
use crate::latent::{check_dim, LatentVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    Sphere,
    /// `Σ 100(x_{i+1} - x_i²)² + (1 - x_i)²`
    RosenbrockStandard,
    /// `Σ 100(x_{i+1} - x_i²)² + (1 - x_i²)²`, the variant with a squared
    /// inner term. Also vanishes at e.g. `(-1, 1, …, 1)`.
    RosenbrockPaper,
}

impl TestFunctionKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunctionKind::Sphere => "sphere",
            TestFunctionKind::RosenbrockStandard => "rosenbrock_standard",
            TestFunctionKind::RosenbrockPaper => "rosenbrock",
        }
    }
}

impl std::str::FromStr for TestFunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Self::Sphere),
            "rosenbrock" | "rosenbrock_paper" => Ok(Self::RosenbrockPaper),
            "rosenbrock_standard" | "rosenbrock-standard" => Ok(Self::RosenbrockStandard),
            other => Err(Error::invalid(format!("unknown test function '{other}'"))),
        }
    }
}

/// A benchmark function on its box domain. Lower is better.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    pub dimension: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// The input left the domain and was clipped before evaluation.
    pub clipped: bool,
}

impl TestFunction {
    pub fn new(kind: TestFunctionKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("test function dimension must be positive"));
        }
        Ok(Self { kind, dimension })
    }

    pub fn sphere(dimension: usize) -> Result<Self> {
        Self::new(TestFunctionKind::Sphere, dimension)
    }

    pub fn rosenbrock(dimension: usize) -> Result<Self> {
        Self::new(TestFunctionKind::RosenbrockPaper, dimension)
    }

    /// Per-dimension domain.
    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            TestFunctionKind::Sphere => (-5.12, 5.12),
            TestFunctionKind::RosenbrockStandard | TestFunctionKind::RosenbrockPaper => (-5.0, 10.0),
        }
    }

    pub fn prior(&self) -> PriorSpec {
        let (lo, hi) = self.domain();
        PriorSpec::uniform_box(vec![(lo, hi); self.dimension]).expect("domains are non-degenerate")
    }

    /// Known optimum used for residuals: the origin for the sphere, the
    /// all-ones vector for both Rosenbrock variants.
    pub fn optimum(&self) -> LatentVector {
        let v = match self.kind {
            TestFunctionKind::Sphere => 0.0,
            _ => 1.0,
        };
        LatentVector::new(vec![v; self.dimension]).expect("non-empty")
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        check_dim(self.dimension, x.len())?;
        let (lo, hi) = self.domain();
        let clipped = x.iter().any(|v| *v < lo || *v > hi);
        let value = if clipped {
            let c: Vec<f64> = x.iter().map(|v| v.clamp(lo, hi)).collect();
            self.raw(&c)
        } else {
            self.raw(x)
        };
        Ok(Evaluation { value, clipped })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.evaluate(x).map(|e| e.value)
    }

    fn raw(&self, x: &[f64]) -> f64 {
        match self.kind {
            TestFunctionKind::Sphere => x.iter().map(|v| v * v).sum(),
            TestFunctionKind::RosenbrockStandard => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum(),
            TestFunctionKind::RosenbrockPaper => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0] * w[0]).powi(2))
                .sum(),
        }
    }

    /// Goodness `g(x) = -f(x)`: the engine maximizes, benchmarks minimize.
    pub fn goodness_oracle(&self) -> impl Fn(&[f64]) -> Result<f64> + '_ {
        move |x| self.value(x).map(|f| -f)
    }
}

/// Draws one latent vector from `prior`.
pub fn latent_prior_sample<R: Rng + ?Sized>(prior: &PriorSpec, dimension: usize, rng: &mut R) -> Result<LatentVector> {
    if dimension == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let values = match prior {
        PriorSpec::StandardNormal => (0..dimension).map(|_| StandardNormal.sample(rng)).collect(),
        PriorSpec::UniformBox { bounds } => {
            check_dim(bounds.len(), dimension)?;
            bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()
        }
    };
    LatentVector::new(values)
}

/// Deterministic map from latent vectors to images.
pub trait Generator: Send + Sync {
    fn dimension(&self) -> usize;
    fn resolution(&self) -> (usize, usize);
    fn render(&self, z: &LatentVector) -> Result<Image>;
}

/// Layered soft radial blobs over a two-colour gradient.
///
/// The latent vector is read in chunks of eight. Chunk 0 sets the
/// background (top colour, bottom colour, gradient strength and tilt);
/// every further chunk is one blob: centre x, centre y, radius, softness,
/// R, G, B, opacity. Each parameter goes through a logistic squash so the
/// image is smooth in `z` and stays in `[0, 1]`. A short trailing chunk is
/// zero-padded.
#[derive(Clone, Debug)]
pub struct ProceduralGenerator {
    dimension: usize,
    width: usize,
    height: usize,
}

pub const CHUNK: usize = 8;

impl ProceduralGenerator {
    pub fn new(dimension: usize, width: usize, height: usize) -> Result<Self> {
        if dimension < CHUNK {
            return Err(Error::invalid(format!("procedural generator needs d >= {CHUNK}, got {dimension}")));
        }
        if width < 8 || height < 8 {
            return Err(Error::invalid("procedural generator needs at least 8x8 pixels"));
        }
        Ok(Self { dimension, width, height })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    softness: f64,
    color: [f64; 3],
    opacity: f64,
}

impl Generator for ProceduralGenerator {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn render(&self, z: &LatentVector) -> Result<Image> {
        check_dim(self.dimension, z.dim())?;
        let chunk = |k: usize| -> [f64; CHUNK] {
            let mut c = [0.0; CHUNK];
            for (i, slot) in c.iter_mut().enumerate() {
                *slot = z.get(k * CHUNK + i).copied().unwrap_or(0.0);
            }
            c
        };
        let bg = chunk(0);
        let top = [sigmoid(bg[0]), sigmoid(bg[1]), sigmoid(bg[2])];
        let bottom = [sigmoid(bg[3]), sigmoid(bg[4]), sigmoid(bg[5])];
        let strength = sigmoid(bg[6]);
        let tilt = 2.0 * sigmoid(bg[7]) - 1.0;

        let blobs: Vec<Blob> = (1..self.dimension.div_ceil(CHUNK))
            .map(|k| {
                let c = chunk(k);
                Blob {
                    cx: sigmoid(c[0]),
                    cy: sigmoid(c[1]),
                    radius: 0.05 + 0.45 * sigmoid(c[2]),
                    softness: 0.01 + 0.2 * sigmoid(c[3]),
                    color: [sigmoid(c[4]), sigmoid(c[5]), sigmoid(c[6])],
                    opacity: sigmoid(c[7]),
                }
            })
            .collect();

        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(w * h * 3);
        for py in 0..h {
            let v = (py as f64 + 0.5) / h as f64;
            for px in 0..w {
                let u = (px as f64 + 0.5) / w as f64;
                let t = (0.5 + strength * ((v - 0.5) + 0.5 * tilt * (u - 0.5))).clamp(0.0, 1.0);
                let mut rgb = [0.0; 3];
                for ch in 0..3 {
                    rgb[ch] = (1.0 - t) * top[ch] + t * bottom[ch];
                }
                for b in &blobs {
                    let dist = ((u - b.cx).powi(2) + (v - b.cy).powi(2)).sqrt();
                    let a = b.opacity * sigmoid((b.radius - dist) / b.softness);
                    for ch in 0..3 {
                        rgb[ch] = (1.0 - a) * rgb[ch] + a * b.color[ch];
                    }
                }
                data.extend(rgb.iter().map(|c| c.clamp(0.0, 1.0)));
            }
        }
        Image::new(w, h, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_minima() {
        let s = TestFunction::sphere(5).unwrap();
        assert_eq!(s.value(&[0.0; 5]).unwrap(), 0.0);

        let r = TestFunction::new(TestFunctionKind::RosenbrockStandard, 2).unwrap();
        assert_eq!(r.value(&[1.0, 1.0]).unwrap(), 0.0);

        let p = TestFunction::rosenbrock(3).unwrap();
        assert_eq!(p.value(&[-1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(p.value(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn rosenbrock_variants_term_by_term() {
        let x = [0.5, -1.5, 2.0];
        let std_expected = 100.0 * (-1.5f64 - 0.25).powi(2)
            + (0.5f64).powi(2)
            + 100.0 * (2.0f64 - 2.25).powi(2)
            + (2.5f64).powi(2);
        let paper_expected = 100.0 * (-1.5f64 - 0.25).powi(2)
            + (0.75f64).powi(2)
            + 100.0 * (2.0f64 - 2.25).powi(2)
            + (1.0f64 - 2.25).powi(2);
        let r = TestFunction::new(TestFunctionKind::RosenbrockStandard, 3).unwrap();
        let p = TestFunction::rosenbrock(3).unwrap();
        assert!((r.value(&x).unwrap() - std_expected).abs() < 1e-12);
        assert!((p.value(&x).unwrap() - paper_expected).abs() < 1e-12);
    }

    #[test]
    fn clipping_is_flagged() {
        let s = TestFunction::sphere(2).unwrap();
        let e = s.evaluate(&[6.0, 0.0]).unwrap();
        assert!(e.clipped);
        assert!((e.value - 5.12 * 5.12).abs() < 1e-12);
        assert!(!s.evaluate(&[1.0, 0.0]).unwrap().clipped);
        assert!(s.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn goodness_is_negated_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = TestFunction::sphere(3).unwrap();
        let g = s.goodness_oracle();
        assert_eq!(g(&[0.0; 3]).unwrap(), 0.0);
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|_| latent_prior_sample(&s.prior(), 3, &mut rng).unwrap().into_inner())
            .collect();
        for w in pts.windows(2) {
            let lhs = g(&w[0]).unwrap() - g(&w[1]).unwrap();
            let rhs = s.value(&w[1]).unwrap() - s.value(&w[0]).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let argmax = (0..10).max_by(|&a, &b| g(&pts[a]).unwrap().total_cmp(&g(&pts[b]).unwrap())).unwrap();
        let argmin = (0..10).min_by(|&a, &b| s.value(&pts[a]).unwrap().total_cmp(&s.value(&pts[b]).unwrap())).unwrap();
        assert_eq!(argmax, argmin);
        for p in &pts {
            assert!(g(p).unwrap() <= 0.0);
        }
    }

    #[test]
    fn uniform_samples_in_bounds_and_reproducible() {
        let prior = TestFunction::sphere(16).unwrap().prior();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let z = latent_prior_sample(&prior, 16, &mut rng).unwrap();
            assert!(z.iter().all(|v| (-5.12..=5.12).contains(v)));
        }
        let a = latent_prior_sample(&prior, 16, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = latent_prior_sample(&prior, 16, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normal_samples_have_unit_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let mut sum = [0.0; 4];
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let z = latent_prior_sample(&PriorSpec::StandardNormal, 4, &mut rng).unwrap();
            for k in 0..4 {
                sum[k] += z[k];
                sq[k] += z[k] * z[k];
            }
        }
        for k in 0..4 {
            let mean = sum[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn render_is_deterministic_and_in_range() {
        let g = ProceduralGenerator::new(24, 16, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let z = latent_prior_sample(&PriorSpec::StandardNormal, 24, &mut rng).unwrap();
            let a = g.render(&z).unwrap();
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(a.to_rgb8(), g.render(&z).unwrap().to_rgb8());
            assert_eq!(a, g.render(&z).unwrap());
        }
    }

    #[test]
    fn render_is_continuous() {
        let g = ProceduralGenerator::new(16, 32, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let z = latent_prior_sample(&PriorSpec::StandardNormal, 16, &mut rng).unwrap();
            let base = g.render(&z).unwrap().mean();
            for k in 0..16 {
                let mut v = z.clone().into_inner();
                v[k] += 1e-6;
                let moved = g.render(&LatentVector::new(v).unwrap()).unwrap().mean();
                assert!((moved - base).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn render_rejects_small_inputs() {
        assert!(ProceduralGenerator::new(7, 64, 64).is_err());
        assert!(ProceduralGenerator::new(8, 4, 64).is_err());
        let g = ProceduralGenerator::new(8, 8, 8).unwrap();
        assert!(g.render(&LatentVector::zeros(9)).is_err());
    }
}
