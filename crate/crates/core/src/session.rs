//! The interactive loop: show `c` candidates, record the slider blend the
//! user settles on, refit the preference model and pick the next
//! candidates. The chosen blend always becomes the first candidate of the
//! next round.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{select_candidates, AcquisitionConfig, PriorSpec};
use crate::error::{Error, Result};
use crate::generators::{latent_prior_sample, Generator};
use crate::guidance::{EditOp, GuidanceState, Image};
use crate::latent::{check_dim, LatentVector};
use crate::preference::{map_fit, FittedModel, PreferenceRecord};

/// Normalized slider values; non-negative and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `sliders / Σ sliders`.
pub fn blend_weights(sliders: &[f64]) -> Result<Weights> {
    if sliders.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::DegenerateSliders);
    }
    let total: f64 = sliders.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSliders);
    }
    Ok(Weights(sliders.iter().map(|s| s / total).collect()))
}

/// Convex combination `Σ a_j z_j`.
pub fn blended_latent(candidates: &[LatentVector], weights: &Weights) -> Result<LatentVector> {
    check_dim(candidates.len(), weights.len())?;
    let dim = candidates.first().ok_or_else(|| Error::invalid("no candidates to blend"))?.dim();
    let mut out = vec![0.0; dim];
    for (c, w) in candidates.iter().zip(weights.as_slice()) {
        check_dim(dim, c.dim())?;
        if *w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(c.iter()) {
            *o += w * v;
        }
    }
    // A pure vertex blend reproduces the vertex bit for bit.
    if let Some(i) = weights.as_slice().iter().position(|w| *w == 1.0) {
        return Ok(candidates[i].clone());
    }
    LatentVector::new(out)
}

/// Where new candidates come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CandidateStrategy {
    /// Constant-liar batches of the content-aware acquisition.
    #[default]
    Acquisition,
    /// Independent prior draws; no model is fitted.
    Random,
}

#[derive(Clone)]
pub struct SessionConfig {
    pub dimension: usize,
    pub candidate_count: usize,
    pub prior: PriorSpec,
    pub acquisition: AcquisitionConfig,
    pub generator: Option<Arc<dyn Generator>>,
    pub seed: u64,
    pub strategy: CandidateStrategy,
}

impl SessionConfig {
    pub fn new(dimension: usize, prior: PriorSpec) -> Self {
        Self {
            dimension,
            candidate_count: 4,
            prior,
            acquisition: AcquisitionConfig::default(),
            generator: None,
            seed: 0,
            strategy: CandidateStrategy::Acquisition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if self.candidate_count < 2 {
            return Err(Error::invalid("a session needs at least two candidates"));
        }
        self.prior.search_box(self.dimension)?;
        self.acquisition.validate()?;
        if let Some(g) = &self.generator {
            check_dim(self.dimension, g.dimension())?;
        }
        Ok(())
    }
}

impl fmt::Debug for SessionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionConfig")
            .field("dimension", &self.dimension)
            .field("candidate_count", &self.candidate_count)
            .field("prior", &self.prior)
            .field("acquisition", &self.acquisition)
            .field("generator", &self.generator.as_ref().map(|g| g.resolution()))
            .field("seed", &self.seed)
            .field("strategy", &self.strategy)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    config: SessionConfig,
    iteration: usize,
    candidates: Vec<LatentVector>,
    dataset: Vec<PreferenceRecord>,
    /// `dataset` mapped to the unit cube of the prior's search box.
    unit_dataset: Vec<PreferenceRecord>,
    model: Option<FittedModel>,
    guidance: Option<GuidanceState>,
    rng: ChaCha8Rng,
}

impl Session {
    /// Starts a session with `c` candidates drawn from the prior.
    pub fn create(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let candidates = (0..config.candidate_count)
            .map(|_| latent_prior_sample(&config.prior, config.dimension, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            iteration: 0,
            candidates,
            dataset: Vec::new(),
            unit_dataset: Vec::new(),
            model: None,
            guidance: None,
            rng,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn candidates(&self) -> &[LatentVector] {
        &self.candidates
    }

    pub fn dataset(&self) -> &[PreferenceRecord] {
        &self.dataset
    }

    /// The latest fit, in unit coordinates of the prior's search box.
    pub fn model(&self) -> Option<&FittedModel> {
        self.model.as_ref()
    }

    pub fn guidance(&self) -> Option<&GuidanceState> {
        self.guidance.as_ref()
    }

    pub fn blend(&self, sliders: &[f64]) -> Result<LatentVector> {
        check_dim(self.candidates.len(), sliders.len())?;
        blended_latent(&self.candidates, &blend_weights(sliders)?)
    }

    pub fn render(&self, z: &LatentVector) -> Result<Image> {
        self.config
            .generator
            .as_ref()
            .ok_or_else(|| Error::invalid("session has no generator"))?
            .render(z)
    }

    /// One round of the loop. On error the session is left unchanged.
    pub fn step(&mut self, sliders: &[f64], edits: &[EditOp]) -> Result<()> {
        let chosen = self.blend(sliders)?;
        if !edits.is_empty() && self.config.generator.is_none() {
            return Err(Error::invalid("edits need a session generator"));
        }
        let record = PreferenceRecord::new(chosen.clone(), self.candidates.clone())?;
        let unit_record = PreferenceRecord::new(
            self.config.prior.to_unit(&chosen)?,
            self.candidates
                .iter()
                .map(|c| self.config.prior.to_unit(c))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let mut unit_dataset = self.unit_dataset.clone();
        unit_dataset.push(unit_record);

        let guidance = match &self.config.generator {
            Some(g) => Some(GuidanceState::new(&g.render(&chosen)?).apply_all(edits)?),
            None => None,
        };

        let mut rng = self.rng.clone();
        let wanted = self.config.candidate_count - 1;
        let (model, fresh) = match self.config.strategy {
            CandidateStrategy::Acquisition => {
                let model = map_fit(&unit_dataset, self.model.as_ref())?;
                let fresh = select_candidates(
                    &model,
                    wanted,
                    &self.config.acquisition,
                    &self.config.prior,
                    guidance.as_ref(),
                    self.config.generator.as_deref(),
                    &mut rng,
                )?;
                (Some(model), fresh)
            }
            CandidateStrategy::Random => {
                let fresh = (0..wanted)
                    .map(|_| latent_prior_sample(&self.config.prior, self.config.dimension, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                (None, fresh)
            }
        };

        let mut candidates = Vec::with_capacity(self.config.candidate_count);
        candidates.push(chosen);
        candidates.extend(fresh);

        self.dataset.push(record);
        self.unit_dataset = unit_dataset;
        self.model = model;
        self.guidance = guidance;
        self.candidates = candidates;
        self.rng = rng;
        self.iteration += 1;
        Ok(())
    }
}
