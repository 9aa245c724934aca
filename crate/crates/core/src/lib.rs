//! Preferential Bayesian optimization over a latent space driven by
//! multi-way sliders.
//!
//! A user is shown `c` candidate latent vectors, blends them with sliders
//! and optionally edits the blended image. Each choice becomes a
//! Bradley-Terry-Luce observation; a Gaussian-process prior over the hidden
//! goodness function is fitted by MAP estimation, and the next candidates
//! are picked by a content-aware expected-improvement criterion with the
//! constant-liar batch heuristic.
//!
//! Module map:
//!
//! - [`preference`]: kernel, BTL likelihood, MAP fit and GP prediction.
//! - [`acquisition`]: EI, content-aware EI, multi-start maximization and
//!   constant-liar batches.
//! - [`guidance`]: images, edit operations, masks and the content term.
//! - [`generators`]: benchmark functions, prior sampling and a procedural
//!   image generator.
//! - [`session`]: the interactive loop.
//! - [`harness`]: the simulated-user benchmark.

pub mod acquisition;
pub mod error;
pub mod generators;
pub mod guidance;
pub mod harness;
pub mod latent;
pub mod optim;
pub mod preference;
pub mod session;

pub use acquisition::{AcquisitionConfig, PriorSpec};
pub use error::{Error, Result};
pub use generators::{Generator, ProceduralGenerator, TestFunction, TestFunctionKind};
pub use guidance::{EditOp, GuidanceState, Image, Region};
pub use harness::{Method, StudyConfig, StudyResult};
pub use latent::LatentVector;
pub use preference::{FittedModel, KernelParams, PreferenceRecord};
pub use session::{CandidateStrategy, Session, SessionConfig};
