//! Preference model: Bradley-Terry-Luce choices over a Gaussian-process
//! prior on goodness, fitted jointly with the kernel hyperparameters.

mod fit;
mod kernel;
mod likelihood;
mod model;

pub use fit::{map_fit, MAP_GRAD_TOL, MAP_MAX_ITERS};
pub use kernel::{kernel_matrix, kernel_value, KernelParams, DEFAULT_NOISE};
pub use likelihood::{
    btl_choice_log_prob, dataset_log_posterior, dataset_log_posterior_grad, log_hyperprior,
    LogPosterior, PointIndex, PreferenceRecord, BTL_SCALE, DEDUP_TOL, HYPERPRIOR_LOG_MEAN,
    HYPERPRIOR_LOG_VARIANCE,
};
pub use model::FittedModel;

pub(crate) use kernel::pairwise_sq_dists;
pub(crate) use likelihood::gaussian_log_prior;
