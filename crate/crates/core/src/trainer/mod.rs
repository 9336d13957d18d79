//! Maximum-likelihood training of the energy network with Langevin
//! negatives, a replay buffer and Adam.

mod adam;
mod contrastive;
mod train;

pub use adam::{AdamState, DEFAULT_LEARNING_RATE};
pub use contrastive::{contrastive_grad, contrastive_grad_weighted, contrastive_weights, perturb_positives, ContrastiveStats};
pub use train::{image_to_sample, LogRow, NegativeSigma, NegativeStart, StepRule, TrainConfig, Trainer, LOG_HEADER};
