//! The landmark perturbation network: model, losses, training and
//! gradient verification.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod loss;
pub mod model;
mod tape;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{LpnConfig, TrainOptions};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckOptions, GradCheckReport};
pub use loss::{loss_reg, loss_rec, total_loss, LossBreakdown};
pub use model::{LpnModel, WeightMatrix};
pub use train::{train, windowed_means, ClipSource, FixedClips, LossRecord, TrainOutcome};
