//! Contrastive and recommendation losses and the joint trainer.

mod losses;
mod trainer;

pub use losses::{infonce, infonce_grad, rec_loss, total_loss, InfoNceReduction, NORM_TOLERANCE};
pub use trainer::{evaluate_auc, loss_and_grad, train_joint, LossRecord, Positives, TrainConfig, TrainState};
