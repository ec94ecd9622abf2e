//! Losses, RMSprop, pre-training and test-time fine-tuning.

pub mod eval;
pub mod finetune;
pub mod loss;
pub mod optim;
pub mod pretrain;
pub mod tape_render;

pub use eval::{mean_psnr, score_views, ViewScore};
pub use finetune::{finetune, FinetuneConfig, FinetuneMode, FinetuneOutcome, Observation};
pub use loss::{loss_grot, loss_gscore, loss_rgb, DEFAULT_LAMBDA};
pub use optim::{RmsProp, RmsPropConfig};
pub use pretrain::{
    joint_loss, planned_steps, pretrain, GraspBatch, LogEntry, LossParts, TrainConfig, TrainOutcome,
};
pub use tape_render::{sample_rays, tape_render, SampledRays};
