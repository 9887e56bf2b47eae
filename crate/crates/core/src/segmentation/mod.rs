//! UNet-family artifact segmenters, their training loop and schedulers.

pub mod blocks;
mod crossval;
pub mod double_unet;
mod gradcheck;
mod model;
pub mod resunet;
mod schedule;
mod train;
pub mod unet;

pub use crossval::{run_crossval, FoldOutcome};
pub use gradcheck::{gradient_check, GradProbe};
pub use model::{
    build_double_unet, build_resunet_pp, build_unet_baseline, predict_mask, Network, PredictedMask, SegForward, SegModel,
};
pub use resunet::ResUnetOptions;
pub use schedule::{early_stop_step, plateau_step, EarlyStopState, PlateauState};
pub use train::{
    evaluate_segmenter, per_image_iou, predict_all, segmentation_loss, train_segmenter, train_segmenter_with, EpochRecord,
    StopReason, TrainHistory, TrainOptions,
};
