//! Three-class severity grading: transfer-learning classifiers, the
//! backbone x optimizer x loss grid and base-model selection.

mod backbone;
mod classifier;
mod grid;
mod select;

pub use backbone::{Backbone, BackboneSpec};
pub use classifier::{argmax, build_classifier, DeskBackbone, Extractor, FeatureExtractor, SeverityClassifier};
pub use grid::{
    checkpoint_name, classification_loss, read_grid_csv, run_grid, score_classifier, train_classifier,
    write_grid_csv, GridFailure, GridKey, GridOutcome, GridResult, GridSettings, GridSpec, LabeledImage,
};
pub use select::{rank_order, select_base_models};
