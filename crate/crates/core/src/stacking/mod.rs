//! Stacked generalisation over severity classifiers: base-model probability
//! features, ten meta learners and the top-k comparison sweep.

mod ensemble;
mod features;
mod learners;
pub mod tree;

pub use ensemble::{
    build_severity_stack, mean_vote_accuracy, out_of_fold_features, run_stacking_comparison, stacked_predict,
    stacked_predict_batch, stratified_folds, ComparisonTable, MetaProtocol, SeverityStack, StackBundle, StackedModel,
};
pub use features::{bases_fingerprint, make_meta_features, order_fingerprint, BaseModel, MetaFeatureMatrix, BLOCK_TOLERANCE};
pub use learners::{accuracy, argmax as argmax_of, fit_meta_learner, gamma_scale, MetaLearnerKind, MetaModel};
