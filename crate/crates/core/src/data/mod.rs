//! Dataset loading, splitting, k-fold partitioning and augmentation.

mod augment;
mod balance;
pub mod imageio;
mod kfold;
mod loader;
mod split;

pub use augment::{augment, AugmentDraw, AugmentParams, Augmented};
pub use balance::oversample_to_balance;
pub use kfold::{fold_label, make_kfold, make_kfold_ids, FoldPlan, Rotation};
pub use loader::{load_seg_pairs, load_severity_samples};
pub use split::{split_dataset, split_ids, SplitSpec};

/// Per-sample seed derived from the run seed and a tile id, independent of
/// iteration order.
pub fn sample_seed(global: u64, tile_id: &str) -> u64 {
    let mut h = slideqc_nn::Fnv64::new();
    h.write(&global.to_le_bytes());
    h.write(tile_id.as_bytes());
    h.finish()
}

pub(crate) fn seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
