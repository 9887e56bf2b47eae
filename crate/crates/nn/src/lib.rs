//! Reverse-mode automatic differentiation and the layer set needed by the
//! slideqc segmentation and classification models.
//!
//! Everything runs on the CPU in `f64`, which keeps finite-difference
//! gradient checks meaningful.

pub mod conv;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod params;

pub use conv::ConvGeom;
pub use graph::{BufferUpdate, Gradients, Graph, Var};
pub use layers::{BatchNorm2d, Conv2d, Linear, Mode};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Init, ParamEntry, ParamId, ParamKind, ParamStore, TensorRecord};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("snapshot mismatch: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Seeded generator used for all weight initialisation.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 64-bit FNV-1a, stable across platforms and toolchains.
#[derive(Debug, Clone)]
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

/// Applies queued running-statistic updates to the store.
pub fn apply_buffer_updates(store: &mut ParamStore, updates: Vec<BufferUpdate>) {
    for u in updates {
        *store.get_mut(u.id) = u.value;
    }
}
