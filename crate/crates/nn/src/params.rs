use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{NnError, Result};

/// Handle to a tensor registered in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Trainable in principle but currently excluded from updates.
    Frozen,
    /// Running statistics and other state written by forward passes.
    Buffer,
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: ArrayD<f64>,
    pub kind: ParamKind,
}

/// Flat, ordered collection of named tensors owned by a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

pub enum Init {
    Zeros,
    Ones,
    Constant(f64),
    /// He-normal with the given fan-in.
    HeNormal { fan_in: usize },
    /// Glorot-uniform with the given fan-in and fan-out.
    GlorotUniform { fan_in: usize, fan_out: usize },
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>, kind: ParamKind) -> ParamId {
        self.entries.push(ParamEntry { name: name.into(), value, kind });
        ParamId(self.entries.len() - 1)
    }

    pub fn init(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Constant(c) => vec![c; n],
            Init::HeNormal { fan_in } => {
                let std = (2.0 / fan_in.max(1) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("finite std");
                (0..n).map(|_| normal.sample(rng)).collect()
            }
            Init::GlorotUniform { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-limit..limit)).collect()
            }
        };
        let value = ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape matches length");
        self.add(name, value, ParamKind::Trainable)
    }

    pub fn buffer(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> ParamId {
        self.add(name, value, ParamKind::Buffer)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.entries[id.0].kind
    }

    pub fn set_kind(&mut self, id: ParamId, kind: ParamKind) {
        self.entries[id.0].kind = kind;
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Number of scalar weights that are trainable or frozen (buffers excluded).
    pub fn weight_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind != ParamKind::Buffer)
            .map(|e| e.value.len())
            .sum()
    }

    /// Order-sensitive FNV-1a digest over names and bit patterns of every value.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::Fnv64::new();
        for e in &self.entries {
            h.write(e.name.as_bytes());
            for v in e.value.iter() {
                h.write(&v.to_bits().to_le_bytes());
            }
        }
        h.finish()
    }

    pub fn to_snapshot(&self) -> Vec<TensorRecord> {
        self.entries
            .iter()
            .map(|e| TensorRecord {
                name: e.name.clone(),
                kind: e.kind,
                shape: e.value.shape().to_vec(),
                data: e.value.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites values from a snapshot; names, order and shapes must match.
    pub fn load_snapshot(&mut self, records: &[TensorRecord]) -> Result<()> {
        if records.len() != self.entries.len() {
            return Err(NnError::Snapshot(format!(
                "expected {} tensors, found {}",
                self.entries.len(),
                records.len()
            )));
        }
        for (entry, rec) in self.entries.iter_mut().zip(records) {
            if entry.name != rec.name || entry.value.shape() != rec.shape.as_slice() {
                return Err(NnError::Snapshot(format!(
                    "tensor `{}` {:?} does not match stored `{}` {:?}",
                    entry.name,
                    entry.value.shape(),
                    rec.name,
                    rec.shape
                )));
            }
            entry.value = ArrayD::from_shape_vec(IxDyn(&rec.shape), rec.data.clone())
                .map_err(|e| NnError::Snapshot(e.to_string()))?;
            entry.kind = rec.kind;
        }
        Ok(())
    }
}

/// Serializable form of one named tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
