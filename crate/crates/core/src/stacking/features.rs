use ndarray::{s, Array2, ArrayView2};
use slideqc_nn::Fnv64;

use crate::data::imageio::resize_bilinear;
use crate::error::{Error, Result};
use crate::severity::SeverityClassifier;
use crate::types::RgbImage;

/// Anything that turns images into class-probability rows.
pub trait BaseModel {
    fn name(&self) -> String;
    fn input_side(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// Images are already `input_side` square.
    fn predict_proba(&self, images: &[&RgbImage]) -> Result<Array2<f64>>;
    fn fingerprint(&self) -> u64;
}

impl BaseModel for SeverityClassifier {
    fn name(&self) -> String {
        self.spec.name.name().to_string()
    }
    fn input_side(&self) -> usize {
        SeverityClassifier::input_side(self)
    }
    fn num_classes(&self) -> usize {
        self.num_classes
    }
    fn predict_proba(&self, images: &[&RgbImage]) -> Result<Array2<f64>> {
        SeverityClassifier::predict_proba(self, images)
    }
    fn fingerprint(&self) -> u64 {
        SeverityClassifier::fingerprint(self)
    }
}

/// Identifies an ordered list of base models.
pub fn order_fingerprint(fingerprints: &[u64]) -> u64 {
    let mut h = Fnv64::new();
    for f in fingerprints {
        h.write(&f.to_le_bytes());
    }
    h.finish()
}

pub fn bases_fingerprint(bases: &[&dyn BaseModel]) -> u64 {
    order_fingerprint(&bases.iter().map(|b| b.fingerprint()).collect::<Vec<_>>())
}

/// Stacked base-model probabilities. Model `i` owns columns
/// `i*C .. (i+1)*C`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatureMatrix {
    pub features: Array2<f64>,
    /// Empty when the rows are unlabelled.
    pub labels: Vec<usize>,
    pub num_models: usize,
    pub num_classes: usize,
    pub order_fingerprint: u64,
}

pub const BLOCK_TOLERANCE: f64 = 1e-6;

impl MetaFeatureMatrix {
    /// Joins per-model probability blocks. Every block row must be a
    /// distribution within [`BLOCK_TOLERANCE`].
    pub fn from_blocks(blocks: &[Array2<f64>], labels: Vec<usize>, order_fingerprint: u64) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::Empty("no base models".into()))?;
        let (n, c) = first.dim();
        if !labels.is_empty() && labels.len() != n {
            return Err(Error::SizeMismatch(format!("{} rows, {} labels", n, labels.len())));
        }
        let mut features = Array2::zeros((n, c * blocks.len()));
        for (m, b) in blocks.iter().enumerate() {
            if b.dim() != (n, c) {
                return Err(Error::ShapeMismatch(format!("block {m} is {:?}, expected {:?}", b.dim(), (n, c))));
            }
            for (r, row) in b.rows().into_iter().enumerate() {
                let sum = row.sum();
                if (sum - 1.0).abs() > BLOCK_TOLERANCE || row.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("block {m} row {r} is not a distribution (sum {sum})")));
                }
            }
            features.slice_mut(s![.., m * c..(m + 1) * c]).assign(b);
        }
        Ok(Self { features, labels, num_models: blocks.len(), num_classes: c, order_fingerprint })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, model: usize) -> ArrayView2<'_, f64> {
        let c = self.num_classes;
        self.features.slice(s![.., model * c..(model + 1) * c])
    }

    /// The first `m` models' columns. The order fingerprint is kept only
    /// when every model is kept.
    pub fn top(&self, m: usize, order_fingerprint: u64) -> Result<Self> {
        if m == 0 || m > self.num_models {
            return Err(Error::InvalidArgument(format!("top-{m} of {} base models", self.num_models)));
        }
        Ok(Self {
            features: self.features.slice(s![.., ..m * self.num_classes]).to_owned(),
            labels: self.labels.clone(),
            num_models: m,
            num_classes: self.num_classes,
            order_fingerprint: if m == self.num_models { self.order_fingerprint } else { order_fingerprint },
        })
    }

    /// Rows picked by index, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(ndarray::Axis(0), idx),
            labels: if self.labels.is_empty() { Vec::new() } else { idx.iter().map(|&i| self.labels[i]).collect() },
            ..self.clone()
        }
    }
}

fn sized<'a>(images: &[&'a RgbImage], side: usize) -> Vec<std::borrow::Cow<'a, RgbImage>> {
    images
        .iter()
        .map(|&img| {
            if img.shape()[..2] == [side, side] {
                std::borrow::Cow::Borrowed(img)
            } else {
                std::borrow::Cow::Owned(resize_bilinear(img, side, side))
            }
        })
        .collect()
}

/// Runs every base on `images` (resized per base) and stacks the outputs.
pub fn make_meta_features(bases: &[&dyn BaseModel], images: &[&RgbImage], labels: Vec<usize>) -> Result<MetaFeatureMatrix> {
    if bases.is_empty() {
        return Err(Error::Empty("no base models".into()));
    }
    let mut blocks = Vec::with_capacity(bases.len());
    for b in bases {
        let imgs = sized(images, b.input_side());
        let refs: Vec<&RgbImage> = imgs.iter().map(|c| c.as_ref()).collect();
        let p = if refs.is_empty() { Array2::zeros((0, b.num_classes())) } else { b.predict_proba(&refs)? };
        blocks.push(p);
    }
    MetaFeatureMatrix::from_blocks(&blocks, labels, bases_fingerprint(bases))
}
