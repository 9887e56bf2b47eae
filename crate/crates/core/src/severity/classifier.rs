use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use slideqc_nn::{Conv2d, Graph, Linear, ParamKind, ParamStore, TensorRecord, Var};

use super::backbone::BackboneSpec;
use crate::error::{Error, Result};
use crate::types::{images_to_batch, RgbImage, Severity};

/// A feature extractor supplied from outside, e.g. a published pretrained
/// network run by another runtime.
pub trait FeatureExtractor: Send + Sync {
    fn input_side(&self) -> usize;
    fn feature_dim(&self) -> usize;
    /// One feature row per image.
    fn extract(&self, images: &[&RgbImage]) -> Result<Array2<f64>>;
}

/// Small convolutional stand-in: average-pool stem, three conv+ReLU stages
/// with max pooling, global average pooling.
#[derive(Debug, Clone)]
pub struct DeskBackbone {
    pub convs: Vec<Conv2d>,
    pub stem_pool: usize,
}

const DESK_WIDTHS: [usize; 3] = [8, 16, 24];

impl DeskBackbone {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let mut convs = Vec::new();
        let mut cin = 3;
        for (i, &c) in DESK_WIDTHS.iter().enumerate() {
            convs.push(Conv2d::same(store, rng, &format!("backbone.conv{i}"), cin, c, 3));
            cin = c;
        }
        Self { convs, stem_pool: 4 }
    }

    /// Pooled activations of every stage, concatenated.
    pub fn feature_dim(&self) -> usize {
        DESK_WIDTHS.iter().sum()
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut y = g.avg_pool(x, self.stem_pool);
        let mut pooled = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            y = conv.forward(g, store, y);
            y = g.relu(y);
            let p = g.global_avg_pool(y);
            pooled.push(g.broadcast_spatial(p, 1, 1));
            if i + 1 < self.convs.len() {
                y = g.max_pool2(y);
            }
        }
        let all = g.concat(&pooled);
        g.global_avg_pool(all)
    }
}

#[derive(Clone)]
pub enum Extractor {
    Desk(DeskBackbone),
    External(Arc<dyn FeatureExtractor>),
}

impl fmt::Debug for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extractor::Desk(d) => f.debug_tuple("Desk").field(d).finish(),
            Extractor::External(e) => write!(f, "External(dim {})", e.feature_dim()),
        }
    }
}

/// Backbone + feature standardisation + linear softmax head.
#[derive(Debug, Clone)]
pub struct SeverityClassifier {
    pub spec: BackboneSpec,
    pub num_classes: usize,
    pub extractor: Extractor,
    pub head: Linear,
    /// Frozen per-feature mean and standard deviation fitted on training features.
    pub feature_mean: slideqc_nn::ParamId,
    pub feature_std: slideqc_nn::ParamId,
    pub store: ParamStore,
}

fn backbone_seed(spec: &BackboneSpec) -> u64 {
    0x5eed_0000 + spec.name.index() as u64
}

/// Desk classifier for `spec`. Backbone weights are a fixed function of the
/// backbone name (the stand-in's "pretraining"); the head draws from `seed`.
pub fn build_classifier(spec: BackboneSpec, num_classes: usize, seed: u64) -> Result<SeverityClassifier> {
    if !spec.desk_substitute {
        return Err(Error::Model(format!(
            "published weights for {} are not bundled; supply them with SeverityClassifier::with_extractor",
            spec.name
        )));
    }
    if spec.input_side != spec.name.input_side() {
        return Err(Error::InvalidArgument(format!(
            "{} takes {}x{} input, spec says {}",
            spec.name,
            spec.name.input_side(),
            spec.name.input_side(),
            spec.input_side
        )));
    }
    let mut store = ParamStore::new();
    let mut brng = slideqc_nn::rng(backbone_seed(&spec));
    let backbone = DeskBackbone::new(&mut store, &mut brng);
    for id in store.ids().collect::<Vec<_>>() {
        store.set_kind(id, ParamKind::Frozen);
    }
    SeverityClassifier::assemble(spec, num_classes, Extractor::Desk(backbone), store, seed)
}

impl SeverityClassifier {
    fn assemble(spec: BackboneSpec, num_classes: usize, extractor: Extractor, mut store: ParamStore, seed: u64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("a classifier needs at least 2 classes".into()));
        }
        let dim = match &extractor {
            Extractor::Desk(d) => d.feature_dim(),
            Extractor::External(e) => e.feature_dim(),
        };
        let mut rng = slideqc_nn::rng(seed);
        let feature_mean = store.add("head.feature_mean", ndarray::ArrayD::zeros(vec![dim]), ParamKind::Frozen);
        let feature_std = store.add("head.feature_std", ndarray::ArrayD::ones(vec![dim]), ParamKind::Frozen);
        let head = Linear::new(&mut store, &mut rng, "head.dense", dim, num_classes);
        Ok(Self { spec, num_classes, extractor, head, feature_mean, feature_std, store })
    }

    /// Classifier over an externally supplied feature extractor.
    pub fn with_extractor(
        spec: BackboneSpec,
        extractor: Arc<dyn FeatureExtractor>,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if extractor.input_side() != spec.input_side {
            return Err(Error::InvalidArgument(format!(
                "extractor takes {} pixels, spec says {}",
                extractor.input_side(),
                spec.input_side
            )));
        }
        Self::assemble(spec, num_classes, Extractor::External(extractor), ParamStore::new(), seed)
    }

    pub fn input_side(&self) -> usize {
        self.spec.input_side
    }

    pub fn is_desk(&self) -> bool {
        matches!(self.extractor, Extractor::Desk(_))
    }

    /// Makes backbone weights trainable (desk backbones only).
    pub fn set_fine_tune(&mut self, on: bool) -> Result<()> {
        let Extractor::Desk(d) = &self.extractor else {
            return Err(Error::Model("external extractors cannot be fine-tuned".into()));
        };
        let kind = if on { ParamKind::Trainable } else { ParamKind::Frozen };
        for c in &d.convs {
            self.store.set_kind(c.weight, kind);
            if let Some(b) = c.bias {
                self.store.set_kind(b, kind);
            }
        }
        Ok(())
    }

    fn check_images(&self, images: &[&RgbImage]) -> Result<()> {
        let side = self.input_side();
        for img in images {
            if img.shape() != [side, side, 3] {
                return Err(Error::ShapeMismatch(format!(
                    "{} expects {side}x{side}x3 images, got {:?}",
                    self.spec.name,
                    img.shape()
                )));
            }
        }
        Ok(())
    }

    /// Raw backbone features, one row per image.
    pub fn features(&self, images: &[&RgbImage]) -> Result<Array2<f64>> {
        self.check_images(images)?;
        if images.is_empty() {
            return Ok(Array2::zeros((0, self.feature_dim())));
        }
        match &self.extractor {
            Extractor::Desk(d) => {
                let mut out = Vec::with_capacity(images.len());
                for chunk in images.chunks(16) {
                    let mut g = Graph::new();
                    let x = g.constant(images_to_batch(chunk));
                    let f = d.forward(&mut g, &self.store, x);
                    out.push(g.value(f).clone().into_dimensionality::<ndarray::Ix2>().expect("[N,F]"));
                }
                let views: Vec<_> = out.iter().map(|a| a.view()).collect();
                Ok(ndarray::concatenate(Axis(0), &views).expect("consistent widths"))
            }
            Extractor::External(e) => e.extract(images),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.store.get(self.feature_mean).len()
    }

    /// Sets the standardisation statistics from training features.
    pub fn fit_standardizer(&mut self, features: &Array2<f64>) {
        let mean = features.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(features.ncols()));
        let std = features.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-8 { s } else { 1.0 });
        *self.store.get_mut(self.feature_mean) = mean.into_dyn();
        *self.store.get_mut(self.feature_std) = std.into_dyn();
    }

    /// Head on a node of raw features `[N,F]`; returns probabilities `[N,C]`.
    pub(crate) fn head_forward(&self, g: &mut Graph, feats: Var) -> Var {
        let n = g.value(feats).shape()[0];
        let mean = self.store.get(self.feature_mean).clone().into_dimensionality::<ndarray::Ix1>().expect("1-d");
        let std = self.store.get(self.feature_std).clone().into_dimensionality::<ndarray::Ix1>().expect("1-d");
        let mean_rows = g.constant(mean.broadcast((n, mean.len())).expect("row broadcast").to_owned().into_dyn());
        let std_rows = g.constant(std.broadcast((n, std.len())).expect("row broadcast").to_owned().into_dyn());
        let centred = g.sub(feats, mean_rows);
        let z = g.div(centred, std_rows);
        let logits = self.head.forward(g, &self.store, z);
        g.softmax(logits)
    }

    /// Full forward from an image batch node (desk backbones only).
    pub(crate) fn image_forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let Extractor::Desk(d) = &self.extractor else {
            return Err(Error::Model("external extractors have no differentiable forward".into()));
        };
        let f = d.forward(g, &self.store, x);
        Ok(self.head_forward(g, f))
    }

    pub fn predict_from_features(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut g = Graph::new();
        let f = g.constant(features.clone().into_dyn());
        let p = self.head_forward(&mut g, f);
        g.value(p).clone().into_dimensionality().expect("[N,C]")
    }

    /// Class probabilities, one row per image; rows sum to 1.
    pub fn predict_proba(&self, images: &[&RgbImage]) -> Result<Array2<f64>> {
        let f = self.features(images)?;
        Ok(self.predict_from_features(&f))
    }

    pub fn predict(&self, images: &[&RgbImage]) -> Result<Vec<Severity>> {
        let p = self.predict_proba(images)?;
        Ok(p.rows().into_iter().map(|r| Severity::from_index(argmax(&r.to_vec())).unwrap_or(Severity::Low)).collect())
    }

    pub fn fingerprint(&self) -> u64 {
        self.store.fingerprint()
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.is_desk() {
            return Err(Error::Model("only desk classifiers serialise their backbone".into()));
        }
        Ok(serde_json::to_string(&ClassifierCheckpoint {
            format: CLASSIFIER_FORMAT.into(),
            spec: self.spec,
            num_classes: self.num_classes,
            tensors: self.store.to_snapshot(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: ClassifierCheckpoint = serde_json::from_str(text)?;
        if ck.format != CLASSIFIER_FORMAT {
            return Err(Error::Model(format!("unsupported classifier format `{}`", ck.format)));
        }
        let mut c = build_classifier(ck.spec, ck.num_classes, 0)?;
        c.store.load_snapshot(&ck.tensors)?;
        Ok(c)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

const CLASSIFIER_FORMAT: &str = "slideqc-severity-1";

#[derive(Serialize, Deserialize)]
struct ClassifierCheckpoint {
    format: String,
    spec: BackboneSpec,
    num_classes: usize,
    tensors: Vec<TensorRecord>,
}

/// Index of the largest value; the first wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
