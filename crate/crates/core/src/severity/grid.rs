use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use slideqc_nn::{loss, Graph, Optimizer, OptimizerKind};

use super::backbone::{Backbone, BackboneSpec};
use super::classifier::{argmax, build_classifier, SeverityClassifier};
use crate::config::LossKind;
use crate::data::imageio::resize_bilinear;
use crate::data::{augment, sample_seed, AugmentParams};
use crate::error::{Error, Result};
use crate::metrics::roc_auc_multiclass;
use crate::types::{images_to_batch, RgbImage, Severity};

/// A labelled severity image.
pub type LabeledImage = (RgbImage, Severity);

/// One grid cell's identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridKey {
    pub backbone: Backbone,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
}

impl GridKey {
    /// Lexicographic key over the printed names.
    pub fn name_key(&self) -> (String, String, String) {
        (self.backbone.name().into(), self.optimizer.name().into(), self.loss.name().into())
    }
}

impl std::fmt::Display for GridKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.backbone, self.optimizer, self.loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub backbone: Backbone,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    #[serde(rename = "lr")]
    pub learning_rate: f64,
    pub val_loss: f64,
    pub test_accuracy: f64,
    pub roc_score: f64,
    pub checkpoint: Option<String>,
}

impl GridResult {
    pub fn key(&self) -> GridKey {
        GridKey { backbone: self.backbone, optimizer: self.optimizer, loss: self.loss }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub key: GridKey,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridOutcome {
    pub results: Vec<GridResult>,
    pub failures: Vec<GridFailure>,
}

/// Backbones x optimizers x losses.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub backbones: Vec<BackboneSpec>,
    pub optimizers: Vec<OptimizerKind>,
    pub losses: Vec<LossKind>,
}

impl GridSpec {
    /// All ten backbones, Adam/Adamax/RMSprop, CCE/KLD.
    pub fn full(desk_substitute: bool) -> Self {
        Self {
            backbones: Backbone::ALL
                .into_iter()
                .map(|b| if desk_substitute { BackboneSpec::desk(b) } else { BackboneSpec::pretrained(b) })
                .collect(),
            optimizers: vec![OptimizerKind::Adam, OptimizerKind::Adamax, OptimizerKind::Rmsprop],
            losses: vec![LossKind::CategoricalCrossEntropy, LossKind::KlDivergence],
        }
    }

    pub fn combinations(&self) -> Vec<(BackboneSpec, OptimizerKind, LossKind)> {
        let mut out = Vec::new();
        for &b in &self.backbones {
            for &o in &self.optimizers {
                for &l in &self.losses {
                    out.push((b, o, l));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.backbones.len() * self.optimizers.len() * self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Train backbone weights too instead of only the head.
    pub fine_tune: bool,
    /// On-the-fly training augmentation; `rescale` should be 1 since images are in `[0, 1]`.
    pub augment: Option<AugmentParams>,
    /// Where trained classifiers are written, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
    /// Results CSV; rows already present are skipped, new rows are written after each cell.
    pub results_csv: Option<PathBuf>,
}

impl Default for GridSettings {
    /// 25 epochs, batch 32, learning rate 1e-4, frozen backbones.
    fn default() -> Self {
        Self {
            epochs: 25,
            batch_size: 32,
            learning_rate: 1e-4,
            seed: 0,
            fine_tune: false,
            augment: None,
            checkpoint_dir: None,
            results_csv: None,
        }
    }
}

fn one_hot(labels: &[Severity]) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), Severity::COUNT), |(i, c)| f64::from(u8::from(labels[i].index() == c)))
}

fn class_loss(g: &mut Graph, probs: slideqc_nn::Var, targets: slideqc_nn::Var, kind: LossKind) -> Result<slideqc_nn::Var> {
    match kind {
        LossKind::CategoricalCrossEntropy => Ok(loss::categorical_cross_entropy(g, probs, targets)),
        LossKind::KlDivergence => Ok(loss::kl_divergence(g, probs, targets)),
        other => Err(Error::InvalidArgument(format!("{other} is not a classification loss"))),
    }
}

/// Loss value of probability rows against labels.
pub fn classification_loss(probs: &Array2<f64>, labels: &[Severity], kind: LossKind) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.constant(probs.clone().into_dyn());
    let t = g.constant(one_hot(labels).into_dyn());
    let l = class_loss(&mut g, p, t, kind)?;
    Ok(g.scalar(l))
}

fn resized(images: &[LabeledImage], side: usize) -> Vec<RgbImage> {
    images
        .iter()
        .map(|(img, _)| if img.shape()[..2] == [side, side] { img.clone() } else { resize_bilinear(img, side, side) })
        .collect()
}

/// Trains a classifier head (or the whole desk network with `fine_tune`) on
/// `train`. Images must already match the classifier's input side.
pub fn train_classifier(
    clf: &mut SeverityClassifier,
    train: &[(&RgbImage, Severity)],
    optimizer_kind: OptimizerKind,
    loss_kind: LossKind,
    settings: &GridSettings,
) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Empty("no training images".into()));
    }
    let images: Vec<&RgbImage> = train.iter().map(|(i, _)| *i).collect();
    let labels: Vec<Severity> = train.iter().map(|(_, l)| *l).collect();
    let base_features = clf.features(&images)?;
    clf.fit_standardizer(&base_features);
    clf.set_fine_tune(settings.fine_tune).or_else(|e| if settings.fine_tune { Err(e) } else { Ok(()) })?;
    let targets = one_hot(&labels);
    let mut opt = Optimizer::new(optimizer_kind);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..settings.epochs {
        order.shuffle(&mut crate::data::seeded(settings.seed ^ (epoch as u64 + 1).wrapping_mul(0x2545_F491_4F6C_DD1D)));
        let epoch_images: Option<Vec<RgbImage>> = match &settings.augment {
            Some(params) => Some(
                images
                    .iter()
                    .enumerate()
                    .map(|(i, img)| {
                        let seed = sample_seed(settings.seed ^ epoch as u64, &i.to_string());
                        augment(img, None, params, seed).map(|a| a.image)
                    })
                    .collect::<Result<_>>()?,
            ),
            None => None,
        };
        let epoch_features = match (&epoch_images, settings.fine_tune) {
            (Some(imgs), false) => Some(clf.features(&imgs.iter().collect::<Vec<_>>())?),
            _ => None,
        };
        for chunk in order.chunks(settings.batch_size.max(1)) {
            let mut g = Graph::new();
            let probs = if settings.fine_tune {
                let batch: Vec<&RgbImage> = chunk
                    .iter()
                    .map(|&i| epoch_images.as_ref().map_or(images[i], |v| &v[i]))
                    .collect();
                let x = g.constant(images_to_batch(&batch));
                clf.image_forward(&mut g, x)?
            } else {
                let src = epoch_features.as_ref().unwrap_or(&base_features);
                let f = g.constant(src.select(Axis(0), chunk).into_dyn());
                clf.head_forward(&mut g, f)
            };
            let t = g.constant(targets.select(Axis(0), chunk).into_dyn());
            let l = class_loss(&mut g, probs, t, loss_kind)?;
            let lv = g.scalar(l);
            if !lv.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1, detail: format!("classifier loss is {lv}") });
            }
            let grads = g.backward(l);
            opt.step(&mut clf.store, grads.params(), settings.learning_rate);
        }
    }
    Ok(())
}

/// Accuracy, multiclass ROC AUC and loss of `clf` on `data`.
pub fn score_classifier(clf: &SeverityClassifier, data: &[(&RgbImage, Severity)], loss_kind: LossKind) -> Result<(f64, f64, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("no evaluation images".into()));
    }
    let images: Vec<&RgbImage> = data.iter().map(|(i, _)| *i).collect();
    let labels: Vec<Severity> = data.iter().map(|(_, l)| *l).collect();
    let probs = clf.predict_proba(&images)?;
    let correct = probs
        .rows()
        .into_iter()
        .zip(&labels)
        .filter(|(r, l)| argmax(&r.to_vec()) == l.index())
        .count();
    let idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let roc = roc_auc_multiclass(probs.view(), &idx)?;
    let lv = classification_loss(&probs, &labels, loss_kind)?;
    Ok((correct as f64 / data.len() as f64, roc, lv))
}

pub fn checkpoint_name(key: &GridKey) -> String {
    format!("{}_{}_{}.json", key.backbone.name().to_lowercase(), key.optimizer.name(), key.loss.name())
}

fn run_cell(
    spec: BackboneSpec,
    optimizer: OptimizerKind,
    loss_kind: LossKind,
    train: &[(&RgbImage, Severity)],
    valid: &[(&RgbImage, Severity)],
    test: &[(&RgbImage, Severity)],
    settings: &GridSettings,
) -> Result<GridResult> {
    let key = GridKey { backbone: spec.name, optimizer, loss: loss_kind };
    let mut clf = build_classifier(spec, Severity::COUNT, settings.seed)?;
    train_classifier(&mut clf, train, optimizer, loss_kind, settings)?;
    let (_, _, val_loss) = score_classifier(&clf, valid, loss_kind)?;
    let (test_accuracy, roc_score, _) = score_classifier(&clf, test, loss_kind)?;
    let checkpoint = match &settings.checkpoint_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let name = checkpoint_name(&key);
            clf.save(&dir.join(&name))?;
            Some(name)
        }
        None => None,
    };
    Ok(GridResult {
        backbone: spec.name,
        optimizer,
        loss: loss_kind,
        learning_rate: settings.learning_rate,
        val_loss,
        test_accuracy,
        roc_score,
        checkpoint,
    })
}

/// Trains and scores every grid cell. Validation loss is measured on `valid`,
/// or on `test` when no validation set is given. Failing cells are recorded
/// in the outcome and the grid carries on.
pub fn run_grid(
    train: &[LabeledImage],
    valid: Option<&[LabeledImage]>,
    test: &[LabeledImage],
    grid: &GridSpec,
    settings: &GridSettings,
) -> Result<GridOutcome> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("grid needs training and test images".into()));
    }
    let mut done: BTreeMap<GridKey, GridResult> = BTreeMap::new();
    if let Some(path) = &settings.results_csv {
        if path.exists() {
            for r in read_grid_csv(path)? {
                done.insert(r.key(), r);
            }
        }
    }
    let mut by_side: BTreeMap<usize, (Vec<RgbImage>, Vec<RgbImage>, Vec<RgbImage>)> = BTreeMap::new();
    let mut outcome = GridOutcome::default();
    let mut seen = std::collections::HashSet::new();
    for (spec, optimizer, loss_kind) in grid.combinations() {
        let key = GridKey { backbone: spec.name, optimizer, loss: loss_kind };
        if !seen.insert(key) {
            continue;
        }
        if let Some(r) = done.get(&key) {
            outcome.results.push(r.clone());
            continue;
        }
        let side = spec.input_side;
        let sets = by_side.entry(side).or_insert_with(|| {
            (resized(train, side), valid.map_or_else(Vec::new, |v| resized(v, side)), resized(test, side))
        });
        let tr: Vec<(&RgbImage, Severity)> = sets.0.iter().zip(train).map(|(i, (_, l))| (i, *l)).collect();
        let te: Vec<(&RgbImage, Severity)> = sets.2.iter().zip(test).map(|(i, (_, l))| (i, *l)).collect();
        let va: Vec<(&RgbImage, Severity)> = match valid {
            Some(v) => sets.1.iter().zip(v).map(|(i, (_, l))| (i, *l)).collect(),
            None => te.clone(),
        };
        match run_cell(spec, optimizer, loss_kind, &tr, &va, &te, settings) {
            Ok(r) => {
                outcome.results.push(r.clone());
                done.insert(key, r);
                if let Some(path) = &settings.results_csv {
                    write_grid_csv(&done.values().cloned().collect::<Vec<_>>(), path)?;
                }
            }
            Err(e) => outcome.failures.push(GridFailure { key, message: e.to_string() }),
        }
    }
    Ok(outcome)
}

pub fn write_grid_csv(results: &[GridResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grid_csv(path: &Path) -> Result<Vec<GridResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::MissingFile(path.to_path_buf()),
        _ => Error::Csv(e),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
