use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{bases_fingerprint, make_meta_features, order_fingerprint, BaseModel, MetaFeatureMatrix};
use super::learners::{accuracy, argmax, fit_meta_learner, MetaLearnerKind, MetaModel};
use crate::error::{Error, Result};
use crate::severity::{build_classifier, train_classifier, BackboneSpec, GridResult, GridSettings, SeverityClassifier};
use crate::types::{RgbImage, Severity};

/// How the meta learner's training rows are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaProtocol {
    /// Bases retrained on `folds - 1` folds of the training split predict
    /// the held-out fold; the test split is only used for scoring.
    OutOfFold { folds: usize },
    /// Meta learner fit and scored on the test-split predictions.
    TestSplit,
}

impl Default for MetaProtocol {
    fn default() -> Self {
        MetaProtocol::OutOfFold { folds: 5 }
    }
}

const STACK_FORMAT: &str = "slideqc-stack-1";

/// A meta learner together with the base order it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub format: String,
    pub meta: MetaModel,
    pub order_fingerprint: u64,
    pub base_names: Vec<String>,
    pub num_classes: usize,
}

impl StackedModel {
    pub fn fit(kind: MetaLearnerKind, train: &MetaFeatureMatrix, base_names: Vec<String>, seed: u64) -> Result<Self> {
        if train.labels.is_empty() {
            return Err(Error::InvalidArgument("meta training rows need labels".into()));
        }
        let meta = fit_meta_learner(kind, train.features.view(), &train.labels, train.num_classes, seed)?;
        Ok(Self {
            format: STACK_FORMAT.into(),
            meta,
            order_fingerprint: train.order_fingerprint,
            base_names,
            num_classes: train.num_classes,
        })
    }

    pub fn kind(&self) -> MetaLearnerKind {
        self.meta.kind()
    }

    pub fn check_order(&self, bases: &[&dyn BaseModel]) -> Result<()> {
        let fp = bases_fingerprint(bases);
        if fp != self.order_fingerprint {
            return Err(Error::Model(format!(
                "base models do not match the stacked model (fingerprint {fp:016x}, expected {:016x})",
                self.order_fingerprint
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.format != STACK_FORMAT {
            return Err(Error::Model(format!("unsupported stack format `{}`", m.format)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Self::from_json(&s)
    }
}

/// Class index and per-class scores for each image.
pub fn stacked_predict_batch(bases: &[&dyn BaseModel], model: &StackedModel, images: &[&RgbImage]) -> Result<Vec<(usize, Vec<f64>)>> {
    model.check_order(bases)?;
    let mf = make_meta_features(bases, images, Vec::new())?;
    let scores = model.meta.scores(mf.features.view());
    Ok(scores.rows().into_iter().map(|r| (argmax(&r.to_vec()), r.to_vec())).collect())
}

pub fn stacked_predict(bases: &[&dyn BaseModel], model: &StackedModel, image: &RgbImage) -> Result<(usize, Vec<f64>)> {
    let mut out = stacked_predict_batch(bases, model, &[image])?;
    Ok(out.remove(0))
}

/// Class-stratified fold index per sample.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::InvalidArgument(format!("{folds} folds for {} samples", labels.len())));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut crate::data::seeded(seed));
    order.sort_by_key(|&i| labels[i]);
    let mut out = vec![0; labels.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds;
    }
    Ok(out)
}

/// Out-of-fold meta features. `fit(b, rows)` trains base `b` on the given
/// rows; the resulting matrix carries `order_fp` so it pairs with the bases
/// trained on the full split.
pub fn out_of_fold_features<F>(
    images: &[&RgbImage],
    labels: &[usize],
    num_bases: usize,
    folds: usize,
    seed: u64,
    order_fp: u64,
    mut fit: F,
) -> Result<MetaFeatureMatrix>
where
    F: FnMut(usize, &[usize]) -> Result<Box<dyn BaseModel>>,
{
    let assign = stratified_folds(labels, folds, seed)?;
    let mut blocks: Vec<Option<Array2<f64>>> = vec![None; num_bases];
    for f in 0..folds {
        let train_rows: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] != f).collect();
        let held: Vec<usize> = (0..labels.len()).filter(|&i| assign[i] == f).collect();
        let held_images: Vec<&RgbImage> = held.iter().map(|&i| images[i]).collect();
        for (b, slot) in blocks.iter_mut().enumerate() {
            let model = fit(b, &train_rows)?;
            let part = make_meta_features(&[model.as_ref()], &held_images, Vec::new())?;
            let block = slot.get_or_insert_with(|| Array2::zeros((labels.len(), part.num_classes)));
            for (r, &i) in held.iter().enumerate() {
                block.row_mut(i).assign(&part.features.row(r));
            }
        }
    }
    let blocks: Vec<Array2<f64>> = blocks.into_iter().map(|b| b.unwrap_or_else(|| Array2::zeros((0, 0)))).collect();
    MetaFeatureMatrix::from_blocks(&blocks, labels.to_vec(), order_fp)
}

/// Accuracy of each (top-m combination, meta learner) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub combos: Vec<usize>,
    pub kinds: Vec<MetaLearnerKind>,
    /// `accuracy[combo][kind]`
    pub accuracy: Vec<Vec<f64>>,
}

impl ComparisonTable {
    pub fn get(&self, combo: usize, kind: MetaLearnerKind) -> Option<f64> {
        let r = self.combos.iter().position(|&c| c == combo)?;
        let c = self.kinds.iter().position(|&k| k == kind)?;
        Some(self.accuracy[r][c])
    }

    /// One row per combination, one column per meta learner.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("combination");
        for k in &self.kinds {
            out.push(',');
            out.push_str(k.name());
        }
        out.push('\n');
        for (combo, row) in self.combos.iter().zip(&self.accuracy) {
            let _ = write!(out, "top-{combo}");
            for v in row {
                let _ = write!(out, ",{v:.10}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Fits every meta learner on every top-m slice of `train` and scores it on
/// the same slice of `eval`.
pub fn run_stacking_comparison(
    train: &MetaFeatureMatrix,
    eval: &MetaFeatureMatrix,
    kinds: &[MetaLearnerKind],
    combos: &[usize],
    seed: u64,
) -> Result<ComparisonTable> {
    if eval.labels.is_empty() {
        return Err(Error::InvalidArgument("evaluation rows need labels".into()));
    }
    if train.num_models != eval.num_models || train.num_classes != eval.num_classes {
        return Err(Error::ShapeMismatch("training and evaluation features come from different bases".into()));
    }
    let mut table = Vec::with_capacity(combos.len());
    for &m in combos {
        let tr = train.top(m, 0)?;
        let ev = eval.top(m, 0)?;
        let mut row = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let model = fit_meta_learner(kind, tr.features.view(), &tr.labels, tr.num_classes, seed)?;
            row.push(accuracy(&model.predict(ev.features.view()), &ev.labels));
        }
        table.push(row);
    }
    Ok(ComparisonTable { combos: combos.to_vec(), kinds: kinds.to_vec(), accuracy: table })
}

/// Accuracy of arg-max over the averaged probability blocks. With one block
/// this is that base model's own accuracy.
pub fn mean_vote_accuracy(features: &MetaFeatureMatrix) -> f64 {
    let c = features.num_classes;
    let pred: Vec<usize> = (0..features.len())
        .map(|r| {
            let mut avg = Array1::<f64>::zeros(c);
            for m in 0..features.num_models {
                avg += &features.block(m).row(r);
            }
            argmax(&avg.to_vec())
        })
        .collect();
    accuracy(&pred, &features.labels)
}

/// Base models, meta-training rows and evaluation rows for a ranked list of
/// grid results.
pub struct SeverityStack {
    pub bases: Vec<SeverityClassifier>,
    pub train_features: MetaFeatureMatrix,
    pub eval_features: MetaFeatureMatrix,
}

impl SeverityStack {
    pub fn base_refs(&self) -> Vec<&dyn BaseModel> {
        self.bases.iter().map(|b| b as &dyn BaseModel).collect()
    }

    pub fn base_names(&self) -> Vec<String> {
        self.bases.iter().map(BaseModel::name).collect()
    }
}

fn train_base(spec_of: &GridResult, rows: &[(&RgbImage, Severity)], settings: &GridSettings) -> Result<SeverityClassifier> {
    let spec = BackboneSpec::desk(spec_of.backbone);
    let mut clf = build_classifier(spec, Severity::COUNT, settings.seed)?;
    let side = clf.input_side();
    let resized: Vec<RgbImage> = rows
        .iter()
        .map(|(img, _)| {
            if img.shape()[..2] == [side, side] {
                (*img).clone()
            } else {
                crate::data::imageio::resize_bilinear(img, side, side)
            }
        })
        .collect();
    let pairs: Vec<(&RgbImage, Severity)> = resized.iter().zip(rows).map(|(i, (_, l))| (i, *l)).collect();
    train_classifier(&mut clf, &pairs, spec_of.optimizer, spec_of.loss, settings)?;
    Ok(clf)
}

/// Retrains the ranked desk bases on `train` and builds meta features
/// according to `protocol`.
pub fn build_severity_stack(
    ranked: &[GridResult],
    train: &[(RgbImage, Severity)],
    test: &[(RgbImage, Severity)],
    settings: &GridSettings,
    protocol: MetaProtocol,
) -> Result<SeverityStack> {
    if ranked.is_empty() {
        return Err(Error::Empty("no ranked base models".into()));
    }
    let train_rows: Vec<(&RgbImage, Severity)> = train.iter().map(|(i, l)| (i, *l)).collect();
    let bases: Vec<SeverityClassifier> = ranked.iter().map(|r| train_base(r, &train_rows, settings)).collect::<Result<_>>()?;
    let refs: Vec<&dyn BaseModel> = bases.iter().map(|b| b as &dyn BaseModel).collect();
    let test_images: Vec<&RgbImage> = test.iter().map(|(i, _)| i).collect();
    let test_labels: Vec<usize> = test.iter().map(|(_, l)| l.index()).collect();
    let eval_features = make_meta_features(&refs, &test_images, test_labels)?;
    let train_features = match protocol {
        MetaProtocol::TestSplit => eval_features.clone(),
        MetaProtocol::OutOfFold { folds } => {
            let images: Vec<&RgbImage> = train.iter().map(|(i, _)| i).collect();
            let labels: Vec<usize> = train.iter().map(|(_, l)| l.index()).collect();
            let fp = order_fingerprint(&bases.iter().map(SeverityClassifier::fingerprint).collect::<Vec<_>>());
            out_of_fold_features(&images, &labels, ranked.len(), folds, settings.seed, fp, |b, rows| {
                let subset: Vec<(&RgbImage, Severity)> = rows.iter().map(|&i| train_rows[i]).collect();
                Ok(Box::new(train_base(&ranked[b], &subset, settings)?) as Box<dyn BaseModel>)
            })?
        }
    };
    Ok(SeverityStack { bases, train_features, eval_features })
}

const BUNDLE_FORMAT: &str = "slideqc-stack-bundle-1";

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format: String,
    bases: Vec<serde_json::Value>,
    stack: StackedModel,
}

/// Trained desk base classifiers with the meta learner fit on them; the
/// unit the pipeline grades tiles with.
#[derive(Debug, Clone)]
pub struct StackBundle {
    pub bases: Vec<SeverityClassifier>,
    pub stack: StackedModel,
}

impl StackBundle {
    pub fn new(bases: Vec<SeverityClassifier>, stack: StackedModel) -> Result<Self> {
        let b = Self { bases, stack };
        b.stack.check_order(&b.base_refs())?;
        Ok(b)
    }

    pub fn base_refs(&self) -> Vec<&dyn BaseModel> {
        self.bases.iter().map(|b| b as &dyn BaseModel).collect()
    }

    /// Stable identifier of the bases and meta learner.
    pub fn id(&self) -> String {
        format!("stack:{}@{:016x}", self.stack.kind(), self.stack.order_fingerprint)
    }

    pub fn predict(&self, images: &[&RgbImage]) -> Result<Vec<(usize, Vec<f64>)>> {
        stacked_predict_batch(&self.base_refs(), &self.stack, images)
    }

    pub fn to_json(&self) -> Result<String> {
        let bases = self
            .bases
            .iter()
            .map(|b| Ok(serde_json::from_str(&b.to_json()?)?))
            .collect::<Result<Vec<serde_json::Value>>>()?;
        Ok(serde_json::to_string(&BundleFile { format: BUNDLE_FORMAT.into(), bases, stack: self.stack.clone() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: BundleFile = serde_json::from_str(text)?;
        if f.format != BUNDLE_FORMAT {
            return Err(Error::Model(format!("unsupported bundle format `{}`", f.format)));
        }
        let bases = f
            .bases
            .iter()
            .map(|v| SeverityClassifier::from_json(&v.to_string()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(bases, f.stack)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Self::from_json(&s)
    }
}
