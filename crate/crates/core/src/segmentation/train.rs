use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use slideqc_nn::{apply_buffer_updates, loss, Graph, Mode, Optimizer, Var};

use super::model::SegModel;
use super::schedule::{early_stop_step, plateau_step, EarlyStopState, PlateauState};
use crate::config::{validate_config, LossKind, RunConfig};
use crate::data::{augment, sample_seed, AugmentParams};
use crate::error::{Error, Result};
use crate::metrics::{self, SegMetricsReport, BINARIZE_THRESHOLD, DEFAULT_SMOOTH};
use crate::types::{images_to_batch, masks_to_batch, BinaryMask, RgbImage, SegPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_loss: f64,
    pub dice: f64,
    pub val_dice: f64,
    pub iou: f64,
    pub val_iou: f64,
    pub mean_iou: f64,
    pub precision: f64,
    pub recall: f64,
    /// Rate used during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn learning_rates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.learning_rate).collect()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Model(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Extras beyond the run configuration.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// On-the-fly augmentation of each training batch. Images are already in
    /// `[0, 1]`, so `rescale` should be 1.
    pub augment: Option<AugmentParams>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

/// Sum of the configured loss over every output map against the same mask.
pub fn segmentation_loss(g: &mut Graph, outputs: &[Var], truth: Var, kind: LossKind) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &out in outputs {
        let l = match kind {
            LossKind::DiceCoefLoss => loss::dice_loss(g, out, truth, DEFAULT_SMOOTH),
            LossKind::BinaryCrossEntropy => loss::binary_cross_entropy(g, out, truth),
            LossKind::DiceBce => {
                let d = loss::dice_loss(g, out, truth, DEFAULT_SMOOTH);
                let b = loss::binary_cross_entropy(g, out, truth);
                g.add(d, b)
            }
            other => return Err(Error::InvalidArgument(format!("{other} is not a segmentation loss"))),
        };
        total = Some(match total {
            Some(t) => g.add(t, l),
            None => l,
        });
    }
    total.ok_or_else(|| Error::Model("model produced no outputs".into()))
}

struct Scores {
    loss: f64,
    dice: f64,
    iou: f64,
}

fn batch_scores(pred: &ndarray::ArrayD<f64>, truth: &ndarray::ArrayD<f64>) -> Result<(f64, f64)> {
    Ok((
        metrics::dice_coef(pred.view(), truth.view(), DEFAULT_SMOOTH)?,
        metrics::soft_iou(pred.view(), truth.view(), DEFAULT_SMOOTH)?,
    ))
}

fn evaluate_loss(model: &SegModel, data: &[SegPair], kind: LossKind, batch_size: usize) -> Result<Scores> {
    let mut sums = (0.0, 0.0, 0.0);
    for chunk in data.chunks(batch_size) {
        let imgs: Vec<&RgbImage> = chunk.iter().map(|p| &p.image).collect();
        let masks: Vec<&BinaryMask> = chunk.iter().map(|p| &p.mask).collect();
        let mut g = Graph::new();
        let x = g.constant(images_to_batch(&imgs));
        let t = g.constant(masks_to_batch(&masks));
        let out = model.forward(&mut g, x, Mode::Eval);
        let l = segmentation_loss(&mut g, &out.outputs, t, kind)?;
        let (d, i) = batch_scores(g.value(out.prediction()), g.value(t))?;
        let w = chunk.len() as f64;
        sums.0 += g.scalar(l) * w;
        sums.1 += d * w;
        sums.2 += i * w;
    }
    let n = data.len() as f64;
    Ok(Scores { loss: sums.0 / n, dice: sums.1 / n, iou: sums.2 / n })
}

pub fn train_segmenter(model: SegModel, train: &[SegPair], valid: &[SegPair], config: &RunConfig) -> Result<(SegModel, TrainHistory)> {
    train_segmenter_with(model, train, valid, config, &TrainOptions::default())
}

/// Mini-batch training with plateau learning-rate reduction and early
/// stopping, both monitoring validation loss.
pub fn train_segmenter_with(
    mut model: SegModel,
    train: &[SegPair],
    valid: &[SegPair],
    config: &RunConfig,
    options: &TrainOptions,
) -> Result<(SegModel, TrainHistory)> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        return Err(Error::InvalidArgument(violations.join("; ")));
    }
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Empty("training and validation sets must be non-empty".into()));
    }
    if let Some(a) = &options.augment {
        a.validate()?;
    }
    let mut optimizer = Optimizer::new(config.optimizer);
    let mut plateau = PlateauState::new(config.plateau.factor, config.plateau.patience);
    let mut stopper = EarlyStopState::new(config.early_stop_patience);
    let mut lr = config.learning_rate;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.epochs {
        let mut rng = crate::data::seeded(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut pooled_p = Vec::new();
        let mut pooled_t = Vec::new();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut imgs = Vec::with_capacity(chunk.len());
            let mut masks = Vec::with_capacity(chunk.len());
            for &i in chunk {
                match &options.augment {
                    Some(params) => {
                        let seed = sample_seed(config.seed ^ ((epoch * 1_000_003 + b) as u64), &i.to_string());
                        let a = augment(&train[i].image, Some(&train[i].mask), params, seed)?;
                        imgs.push(a.image);
                        masks.push(a.mask.expect("mask passed in"));
                    }
                    None => {
                        imgs.push(train[i].image.clone());
                        masks.push(train[i].mask.clone());
                    }
                }
            }
            let img_refs: Vec<&RgbImage> = imgs.iter().collect();
            let mask_refs: Vec<&BinaryMask> = masks.iter().collect();
            let mut g = Graph::new();
            let x = g.constant(images_to_batch(&img_refs));
            let t = g.constant(masks_to_batch(&mask_refs));
            let out = model.forward(&mut g, x, Mode::Train);
            let l = segmentation_loss(&mut g, &out.outputs, t, config.loss)?;
            let lv = g.scalar(l);
            if !lv.is_finite() {
                return Err(Error::Divergence { epoch, detail: format!("training loss is {lv} in batch {}", b + 1) });
            }
            let grads = g.backward(l);
            if let Some((id, _)) = grads.params().iter().find(|(_, gr)| gr.iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite gradient for `{}`", model.store.entry(*id).name),
                });
            }
            let pred = g.value(out.prediction());
            let (d, i) = batch_scores(pred, g.value(t))?;
            let w = chunk.len() as f64;
            sums.0 += lv * w;
            sums.1 += d * w;
            sums.2 += i * w;
            pooled_p.extend(pred.iter().copied());
            pooled_t.extend(g.value(t).iter().copied());
            let updates = g.take_buffer_updates();
            optimizer.step(&mut model.store, grads.params(), lr);
            apply_buffer_updates(&mut model.store, updates);
        }
        let n = train.len() as f64;
        let pp = Array1::from(pooled_p);
        let pt = Array1::from(pooled_t);
        let (precision, recall) = metrics::precision_recall(pp.view(), pt.view(), BINARIZE_THRESHOLD)?;
        let mean_iou = metrics::mean_iou(pp.view(), pt.view(), BINARIZE_THRESHOLD)?;
        let val = evaluate_loss(&model, valid, config.loss, config.batch_size)?;
        if !val.loss.is_finite() {
            return Err(Error::Divergence { epoch, detail: format!("validation loss is {}", val.loss) });
        }
        let rec = EpochRecord {
            epoch,
            loss: sums.0 / n,
            val_loss: val.loss,
            dice: sums.1 / n,
            val_dice: val.dice,
            iou: sums.2 / n,
            val_iou: val.iou,
            mean_iou,
            precision,
            recall,
            learning_rate: lr,
        };
        if options.verbose {
            eprintln!(
                "epoch {epoch}: loss {:.4} val_loss {:.4} iou {:.4} val_iou {:.4} lr {:e}",
                rec.loss, rec.val_loss, rec.iou, rec.val_iou, lr
            );
        }
        records.push(rec);
        let (stop, s) = early_stop_step(stopper, val.loss);
        stopper = s;
        if stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
        (lr, plateau) = plateau_step(plateau, val.loss, lr);
    }
    Ok((model, TrainHistory { records, stop_reason }))
}

/// Probability maps for every pair, batched.
pub fn predict_all(model: &SegModel, data: &[SegPair], batch_size: usize) -> Result<Vec<Array2<f64>>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch_size.max(1)) {
        let imgs: Vec<&RgbImage> = chunk.iter().map(|p| &p.image).collect();
        out.extend(model.predict_batch(&imgs)?);
    }
    Ok(out)
}

/// Per-image IOU protocol plus pooled scores on a held-out set.
pub fn evaluate_segmenter(model: &SegModel, test: &[SegPair], iou_thresholds: &[f64]) -> Result<SegMetricsReport> {
    if test.is_empty() {
        return Err(Error::Empty("empty test set".into()));
    }
    let preds = predict_all(model, test, 8)?;
    let truths: Vec<BinaryMask> = test.iter().map(|p| p.mask.clone()).collect();
    SegMetricsReport::from_predictions(&preds, &truths, iou_thresholds)
}

/// Soft IOU of each prediction against its own mask, in inference mode.
pub fn per_image_iou(model: &SegModel, data: &[SegPair]) -> Result<Vec<f64>> {
    let preds = predict_all(model, data, 8)?;
    preds
        .iter()
        .zip(data)
        .map(|(p, d)| metrics::soft_iou(p.view(), d.mask.mapv(f64::from).view(), DEFAULT_SMOOTH))
        .collect()
}
