use rand::Rng;
use slideqc_nn::{Graph, Mode, ParamKind, ParamStore};

use super::model::SegModel;
use super::train::segmentation_loss;
use crate::config::LossKind;
use crate::error::{Error, Result};
use crate::types::{images_to_batch, masks_to_batch, BinaryMask, RgbImage};

/// One sampled parameter coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradProbe {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradProbe {
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-12)
    }
}

fn loss_value(model: &SegModel, store: &ParamStore, x: &ndarray::ArrayD<f64>, t: &ndarray::ArrayD<f64>, kind: LossKind) -> Result<f64> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let tv = g.constant(t.clone());
    let out = model.forward_with(&mut g, store, xv, Mode::Train);
    let l = segmentation_loss(&mut g, &out.outputs, tv, kind)?;
    Ok(g.scalar(l))
}

/// Compares backpropagated gradients of the training loss with central
/// differences at `count` randomly drawn trainable coordinates whose
/// gradient magnitude is not negligible.
pub fn gradient_check(
    model: &SegModel,
    images: &[&RgbImage],
    masks: &[&BinaryMask],
    kind: LossKind,
    count: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<GradProbe>> {
    const MIN_GRAD: f64 = 1e-6;
    let x = images_to_batch(images);
    let t = masks_to_batch(masks);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let tv = g.constant(t.clone());
    let out = model.forward(&mut g, xv, Mode::Train);
    let l = segmentation_loss(&mut g, &out.outputs, tv, kind)?;
    let grads = g.backward(l);
    let trainable: Vec<_> = model.store.ids().filter(|&id| model.store.kind(id) == ParamKind::Trainable).collect();
    let mut rng = crate::data::seeded(seed);
    let mut probes = Vec::new();
    let mut attempts = 0;
    while probes.len() < count {
        attempts += 1;
        if attempts > 5000 {
            return Err(Error::Model(format!("found only {} coordinates with usable gradients", probes.len())));
        }
        let id = trainable[rng.random_range(0..trainable.len())];
        let Some(gr) = grads.param(id) else { continue };
        let index = rng.random_range(0..gr.len());
        let analytic = gr.as_slice_memory_order().map_or_else(|| gr.iter().nth(index).copied().unwrap_or(0.0), |s| s[index]);
        if analytic.abs() < MIN_GRAD {
            continue;
        }
        let mut store = model.store.clone();
        let orig = store.get(id).as_slice_memory_order().expect("contiguous")[index];
        store.get_mut(id).as_slice_memory_order_mut().expect("contiguous")[index] = orig + step;
        let plus = loss_value(model, &store, &x, &t, kind)?;
        store.get_mut(id).as_slice_memory_order_mut().expect("contiguous")[index] = orig - step;
        let minus = loss_value(model, &store, &x, &t, kind)?;
        let numeric = (plus - minus) / (2.0 * step);
        // a ReLU or max-pool switch inside the step makes the one-sided
        // slopes disagree; such coordinates say nothing about the backward pass
        let centre = loss_value(model, &model.store, &x, &t, kind)?;
        let (right, left) = ((plus - centre) / step, (centre - minus) / step);
        if (right - left).abs() > 1e-2 * right.abs().max(left.abs()) {
            continue;
        }
        probes.push(GradProbe { name: model.store.entry(id).name.clone(), index, analytic, numeric });
    }
    Ok(probes)
}
