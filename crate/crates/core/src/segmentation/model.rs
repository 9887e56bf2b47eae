use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use slideqc_nn::{Graph, Mode, ParamStore, TensorRecord, Var};

use super::double_unet::DoubleUnet;
use super::resunet::{ResUnetOptions, ResUnetPp};
use super::unet::UnetBaseline;
use crate::config::Architecture;
use crate::error::{Error, Result};
use crate::types::{images_to_batch, BinaryMask, RgbImage};

#[derive(Debug, Clone)]
pub enum Network {
    DoubleUnet(Box<DoubleUnet>),
    ResUnetPp(Box<ResUnetPp>),
    UnetBaseline(Box<UnetBaseline>),
}

/// A segmentation network together with its parameters.
#[derive(Debug, Clone)]
pub struct SegModel {
    pub architecture: Architecture,
    pub width_scale: f64,
    /// `(H, W)`; the channel count is always 3.
    pub input_shape: (usize, usize),
    pub resunet_options: ResUnetOptions,
    pub store: ParamStore,
    pub network: Network,
}

/// Graph nodes produced by one forward pass.
pub struct SegForward {
    /// Every sigmoid map the training loss is applied to; the last is the prediction.
    pub outputs: Vec<Var>,
    /// The second network's input, for two-stage models.
    pub gated_input: Option<Var>,
}

impl SegForward {
    pub fn prediction(&self) -> Var {
        *self.outputs.last().expect("at least one output")
    }
}

pub fn build_double_unet(input_shape: (usize, usize), width_scale: f64, seed: u64) -> Result<SegModel> {
    SegModel::build(Architecture::DoubleUnet, input_shape, width_scale, seed, ResUnetOptions::default())
}

pub fn build_resunet_pp(input_shape: (usize, usize), width_scale: f64, seed: u64) -> Result<SegModel> {
    SegModel::build(Architecture::ResunetPp, input_shape, width_scale, seed, ResUnetOptions::default())
}

pub fn build_unet_baseline(input_shape: (usize, usize), width_scale: f64, seed: u64) -> Result<SegModel> {
    SegModel::build(Architecture::UnetBaseline, input_shape, width_scale, seed, ResUnetOptions::default())
}

/// A probability map and its hard mask at 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedMask {
    pub probabilities: Array2<f64>,
    pub mask: BinaryMask,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    architecture: Architecture,
    width_scale: f64,
    input_shape: (usize, usize),
    resunet_options: ResUnetOptions,
    tensors: Vec<TensorRecord>,
}

const CHECKPOINT_FORMAT: &str = "slideqc-seg-1";

impl SegModel {
    pub fn build(
        architecture: Architecture,
        input_shape: (usize, usize),
        width_scale: f64,
        seed: u64,
        resunet_options: ResUnetOptions,
    ) -> Result<Self> {
        let (h, w) = input_shape;
        let m = architecture.size_multiple();
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{architecture} needs height and width divisible by {m}, got {h}x{w}"
            )));
        }
        if !(width_scale > 0.0 && width_scale <= 1.0) {
            return Err(Error::InvalidArgument(format!("width_scale must lie in (0, 1], got {width_scale}")));
        }
        let mut store = ParamStore::new();
        let mut rng = slideqc_nn::rng(seed);
        let network = match architecture {
            Architecture::DoubleUnet => Network::DoubleUnet(Box::new(DoubleUnet::new(&mut store, &mut rng, width_scale))),
            Architecture::ResunetPp => {
                Network::ResUnetPp(Box::new(ResUnetPp::new(&mut store, &mut rng, width_scale, resunet_options)))
            }
            Architecture::UnetBaseline => {
                Network::UnetBaseline(Box::new(UnetBaseline::new(&mut store, &mut rng, width_scale)))
            }
        };
        Ok(Self { architecture, width_scale, input_shape, resunet_options, store, network })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.weight_count()
    }

    /// `x` is an `[N,3,H,W]` node.
    pub fn forward(&self, g: &mut Graph, x: Var, mode: Mode) -> SegForward {
        self.forward_with(g, &self.store, x, mode)
    }

    /// Forward pass reading parameters from `store` instead of the model's own.
    pub fn forward_with(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> SegForward {
        match &self.network {
            Network::DoubleUnet(n) => {
                let o = n.forward(g, store, x, mode);
                SegForward { outputs: vec![o.out1, o.out2], gated_input: Some(o.gated_input) }
            }
            Network::ResUnetPp(n) => SegForward { outputs: vec![n.forward(g, store, x, mode)], gated_input: None },
            Network::UnetBaseline(n) => SegForward { outputs: vec![n.forward(g, store, x, mode)], gated_input: None },
        }
    }

    fn check_image(&self, image: &RgbImage) -> Result<()> {
        let s = image.shape();
        if (s[0], s[1]) != self.input_shape || s[2] != 3 {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} does not match model input {}x{}x3",
                s, self.input_shape.0, self.input_shape.1
            )));
        }
        Ok(())
    }

    /// Probability maps for a batch of images in inference mode.
    pub fn predict_batch(&self, images: &[&RgbImage]) -> Result<Vec<Array2<f64>>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        for img in images {
            self.check_image(img)?;
        }
        let mut g = Graph::new();
        let x = g.constant(images_to_batch(images));
        let out = self.forward(&mut g, x, Mode::Eval);
        let p = g.value(out.prediction());
        Ok((0..images.len()).map(|n| p.slice(s![n, 0, .., ..]).to_owned()).collect())
    }

    /// Replaces values of same-named tensors, e.g. pretrained encoder weights.
    /// Returns how many tensors were loaded.
    pub fn load_named_tensors(&mut self, records: &[TensorRecord]) -> Result<usize> {
        let mut loaded = 0;
        for rec in records {
            let id = self
                .store
                .find(&rec.name)
                .ok_or_else(|| Error::Model(format!("model has no tensor named `{}`", rec.name)))?;
            let slot = self.store.get_mut(id);
            if slot.shape() != rec.shape.as_slice() {
                return Err(Error::Model(format!("tensor `{}` has shape {:?}, record {:?}", rec.name, slot.shape(), rec.shape)));
            }
            slot.iter_mut().zip(&rec.data).for_each(|(d, s)| *d = *s);
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            architecture: self.architecture,
            width_scale: self.width_scale,
            input_shape: self.input_shape,
            resunet_options: self.resunet_options,
            tensors: self.store.to_snapshot(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Model(format!("unsupported checkpoint format `{}`", ck.format)));
        }
        let mut m = Self::build(ck.architecture, ck.input_shape, ck.width_scale, 0, ck.resunet_options)?;
        m.store.load_snapshot(&ck.tensors)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Probability map and hard mask for one image.
pub fn predict_mask(model: &SegModel, image: &RgbImage) -> Result<PredictedMask> {
    let probabilities = model.predict_batch(&[image])?.pop().expect("one output");
    let mask = probabilities.mapv(|p| u8::from(p > crate::metrics::BINARIZE_THRESHOLD));
    Ok(PredictedMask { probabilities, mask })
}
