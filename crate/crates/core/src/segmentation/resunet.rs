//! Residual UNet with squeeze-excitation, an ASPP bridge and attention-gated
//! decoder stages. Each addition can be switched off.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use slideqc_nn::{Graph, Mode, ParamStore, Var};

use super::blocks::{width, Aspp, AttentionGate, ConvBnRelu, ResidualBlock, SigmoidHead, SqueezeExcite};

const WIDTHS: [usize; 5] = [32, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResUnetOptions {
    pub squeeze_excite: bool,
    pub aspp: bool,
    pub attention: bool,
}

impl Default for ResUnetOptions {
    fn default() -> Self {
        Self { squeeze_excite: true, aspp: true, attention: true }
    }
}

#[derive(Debug, Clone)]
pub enum Bridge {
    Aspp(Aspp),
    Plain(ConvBnRelu),
}

impl Bridge {
    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Var {
        match self {
            Bridge::Aspp(a) => a.forward(g, store, x, mode),
            Bridge::Plain(c) => c.forward(g, store, x, mode),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResUnetPp {
    pub stem: ResidualBlock,
    /// Stride-2 encoder blocks.
    pub down: Vec<ResidualBlock>,
    pub se: Vec<Option<SqueezeExcite>>,
    pub bridge: Bridge,
    pub attention: Vec<Option<AttentionGate>>,
    pub up: Vec<ResidualBlock>,
    pub tail: Bridge,
    pub head: SigmoidHead,
}

impl ResUnetPp {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64, opts: ResUnetOptions) -> Self {
        let w: Vec<usize> = WIDTHS.iter().map(|&c| width(c, scale)).collect();
        let stem = ResidualBlock::new(store, rng, "stem", 3, w[0], 1, false);
        let mut se = vec![opts.squeeze_excite.then(|| SqueezeExcite::new(store, rng, "stem.se", w[0]))];
        let mut down = Vec::new();
        for i in 0..4 {
            down.push(ResidualBlock::new(store, rng, &format!("down{i}"), w[i], w[i + 1], 2, true));
            se.push(opts.squeeze_excite.then(|| SqueezeExcite::new(store, rng, &format!("down{i}.se"), w[i + 1])));
        }
        let bridge = if opts.aspp {
            Bridge::Aspp(Aspp::new(store, rng, "bridge", w[4], w[4]))
        } else {
            Bridge::Plain(ConvBnRelu::new(store, rng, "bridge", w[4], w[4], 3, 1))
        };
        let mut attention = Vec::new();
        let mut up = Vec::new();
        let mut prev = w[4];
        for (i, level) in (0..4).rev().enumerate() {
            attention.push(
                opts.attention
                    .then(|| AttentionGate::new(store, rng, &format!("att{i}"), w[level], prev, w[level])),
            );
            up.push(ResidualBlock::new(store, rng, &format!("up{i}"), prev + w[level], w[level], 1, true));
            prev = w[level];
        }
        let tail = if opts.aspp {
            Bridge::Aspp(Aspp::new(store, rng, "tail", w[0], w[0]))
        } else {
            Bridge::Plain(ConvBnRelu::new(store, rng, "tail", w[0], w[0], 3, 1))
        };
        let head = SigmoidHead::new(store, rng, "head", w[0]);
        Self { stem, down, se, bridge, attention, up, tail, head }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Var {
        let mut skips = Vec::new();
        let mut y = self.stem.forward(g, store, x, mode);
        if let Some(se) = &self.se[0] {
            y = se.forward(g, store, y);
        }
        for (i, block) in self.down.iter().enumerate() {
            skips.push(y);
            y = block.forward(g, store, y, mode);
            if let Some(se) = &self.se[i + 1] {
                y = se.forward(g, store, y);
            }
        }
        y = self.bridge.forward(g, store, y, mode);
        for (i, block) in self.up.iter().enumerate() {
            let skip = skips[3 - i];
            y = g.upsample2(y);
            let skip = match &self.attention[i] {
                Some(att) => att.forward(g, store, skip, y, mode),
                None => skip,
            };
            y = g.concat(&[y, skip]);
            y = block.forward(g, store, y, mode);
        }
        y = self.tail.forward(g, store, y, mode);
        self.head.forward(g, store, y)
    }
}
