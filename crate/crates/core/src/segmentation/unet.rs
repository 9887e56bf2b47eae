//! Plain four-stage UNet used as a reference baseline.

use rand_chacha::ChaCha8Rng;
use slideqc_nn::{Graph, Mode, ParamStore, Var};

use super::blocks::{width, ConvBnRelu, SigmoidHead};

const WIDTHS: [usize; 5] = [16, 32, 64, 128, 256];

#[derive(Debug, Clone)]
pub struct UnetBaseline {
    pub down: Vec<(ConvBnRelu, ConvBnRelu)>,
    pub bridge: (ConvBnRelu, ConvBnRelu),
    pub up: Vec<(ConvBnRelu, ConvBnRelu)>,
    pub head: SigmoidHead,
}

impl UnetBaseline {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) -> Self {
        let w: Vec<usize> = WIDTHS.iter().map(|&c| width(c, scale)).collect();
        let pair = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize| {
            (
                ConvBnRelu::new(store, rng, &format!("{name}.c1"), cin, cout, 3, 1),
                ConvBnRelu::new(store, rng, &format!("{name}.c2"), cout, cout, 3, 1),
            )
        };
        let mut down = Vec::new();
        let mut cin = 3;
        for (i, &c) in w[..4].iter().enumerate() {
            down.push(pair(store, rng, &format!("down{i}"), cin, c));
            cin = c;
        }
        let bridge = pair(store, rng, "bridge", cin, w[4]);
        let mut up = Vec::new();
        let mut prev = w[4];
        for (i, level) in (0..4).rev().enumerate() {
            up.push(pair(store, rng, &format!("up{i}"), prev + w[level], w[level]));
            prev = w[level];
        }
        let head = SigmoidHead::new(store, rng, "head", prev);
        Self { down, bridge, up, head }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Var {
        let mut skips = Vec::new();
        let mut y = x;
        for (a, b) in &self.down {
            y = a.forward(g, store, y, mode);
            y = b.forward(g, store, y, mode);
            skips.push(y);
            y = g.max_pool2(y);
        }
        y = self.bridge.0.forward(g, store, y, mode);
        y = self.bridge.1.forward(g, store, y, mode);
        for (i, (a, b)) in self.up.iter().enumerate() {
            y = g.upsample2(y);
            y = g.concat(&[y, skips[3 - i]]);
            y = a.forward(g, store, y, mode);
            y = b.forward(g, store, y, mode);
        }
        self.head.forward(g, store, y)
    }
}
