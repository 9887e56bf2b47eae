//! Building blocks shared by the segmentation networks.

use rand_chacha::ChaCha8Rng;
use slideqc_nn::{BatchNorm2d, Conv2d, ConvGeom, Graph, Linear, Mode, ParamStore, Var};

/// Scales a full-size channel count, never dropping below 4.
pub(crate) fn width(base: usize, scale: f64) -> usize {
    ((base as f64 * scale).round() as usize).max(4)
}

/// 3x3 conv, batch norm, ReLU.
#[derive(Debug, Clone)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize, k: usize, dilation: usize) -> Self {
        let conv = Conv2d::new(store, rng, &format!("{name}.conv"), cin, cout, k, ConvGeom::same(k, dilation));
        let bn = BatchNorm2d::new(store, rng, &format!("{name}.bn"), cout);
        Self { conv, bn }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Var {
        let y = self.conv.forward(g, store, x);
        let y = self.bn.forward(g, store, y, mode);
        g.relu(y)
    }
}

/// Squeeze-and-excitation: channel gates from a two-layer bottleneck on the
/// pooled features.
#[derive(Debug, Clone)]
pub struct SqueezeExcite {
    pub reduce: Linear,
    pub expand: Linear,
}

impl SqueezeExcite {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, channels: usize) -> Self {
        let hidden = (channels / 8).max(2);
        Self {
            reduce: Linear::new(store, rng, &format!("{name}.reduce"), channels, hidden),
            expand: Linear::new(store, rng, &format!("{name}.expand"), hidden, channels),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let s = g.global_avg_pool(x);
        let s = self.reduce.forward(g, store, s);
        let s = g.relu(s);
        let s = self.expand.forward(g, store, s);
        let s = g.sigmoid(s);
        g.scale_channels(x, s)
    }
}

/// Atrous spatial pyramid pooling: an image-level branch, a 1x1 branch and
/// three dilated 3x3 branches, fused by a 1x1 projection.
#[derive(Debug, Clone)]
pub struct Aspp {
    pub pool_proj: Linear,
    pub branches: Vec<ConvBnRelu>,
    pub fuse: ConvBnRelu,
}

pub const ASPP_RATES: [usize; 3] = [6, 12, 18];

impl Aspp {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize) -> Self {
        let pool_proj = Linear::new(store, rng, &format!("{name}.pool"), cin, cout);
        let mut branches = vec![ConvBnRelu::new(store, rng, &format!("{name}.b1"), cin, cout, 1, 1)];
        for r in ASPP_RATES {
            branches.push(ConvBnRelu::new(store, rng, &format!("{name}.d{r}"), cin, cout, 3, r));
        }
        let fuse = ConvBnRelu::new(store, rng, &format!("{name}.fuse"), cout * 5, cout, 1, 1);
        Self { pool_proj, branches, fuse }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Var {
        let s = g.value(x).shape().to_vec();
        let pooled = g.global_avg_pool(x);
        let pooled = self.pool_proj.forward(g, store, pooled);
        let pooled = g.relu(pooled);
        let mut parts = vec![g.broadcast_spatial(pooled, s[2], s[3])];
        for b in &self.branches {
            parts.push(b.forward(g, store, x, mode));
        }
        let cat = g.concat(&parts);
        self.fuse.forward(g, store, cat, mode)
    }
}

/// Pre-activation residual unit: `BN-ReLU-conv(stride)-BN-ReLU-conv` plus a
/// shortcut that is a strided 1x1 conv with BN when the shape changes.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub bn1: Option<BatchNorm2d>,
    pub conv1: Conv2d,
    pub bn2: BatchNorm2d,
    pub conv2: Conv2d,
    pub shortcut: Option<(Conv2d, BatchNorm2d)>,
}

impl ResidualBlock {
    /// `preact = false` gives the stem variant whose first conv sees the raw input.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        preact: bool,
    ) -> Self {
        let bn1 = preact.then(|| BatchNorm2d::new(store, rng, &format!("{name}.bn1"), cin));
        let conv1 = Conv2d::new(store, rng, &format!("{name}.conv1"), cin, cout, 3, ConvGeom { stride, pad: 1, dilation: 1 });
        let bn2 = BatchNorm2d::new(store, rng, &format!("{name}.bn2"), cout);
        let conv2 = Conv2d::same(store, rng, &format!("{name}.conv2"), cout, cout, 3);
        let shortcut = (stride != 1 || cin != cout).then(|| {
            (
                Conv2d::new(store, rng, &format!("{name}.skip"), cin, cout, 1, ConvGeom { stride, pad: 0, dilation: 1 }),
                BatchNorm2d::new(store, rng, &format!("{name}.skip_bn"), cout),
            )
        });
        Self { bn1, conv1, bn2, conv2, shortcut }
    }

    /// Returns `(branch, shortcut)` before they are summed.
    pub fn forward_parts(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> (Var, Var) {
        let mut y = x;
        if let Some(bn) = &self.bn1 {
            y = bn.forward(g, store, y, mode);
            y = g.relu(y);
        }
        y = self.conv1.forward(g, store, y);
        y = self.bn2.forward(g, store, y, mode);
        y = g.relu(y);
        y = self.conv2.forward(g, store, y);
        let s = match &self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(g, store, x);
                bn.forward(g, store, s, mode)
            }
            None => x,
        };
        (y, s)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Var {
        let (b, s) = self.forward_parts(g, store, x, mode);
        g.add(b, s)
    }
}

/// Additive attention gate: weights the encoder skip by a map computed from
/// the skip and the (already upsampled) decoder feature.
#[derive(Debug, Clone)]
pub struct AttentionGate {
    pub from_skip: ConvBnRelu,
    pub from_gate: ConvBnRelu,
    pub psi: Conv2d,
}

impl AttentionGate {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, skip_ch: usize, gate_ch: usize, inter: usize) -> Self {
        Self {
            from_skip: ConvBnRelu::new(store, rng, &format!("{name}.skip"), skip_ch, inter, 3, 1),
            from_gate: ConvBnRelu::new(store, rng, &format!("{name}.gate"), gate_ch, inter, 3, 1),
            psi: Conv2d::same(store, rng, &format!("{name}.psi"), inter, 1, 1),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, skip: Var, gate: Var, mode: Mode) -> Var {
        let a = self.from_skip.forward(g, store, skip, mode);
        let b = self.from_gate.forward(g, store, gate, mode);
        let s = g.add(a, b);
        let s = g.relu(s);
        let s = self.psi.forward(g, store, s);
        let s = g.sigmoid(s);
        g.gate_channels(skip, s)
    }
}

/// 1x1 conv to a single channel followed by a sigmoid.
#[derive(Debug, Clone)]
pub struct SigmoidHead {
    pub conv: Conv2d,
}

impl SigmoidHead {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize) -> Self {
        Self { conv: Conv2d::same(store, rng, name, cin, 1, 1) }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let y = self.conv.forward(g, store, x);
        g.sigmoid(y)
    }
}
