//! Two stacked encoder-decoders. The first uses a VGG19-shaped encoder; its
//! sigmoid map gates the input of the second, whose decoder reads skips from
//! both encoders.

use rand_chacha::ChaCha8Rng;
use slideqc_nn::{Conv2d, Graph, Mode, ParamStore, Var};

use super::blocks::{width, Aspp, ConvBnRelu, SigmoidHead, SqueezeExcite};

const VGG_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
const VGG_DEPTHS: [usize; 5] = [2, 2, 4, 4, 4];
const ENC2_WIDTHS: [usize; 5] = [32, 64, 128, 256, 512];
/// Decoder widths from the deepest stage up.
const DEC_WIDTHS: [usize; 5] = [256, 128, 64, 32, 16];
const ASPP_WIDTH: usize = 64;

#[derive(Debug, Clone)]
pub struct ConvStage {
    pub c1: ConvBnRelu,
    pub c2: ConvBnRelu,
    pub se: SqueezeExcite,
}

impl ConvStage {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize) -> Self {
        Self {
            c1: ConvBnRelu::new(store, rng, &format!("{name}.c1"), cin, cout, 3, 1),
            c2: ConvBnRelu::new(store, rng, &format!("{name}.c2"), cout, cout, 3, 1),
            se: SqueezeExcite::new(store, rng, &format!("{name}.se"), cout),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Var {
        let y = self.c1.forward(g, store, x, mode);
        let y = self.c2.forward(g, store, y, mode);
        self.se.forward(g, store, y)
    }
}

#[derive(Debug, Clone)]
pub struct DoubleUnet {
    /// VGG19 convolution stages (plain conv + ReLU, no normalisation).
    pub enc1: Vec<Vec<Conv2d>>,
    pub aspp1: Aspp,
    pub dec1: Vec<ConvStage>,
    pub head1: SigmoidHead,
    pub enc2: Vec<ConvStage>,
    pub aspp2: Aspp,
    pub dec2: Vec<ConvStage>,
    pub head2: SigmoidHead,
}

pub struct DoubleUnetOutputs {
    pub out1: Var,
    pub out2: Var,
    /// Input of the second network: the image multiplied by `out1`.
    pub gated_input: Var,
}

impl DoubleUnet {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) -> Self {
        let vgg: Vec<usize> = VGG_WIDTHS.iter().map(|&c| width(c, scale)).collect();
        let e2: Vec<usize> = ENC2_WIDTHS.iter().map(|&c| width(c, scale)).collect();
        let dec: Vec<usize> = DEC_WIDTHS.iter().map(|&c| width(c, scale)).collect();
        let aspp_w = width(ASPP_WIDTH, scale);

        let mut enc1 = Vec::new();
        let mut cin = 3;
        for (s, (&cout, &depth)) in vgg.iter().zip(&VGG_DEPTHS).enumerate() {
            let convs = (0..depth)
                .map(|j| {
                    let c = Conv2d::same(store, rng, &format!("enc1.block{}.conv{}", s + 1, j + 1), cin, cout, 3);
                    cin = cout;
                    c
                })
                .collect();
            enc1.push(convs);
        }
        let aspp1 = Aspp::new(store, rng, "aspp1", cin, aspp_w);
        let mut dec1 = Vec::new();
        let mut prev = aspp_w;
        for (i, &cout) in dec.iter().enumerate() {
            let skip = vgg[4 - i];
            dec1.push(ConvStage::new(store, rng, &format!("dec1.{i}"), prev + skip, cout));
            prev = cout;
        }
        let head1 = SigmoidHead::new(store, rng, "head1", prev);

        let mut enc2 = Vec::new();
        let mut cin = 3;
        for (i, &cout) in e2.iter().enumerate() {
            enc2.push(ConvStage::new(store, rng, &format!("enc2.{i}"), cin, cout));
            cin = cout;
        }
        let aspp2 = Aspp::new(store, rng, "aspp2", cin, aspp_w);
        let mut dec2 = Vec::new();
        let mut prev = aspp_w;
        for (i, &cout) in dec.iter().enumerate() {
            let skips = vgg[4 - i] + e2[4 - i];
            dec2.push(ConvStage::new(store, rng, &format!("dec2.{i}"), prev + skips, cout));
            prev = cout;
        }
        let head2 = SigmoidHead::new(store, rng, "head2", prev);
        Self { enc1, aspp1, dec1, head1, enc2, aspp2, dec2, head2 }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> DoubleUnetOutputs {
        let mut skips1 = Vec::new();
        let mut y = x;
        for stage in &self.enc1 {
            for conv in stage {
                y = conv.forward(g, store, y);
                y = g.relu(y);
            }
            skips1.push(y);
            y = g.max_pool2(y);
        }
        y = self.aspp1.forward(g, store, y, mode);
        for (i, stage) in self.dec1.iter().enumerate() {
            y = g.upsample2(y);
            y = g.concat(&[y, skips1[4 - i]]);
            y = stage.forward(g, store, y, mode);
        }
        let out1 = self.head1.forward(g, store, y);

        let gated_input = g.gate_channels(x, out1);
        let mut skips2 = Vec::new();
        let mut y = gated_input;
        for stage in &self.enc2 {
            y = stage.forward(g, store, y, mode);
            skips2.push(y);
            y = g.max_pool2(y);
        }
        y = self.aspp2.forward(g, store, y, mode);
        for (i, stage) in self.dec2.iter().enumerate() {
            y = g.upsample2(y);
            y = g.concat(&[y, skips1[4 - i], skips2[4 - i]]);
            y = stage.forward(g, store, y, mode);
        }
        let out2 = self.head2.forward(g, store, y);
        DoubleUnetOutputs { out1, out2, gated_input }
    }
}
