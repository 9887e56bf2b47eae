//! Parameterised building blocks that register their tensors in a [`ParamStore`].

use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;

use crate::conv::ConvGeom;
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamId, ParamStore};

/// Whether a forward pass updates batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        self == Mode::Train
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: ConvGeom,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        geom: ConvGeom,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = store.init(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel, kernel],
            Init::HeNormal { fan_in },
            rng,
        );
        let bias = Some(store.init(format!("{name}.bias"), &[out_channels], Init::Zeros, rng));
        Self { weight, bias, geom, in_channels, out_channels, kernel }
    }

    /// Stride-1 "same" convolution.
    pub fn same(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    ) -> Self {
        Self::new(store, rng, name, in_channels, out_channels, kernel, ConvGeom::same(kernel, 1))
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, w, b, self.geom)
    }

    /// Sets weight and bias to zero.
    pub fn zero(&self, store: &mut ParamStore) {
        store.get_mut(self.weight).fill(0.0);
        if let Some(b) = self.bias {
            store.get_mut(b).fill(0.0);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, channels: usize) -> Self {
        let gamma = store.init(format!("{name}.gamma"), &[channels], Init::Ones, rng);
        let beta = store.init(format!("{name}.beta"), &[channels], Init::Zeros, rng);
        let running_mean = store.buffer(format!("{name}.running_mean"), ArrayD::zeros(IxDyn(&[channels])));
        let running_var = store.buffer(format!("{name}.running_var"), ArrayD::ones(IxDyn(&[channels])));
        Self { gamma, beta, running_mean, running_var, momentum: 0.1, eps: 1e-3 }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.batch_norm(
            store,
            x,
            gamma,
            beta,
            (self.running_mean, self.running_var),
            mode.is_train(),
            self.momentum,
            self.eps,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, inputs: usize, outputs: usize) -> Self {
        let weight = store.init(
            format!("{name}.weight"),
            &[inputs, outputs],
            Init::GlorotUniform { fan_in: inputs, fan_out: outputs },
            rng,
        );
        let bias = store.init(format!("{name}.bias"), &[outputs], Init::Zeros, rng);
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.linear(x, w, b)
    }
}
