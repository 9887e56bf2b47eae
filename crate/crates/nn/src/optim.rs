//! First-order optimizers with the usual Keras default constants.

use std::collections::HashMap;

use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use crate::params::{ParamId, ParamKind, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Adamax,
    Rmsprop,
    Sgd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] =
        [OptimizerKind::Adam, OptimizerKind::Adamax, OptimizerKind::Rmsprop, OptimizerKind::Sgd];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adamax => "adamax",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "adamax" => Ok(OptimizerKind::Adamax),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!("unknown optimizer `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
struct Slots {
    first: ArrayD<f64>,
    second: ArrayD<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const RHO: f64 = 0.9;
const EPS: f64 = 1e-7;

/// Optimizer state for one model; the learning rate is supplied per step so
/// that an external schedule owns it.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    slots: HashMap<ParamId, Slots>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, step: 0, slots: HashMap::new() }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, ArrayD<f64>)], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        for (id, grad) in grads {
            if store.kind(*id) != ParamKind::Trainable {
                continue;
            }
            let param = store.get_mut(*id);
            match self.kind {
                OptimizerKind::Sgd => {
                    Zip::from(param).and(grad).for_each(|p, &g| *p -= lr * g);
                }
                OptimizerKind::Rmsprop => {
                    let s = self.slots.entry(*id).or_insert_with(|| Slots {
                        first: ArrayD::zeros(grad.raw_dim()),
                        second: ArrayD::zeros(grad.raw_dim()),
                    });
                    Zip::from(param).and(&mut s.second).and(grad).for_each(|p, v, &g| {
                        *v = RHO * *v + (1.0 - RHO) * g * g;
                        *p -= lr * g / (v.sqrt() + EPS);
                    });
                }
                OptimizerKind::Adam => {
                    let s = self.slots.entry(*id).or_insert_with(|| Slots {
                        first: ArrayD::zeros(grad.raw_dim()),
                        second: ArrayD::zeros(grad.raw_dim()),
                    });
                    let c1 = 1.0 - BETA1.powi(t);
                    let c2 = 1.0 - BETA2.powi(t);
                    Zip::from(param).and(&mut s.first).and(&mut s.second).and(grad).for_each(|p, m, v, &g| {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                    });
                }
                OptimizerKind::Adamax => {
                    let s = self.slots.entry(*id).or_insert_with(|| Slots {
                        first: ArrayD::zeros(grad.raw_dim()),
                        second: ArrayD::zeros(grad.raw_dim()),
                    });
                    let c1 = 1.0 - BETA1.powi(t);
                    Zip::from(param).and(&mut s.first).and(&mut s.second).and(grad).for_each(|p, m, u, &g| {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *u = (BETA2 * *u).max(g.abs());
                        *p -= lr / c1 * *m / (*u + EPS);
                    });
                }
            }
        }
    }
}
