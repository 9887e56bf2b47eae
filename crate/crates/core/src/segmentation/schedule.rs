//! Learning-rate plateau reduction and early stopping as pure state machines.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub factor: f64,
}

impl PlateauState {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self { best_val_loss: f64::INFINITY, epochs_since_improvement: 0, patience, factor }
    }
}

/// Feeds one epoch's validation loss; returns the learning rate for the next epoch.
pub fn plateau_step(state: PlateauState, val_loss: f64, current_lr: f64) -> (f64, PlateauState) {
    let mut s = state;
    if val_loss < s.best_val_loss {
        s.best_val_loss = val_loss;
        s.epochs_since_improvement = 0;
        return (current_lr, s);
    }
    s.epochs_since_improvement += 1;
    if s.epochs_since_improvement >= s.patience {
        s.epochs_since_improvement = 0;
        return (current_lr * s.factor, s);
    }
    (current_lr, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
    pub patience: usize,
}

impl EarlyStopState {
    pub fn new(patience: usize) -> Self {
        Self { best_val_loss: f64::INFINITY, epochs_since_improvement: 0, patience }
    }
}

/// True once `patience` consecutive epochs pass without a new best.
pub fn early_stop_step(state: EarlyStopState, val_loss: f64) -> (bool, EarlyStopState) {
    let mut s = state;
    if val_loss < s.best_val_loss {
        s.best_val_loss = val_loss;
        s.epochs_since_improvement = 0;
    } else {
        s.epochs_since_improvement += 1;
    }
    (s.epochs_since_improvement >= s.patience, s)
}
