use serde::{Deserialize, Serialize};

use super::{HierarchicalPredictor, ParamSet};
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_BASE_LR: f64 = 0.00025;
pub const DEFAULT_BATCH_SIZE: usize = 128;

/// SGD-with-momentum state: one buffer per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    buffers: ParamSet,
    pub momentum: f64,
    pub base_lr: f64,
    pub batch_size: usize,
}

impl OptimizerState {
    pub fn new(pred: &HierarchicalPredictor, momentum: f64, base_lr: f64, batch_size: usize) -> Self {
        Self {
            buffers: ParamSet::zeros_like(pred.params()),
            momentum,
            base_lr,
            batch_size,
        }
    }

    pub fn buffers(&self) -> &ParamSet {
        &self.buffers
    }

    pub fn reset(&mut self) {
        self.buffers.fill(0.0);
    }
}

/// `buffer = momentum * buffer + grad; param -= lr * buffer`.
pub fn sgd_step(pred: &mut HierarchicalPredictor, opt: &mut OptimizerState, grads: &ParamSet, lr: f64) {
    debug_assert!(lr >= 0.0);
    debug_assert_eq!(grads.len(), opt.buffers.len());
    let momentum = opt.momentum;
    for ((p, b), g) in pred
        .params_mut()
        .values_mut()
        .zip(opt.buffers.values_mut())
        .zip(grads.values())
    {
        *b = momentum * *b + g;
        *p -= lr * *b;
    }
}

/// Cosine annealing from `base_lr` at epoch 0 towards zero at `total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, base_lr: f64) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside schedule of {total_epochs} epochs"
        )));
    }
    let progress = epoch as f64 / total_epochs as f64;
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Quench: parameters back to the initial snapshot, momentum cleared.
pub fn restore_st0(pred: &mut HierarchicalPredictor, opt: &mut OptimizerState) {
    pred.reset_to_st0();
    opt.reset();
}
