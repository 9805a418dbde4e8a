use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Mini-batch SGD hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 200,
            batch_size: 256,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.learning_rate, self.momentum, self.weight_decay]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("optimizer settings must be finite".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity: Gradients,
}

impl SgdState {
    pub fn new(net: &Mlp) -> Self {
        SgdState {
            velocity: Gradients::zeros_like(net),
        }
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }
}

/// One momentum-SGD update.
///
/// Weights: `v ← μ·v + g + wd·w`, `w ← w − lr·v`. Biases follow the same rule
/// without the decay term. Nothing is modified if any gradient is non-finite.
pub fn sgd_step(
    net: &mut Mlp,
    grads: &Gradients,
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.weights.len() != net.num_layers() {
        return Err(Error::Shape(format!(
            "gradients cover {} layers, network has {}",
            grads.weights.len(),
            net.num_layers()
        )));
    }
    for (l, (gw, gb)) in grads.weights.iter().zip(&grads.biases).enumerate() {
        let w = &net.weights()[l];
        if gw.rows() != w.rows() || gw.cols() != w.cols() || gb.len() != w.cols() {
            return Err(Error::Shape(format!("gradient shape mismatch at layer {l}")));
        }
        if !gw.is_finite() || gb.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at layer {l}")));
        }
    }

    for l in 0..net.num_layers() {
        let vw = state.velocity.weights[l].values_mut();
        let w = net.weights_mut()[l].values_mut();
        for ((v, &g), p) in vw.iter_mut().zip(grads.weights[l].values()).zip(w.iter_mut()) {
            *v = momentum * *v + g + weight_decay * *p;
            *p -= lr * *v;
        }
        let vb = &mut state.velocity.biases[l];
        let b = &mut net.biases_mut()[l];
        for ((v, &g), p) in vb.iter_mut().zip(&grads.biases[l]).zip(b.iter_mut()) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
    Ok(())
}

/// Cosine-annealed learning rate `initial · ½(1 + cos(π·epoch/total))`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, initial: f64) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::Range(format!(
            "epoch {epoch} outside schedule of {total_epochs} epochs"
        )));
    }
    let t = epoch as f64 / total_epochs as f64;
    Ok(initial * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}
