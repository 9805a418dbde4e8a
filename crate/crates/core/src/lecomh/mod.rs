//! Learning to complement with multiple humans.
//!
//! A selection network `g` maps features to a distribution over `M + 1`
//! collaboration formats (AI alone, AI + 1 annotator, …, AI + M annotators).
//! A collaboration network `h` reads the AI probability vector followed by
//! `M` annotation slots, gated by the sampled format, and emits the final
//! class distribution. Both are trained on consensus labels with a
//! cross-entropy term plus `λ` times the expected number of annotators.

mod gating;
mod loss;
mod predict;
mod train;

pub use gating::{
    assemble_input, cost, gates, gumbel_softmax, gumbel_softmax_with_noise, permute_annotations,
    sample_gumbel, SelectionSample,
};
pub use loss::{lecomh_loss, BatchNoise, LossBatch, LossOutput};
pub use predict::{final_prediction, predict_batch, Prediction, SelectionMode};
pub use train::{train_lecomh, EpochLog, TrainingLog};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Mlp, OptConfig};
use crate::pretrain::Classifier;

/// `g_φ`: features → `M + 1` selection logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionNet {
    pub net: Mlp,
}

/// `h_ψ`: `(M + 1)·|𝓨|` gated evidence → `|𝓨|` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CollabNet {
    pub net: Mlp,
}

impl SelectionNet {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        hidden: &[usize],
        n_annotators: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![feature_dim];
        sizes.extend(hidden);
        sizes.push(n_annotators + 1);
        Ok(SelectionNet {
            net: Mlp::new(&sizes, rng)?,
        })
    }

    pub fn n_annotators(&self) -> usize {
        self.net.output_dim() - 1
    }
}

impl CollabNet {
    pub fn new<R: Rng + ?Sized>(
        n_classes: usize,
        n_annotators: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![(n_annotators + 1) * n_classes];
        sizes.extend(hidden);
        sizes.push(n_classes);
        Ok(CollabNet {
            net: Mlp::new(&sizes, rng)?,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.net.output_dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LecomhConfig {
    /// Weight of the annotation cost term.
    pub lambda: f64,
    /// Gumbel-softmax temperature.
    pub temperature: f64,
    pub opt: OptConfig,
    pub freeze_classifier: bool,
    /// Deterministic argmax selection at evaluation instead of a Gumbel draw.
    pub hard_eval: bool,
    pub selection_hidden: Vec<usize>,
    pub collab_hidden: Vec<usize>,
}

impl Default for LecomhConfig {
    fn default() -> Self {
        LecomhConfig {
            lambda: 0.0,
            temperature: 5.0,
            opt: OptConfig::default(),
            freeze_classifier: true,
            hard_eval: true,
            selection_hidden: vec![64],
            collab_hidden: vec![512, 512],
        }
    }
}

impl LecomhConfig {
    pub fn validate(&self) -> Result<()> {
        self.opt.validate()?;
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be a nonnegative finite number, got {}",
                self.lambda
            )));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.selection_hidden.contains(&0) || self.collab_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn selection_mode(&self) -> SelectionMode {
        if self.hard_eval {
            SelectionMode::Argmax
        } else {
            SelectionMode::Sampled
        }
    }
}

/// The classifier with trained selection and collaboration networks.
#[derive(Debug, Clone, PartialEq)]
pub struct LecomhModel {
    pub classifier: Classifier,
    pub selection: SelectionNet,
    pub collab: CollabNet,
    pub temperature: f64,
}

impl LecomhModel {
    pub fn new(
        classifier: Classifier,
        selection: SelectionNet,
        collab: CollabNet,
        temperature: f64,
    ) -> Result<Self> {
        let (c, m) = (classifier.n_classes(), selection.n_annotators());
        if selection.net.input_dim() != classifier.net.input_dim() {
            return Err(Error::Shape(
                "selection network and classifier read different feature widths".into(),
            ));
        }
        if collab.net.input_dim() != (m + 1) * c || collab.n_classes() != c {
            return Err(Error::Shape(format!(
                "collaboration network must map {} → {c}, got {} → {}",
                (m + 1) * c,
                collab.net.input_dim(),
                collab.net.output_dim()
            )));
        }
        Ok(LecomhModel {
            classifier,
            selection,
            collab,
            temperature,
        })
    }

    pub fn n_annotators(&self) -> usize {
        self.selection.n_annotators()
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.n_classes()
    }

    /// Writes `selection.weights` and `collab.weights` into `dir`.
    pub fn save_nets(&self, dir: &Path) -> Result<()> {
        for (name, net) in [("selection.weights", &self.selection.net), ("collab.weights", &self.collab.net)] {
            let p = dir.join(name);
            std::fs::write(&p, net.to_text()).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn load_nets(dir: &Path, classifier: Classifier, temperature: f64) -> Result<Self> {
        let read = |name: &str| -> Result<Mlp> {
            let p = dir.join(name);
            Mlp::from_text(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)
        };
        LecomhModel::new(
            classifier,
            SelectionNet {
                net: read("selection.weights")?,
            },
            CollabNet {
                net: read("collab.weights")?,
            },
            temperature,
        )
    }
}
