//! Noisy-label pre-training of the frozen AI classifier.
//!
//! Each epoch draws one annotation per example uniformly at random and trains
//! with softmax cross-entropy. After `warmup_epochs`, each mini-batch keeps
//! only the `small_loss_keep_ratio` fraction of examples with the lowest loss.
//! The returned network is the epoch snapshot with the best accuracy on a 10%
//! held-out split labelled with sampled annotations.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{annotators::sample_noisy_label_with, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::nnet::{
    cosine_lr, one_hot, per_example_cross_entropy, sgd_step, softmax, Matrix, Mlp, OptConfig,
    SgdState,
};
use crate::rng::{self, streams};

/// Fraction of the training set held out for snapshot selection.
pub const HELD_OUT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub net: Mlp,
    pub meta: DatasetMeta,
}

impl Classifier {
    pub fn new(net: Mlp, meta: DatasetMeta) -> Result<Self> {
        if net.output_dim() != meta.n_classes || net.input_dim() != meta.feature_dim {
            return Err(Error::Shape(format!(
                "classifier maps {} → {}, dataset needs {} → {}",
                net.input_dim(),
                net.output_dim(),
                meta.feature_dim,
                meta.n_classes
            )));
        }
        Ok(Classifier { net, meta })
    }

    pub fn n_classes(&self) -> usize {
        self.meta.n_classes
    }

    /// Softmax probabilities, one row per input.
    pub fn probs(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax(&self.net.forward(x)?))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.net.forward(x)?.argmax_rows())
    }

    /// Writes the weights file and a `<path>.meta` sidecar line.
    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        std::fs::write(path, self.net.to_text()).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let line = format!(
            "classes={} dim={} seed={} config={}\n",
            self.meta.n_classes, self.meta.feature_dim, self.meta.seed, config_hash
        );
        std::fs::write(&side, line).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let net = Mlp::from_text(&text)?;
        let side = sidecar_path(path);
        let meta_line = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let mut meta = DatasetMeta {
            n_classes: net.output_dim(),
            n_annotators: 0,
            feature_dim: net.input_dim(),
            seed: 0,
        };
        for tok in meta_line.split_whitespace() {
            if let Some(("seed", v)) = tok.split_once('=') {
                meta.seed = v.parse().map_err(|_| Error::Parse {
                    path: side.display().to_string(),
                    line: 1,
                    msg: format!("bad seed {v:?}"),
                })?;
            }
        }
        Classifier::new(net, meta)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    p.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub opt: OptConfig,
    pub small_loss_keep_ratio: f64,
    pub warmup_epochs: usize,
    pub hidden: Vec<usize>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            opt: OptConfig {
                epochs: 30,
                batch_size: 128,
                ..OptConfig::default()
            },
            small_loss_keep_ratio: 1.0,
            warmup_epochs: 5,
            hidden: vec![64],
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.opt.validate()?;
        if !(self.small_loss_keep_ratio > 0.0 && self.small_loss_keep_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "small_loss_keep_ratio must lie in (0, 1], got {}",
                self.small_loss_keep_ratio
            )));
        }
        if self.warmup_epochs > self.opt.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.opt.epochs
            )));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    /// Held-out accuracy (against sampled labels) after each epoch.
    pub held_out_accuracy: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub best_epoch: usize,
}

pub fn pretrain_classifier(dataset: &Dataset, cfg: &PretrainConfig, seed: u64) -> Result<Classifier> {
    pretrain_with_report(dataset, cfg, seed).map(|(c, _)| c)
}

/// Indices of the `k` smallest losses, ties kept in batch order.
fn small_loss_rows(losses: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn pretrain_with_report(
    dataset: &Dataset,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(Classifier, PretrainReport)> {
    cfg.validate()?;
    if dataset.n_annotators() == 0 {
        return Err(Error::Config("pretraining needs at least one annotator".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Config("pretraining needs a nonempty dataset".into()));
    }
    let c = dataset.n_classes();
    let mut sizes = vec![dataset.feature_dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(c);
    let mut net = Mlp::new(&sizes, &mut rng::stream(seed, streams::PRETRAIN_INIT))?;

    let mut split_rng = rng::stream(seed, streams::PRETRAIN_SPLIT);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut split_rng);
    let n_held = if dataset.len() >= 10 {
        ((dataset.len() as f64) * HELD_OUT_FRACTION).round() as usize
    } else {
        0
    };
    let (held_idx, train_idx) = order.split_at(n_held);
    let mut train_idx = train_idx.to_vec();
    let held_x = dataset.features_of(held_idx);
    let held_y: Vec<usize> = held_idx
        .iter()
        .map(|&i| sample_noisy_label_with(&dataset.examples[i], &mut split_rng))
        .collect();

    let mut epoch_rng = rng::stream(seed, streams::PRETRAIN_EPOCH);
    let mut state = SgdState::new(&net);
    let mut best: Option<(f64, usize, Mlp)> = None;
    let mut report = PretrainReport {
        held_out_accuracy: Vec::new(),
        train_loss: Vec::new(),
        best_epoch: 0,
    };
    let bs = cfg.opt.batch_size;

    for epoch in 0..cfg.opt.epochs {
        let lr = cosine_lr(epoch, cfg.opt.epochs, cfg.opt.learning_rate)?;
        train_idx.shuffle(&mut epoch_rng);
        let labels: Vec<usize> = train_idx
            .iter()
            .map(|&i| sample_noisy_label_with(&dataset.examples[i], &mut epoch_rng))
            .collect();
        let select = epoch >= cfg.warmup_epochs && cfg.small_loss_keep_ratio < 1.0;

        let mut loss_sum = 0.0;
        for (chunk, chunk_labels) in train_idx.chunks(bs).zip(labels.chunks(bs)) {
            let x = dataset.features_of(chunk);
            let t = one_hot(chunk_labels, c);
            let (logits, tape) = net.forward_tape(&x)?;
            let p = softmax(&logits);
            let losses = per_example_cross_entropy(&p, &t)?;
            let kept: Vec<usize> = if select {
                let k = ((chunk.len() as f64) * cfg.small_loss_keep_ratio).ceil() as usize;
                small_loss_rows(&losses, k.max(1))
            } else {
                (0..chunk.len()).collect()
            };
            let k = kept.len() as f64;
            let mut grad = Matrix::zeros(chunk.len(), c);
            for &r in &kept {
                loss_sum += losses[r];
                for (g, (pv, tv)) in grad.row_mut(r).iter_mut().zip(p.row(r).iter().zip(t.row(r))) {
                    *g = (pv - tv) / k;
                }
            }
            if !loss_sum.is_finite() {
                return Err(Error::Numeric(format!("pretraining diverged at epoch {epoch}")));
            }
            let b = net.backward(&tape, &grad)?;
            sgd_step(
                &mut net,
                &b.grads,
                &mut state,
                lr,
                cfg.opt.momentum,
                cfg.opt.weight_decay,
            )
            .map_err(|e| Error::Numeric(format!("pretraining epoch {epoch}: {e}")))?;
        }
        report.train_loss.push(loss_sum / train_idx.len().max(1) as f64);

        let acc = if held_idx.is_empty() {
            0.0
        } else {
            let pred = net.forward(&held_x)?.argmax_rows();
            pred.iter().zip(&held_y).filter(|(a, b)| a == b).count() as f64 / held_y.len() as f64
        };
        report.held_out_accuracy.push(acc);
        // with no held-out split the latest epoch always wins
        let better = match &best {
            None => true,
            Some((b, _, _)) => acc > *b || held_idx.is_empty(),
        };
        if better {
            best = Some((acc, epoch, net.clone()));
        }
    }
    let (_, best_epoch, best_net) = best.expect("at least one epoch");
    report.best_epoch = best_epoch;
    let meta = DatasetMeta {
        n_annotators: 0,
        seed,
        ..dataset.meta
    };
    Ok((Classifier::new(best_net, meta)?, report))
}

/// Argmax accuracy against ground truth.
pub fn evaluate_classifier(classifier: &Classifier, dataset: &Dataset) -> Result<f64> {
    let gt = dataset.ground_truth()?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    let pred = classifier.predict(&dataset.features())?;
    Ok(pred.iter().zip(&gt).filter(|(a, b)| a == b).count() as f64 / gt.len() as f64)
}
