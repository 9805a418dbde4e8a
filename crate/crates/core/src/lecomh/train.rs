use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use super::loss::{lecomh_loss, BatchNoise, LossBatch};
use super::{CollabNet, LecomhConfig, LecomhModel, SelectionNet};
use crate::consensus::ConsensusDataset;
use crate::error::{Error, Result};
use crate::nnet::{cosine_lr, sgd_step, SgdState};
use crate::pretrain::Classifier;
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub ce: f64,
    pub cost: f64,
    /// Fraction of training draws whose sampled format was AI alone.
    pub coverage: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,ce,cost,coverage,lr\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.epoch, e.loss, e.ce, e.cost, e.coverage, e.lr
            );
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Trains the selection and collaboration networks on the retained consensus
/// examples.
pub fn train_lecomh(
    data: &ConsensusDataset,
    classifier: &Classifier,
    cfg: &LecomhConfig,
    seed: u64,
) -> Result<(LecomhModel, TrainingLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("LECOMH training needs a nonempty consensus dataset".into()));
    }
    let source = data.source();
    let (c, m) = (source.n_classes(), source.n_annotators());
    if m == 0 {
        return Err(Error::Config("LECOMH training needs at least one annotator".into()));
    }
    if classifier.n_classes() != c || classifier.net.input_dim() != source.feature_dim() {
        return Err(Error::Shape("classifier does not match the consensus dataset".into()));
    }

    let mut init = rng::stream(seed, streams::LECOMH_INIT);
    let selection = SelectionNet::new(source.feature_dim(), &cfg.selection_hidden, m, &mut init)?;
    let collab = CollabNet::new(c, m, &cfg.collab_hidden, &mut init)?;
    let mut model = LecomhModel::new(classifier.clone(), selection, collab, cfg.temperature)?;

    let retained = data.retained_indices();
    let x = source.features_of(retained);
    let labels = data.labels();
    let annotations: Vec<&[usize]> = retained
        .iter()
        .map(|&i| source.examples[i].annotations.as_slice())
        .collect();
    let ai_all = if cfg.freeze_classifier {
        Some(classifier.probs(&x)?)
    } else {
        None
    };

    let mut sel_state = SgdState::new(&model.selection.net);
    let mut collab_state = SgdState::new(&model.collab.net);
    let mut clf_state = SgdState::new(&model.classifier.net);
    let mut epoch_rng = rng::stream(seed, streams::LECOMH_EPOCH);
    let mut order: Vec<usize> = (0..retained.len()).collect();
    let n = retained.len() as f64;
    let opt = &cfg.opt;
    let mut log = TrainingLog::default();

    for epoch in 0..opt.epochs {
        let lr = cosine_lr(epoch, opt.epochs, opt.learning_rate)?;
        order.shuffle(&mut epoch_rng);
        let (mut loss, mut ce, mut cost, mut ai_alone) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(opt.batch_size) {
            let bx = x.select_rows(chunk);
            let bai = ai_all.as_ref().map(|p| p.select_rows(chunk));
            let by: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let banns: Vec<&[usize]> = chunk.iter().map(|&i| annotations[i]).collect();
            let noise = BatchNoise::draw(&mut epoch_rng, &banns);
            let batch = LossBatch {
                features: &bx,
                ai_probs: bai.as_ref(),
                labels: &by,
            };
            let out = lecomh_loss(&batch, &model, cfg, &noise)
                .map_err(|e| stage_error(epoch, e))?;
            let w = chunk.len() as f64;
            loss += out.loss * w;
            ce += out.ce * w;
            cost += out.cost * w;
            ai_alone += out.ai_alone;

            let step = |net, g, s| sgd_step(net, g, s, lr, opt.momentum, opt.weight_decay);
            step(&mut model.selection.net, &out.selection_grads, &mut sel_state)
                .map_err(|e| stage_error(epoch, e))?;
            step(&mut model.collab.net, &out.collab_grads, &mut collab_state)
                .map_err(|e| stage_error(epoch, e))?;
            if let Some(g) = &out.classifier_grads {
                step(&mut model.classifier.net, g, &mut clf_state)
                    .map_err(|e| stage_error(epoch, e))?;
            }
        }
        log.epochs.push(EpochLog {
            epoch,
            loss: loss / n,
            ce: ce / n,
            cost: cost / n,
            coverage: ai_alone as f64 / n,
            lr,
        });
    }
    Ok((model, log))
}

fn stage_error(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("LECOMH training epoch {epoch}: {msg}")),
        other => other,
    }
}

