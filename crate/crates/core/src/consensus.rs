//! Consensus labels from annotators plus classifier evidence.
//!
//! Every example gets a score vector
//! `s = w_clf · p_clf + Σ_j w_j · onehot(m_j)`, normalized to sum 1. The
//! consensus label is `argmax s` and the quality score `α = max s`. Weights
//! are chance-corrected agreement rates with the majority vote. Only records
//! with `α` above the threshold (0.5 by default) are kept for training.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MultiRaterExample};
use crate::error::{Error, Result};
use crate::nnet::{argmax, Matrix};
use crate::pretrain::Classifier;

/// Relative tolerance for treating two scores as tied.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusRecord {
    pub label: usize,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub alpha_threshold: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            alpha_threshold: 0.5,
        }
    }
}

/// Among `candidates`, the one with the highest `tiebreak` value; equal
/// values fall back to the lowest index.
fn break_tie(candidates: &[usize], tiebreak: Option<&[f64]>) -> usize {
    let mut best = candidates[0];
    if let Some(tb) = tiebreak {
        for &c in &candidates[1..] {
            if tb[c] > tb[best] {
                best = c;
            }
        }
    }
    best
}

fn tied_maxima(scores: &[f64]) -> Vec<usize> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_EPS * max.abs().max(1.0);
    (0..scores.len())
        .filter(|&k| scores[k] >= max - tol)
        .collect()
}

/// Most frequent label. Ties go to the tied label with the highest
/// `tiebreak_probs` entry, else to the lowest class index.
pub fn majority_vote(annotations: &[usize], n_classes: usize, tiebreak_probs: Option<&[f64]>) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &a in annotations {
        counts[a] += 1;
    }
    let max = *counts.iter().max().unwrap_or(&0);
    let tied: Vec<usize> = (0..n_classes).filter(|&k| counts[k] == max).collect();
    break_tie(&tied, tiebreak_probs)
}

/// Linear weighted ensemble of classifier probabilities and annotator votes.
///
/// Ties in the score vector go to the tied class the classifier rates most
/// probable, else the lowest index.
pub fn weighted_consensus(
    classifier_probs: &[f64],
    annotations: &[usize],
    annotator_weights: &[f64],
    classifier_weight: f64,
) -> Result<ConsensusRecord> {
    if annotations.len() != annotator_weights.len() {
        return Err(Error::Shape(format!(
            "{} annotations but {} annotator weights",
            annotations.len(),
            annotator_weights.len()
        )));
    }
    let all = annotator_weights.iter().chain(std::iter::once(&classifier_weight));
    if all.clone().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Config("consensus weights must be finite and nonnegative".into()));
    }
    let total: f64 = all.sum();
    if total <= 0.0 {
        return Err(Error::Config("all consensus weights are zero".into()));
    }
    let mut s: Vec<f64> = classifier_probs.iter().map(|p| classifier_weight * p).collect();
    for (&m, &w) in annotations.iter().zip(annotator_weights) {
        if m >= s.len() {
            return Err(Error::Range(format!("annotation {m} outside [0, {})", s.len())));
        }
        s[m] += w;
    }
    let norm: f64 = s.iter().sum();
    s.iter_mut().for_each(|v| *v /= norm);
    let label = break_tie(&tied_maxima(&s), Some(classifier_probs));
    Ok(ConsensusRecord {
        label,
        quality: s[label],
    })
}

fn chance_corrected(agreement: f64, n_classes: usize) -> f64 {
    let chance = 1.0 / n_classes as f64;
    ((agreement - chance) / (1.0 - chance)).max(0.0)
}

/// Per-annotator and classifier weights: agreement with the majority vote
/// (ties broken by the classifier), rescaled so chance agreement maps to 0
/// and perfect agreement to 1.
pub fn estimate_weights(dataset: &Dataset, classifier_probs: &Matrix) -> Result<(Vec<f64>, f64)> {
    if classifier_probs.rows() != dataset.len() || classifier_probs.cols() != dataset.n_classes() {
        return Err(Error::Shape(format!(
            "classifier probabilities are {}x{}, dataset is {}x{}",
            classifier_probs.rows(),
            classifier_probs.cols(),
            dataset.len(),
            dataset.n_classes()
        )));
    }
    let c = dataset.n_classes();
    let n = dataset.len().max(1) as f64;
    let mut agree = vec![0usize; dataset.n_annotators()];
    let mut clf_agree = 0usize;
    for (i, ex) in dataset.examples.iter().enumerate() {
        let probs = classifier_probs.row(i);
        let mv = majority_vote(&ex.annotations, c, Some(probs));
        for (a, &m) in agree.iter_mut().zip(&ex.annotations) {
            if m == mv {
                *a += 1;
            }
        }
        if argmax(probs) == mv {
            clf_agree += 1;
        }
    }
    let annotator_weights = agree
        .iter()
        .map(|&a| chance_corrected(a as f64 / n, c))
        .collect();
    Ok((annotator_weights, chance_corrected(clf_agree as f64 / n, c)))
}

/// Consensus records for a whole dataset plus the α-filtered subset used for
/// training.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusDataset {
    dataset: Dataset,
    records: Vec<ConsensusRecord>,
    retained: Vec<usize>,
    threshold: f64,
}

impl ConsensusDataset {
    /// Checks that the retained set is exactly the records above threshold.
    pub fn new(dataset: Dataset, records: Vec<ConsensusRecord>, threshold: f64) -> Result<Self> {
        if records.len() != dataset.len() {
            return Err(Error::Shape(format!(
                "{} consensus records for {} examples",
                records.len(),
                dataset.len()
            )));
        }
        for (i, r) in records.iter().enumerate() {
            if !r.quality.is_finite() || r.label >= dataset.n_classes() {
                return Err(Error::Contract(format!("consensus record {i} is invalid")));
            }
        }
        let retained: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].quality > threshold)
            .collect();
        if retained.is_empty() {
            return Err(Error::Config(format!(
                "no example has consensus quality above {threshold}; lower consensus.alpha_threshold"
            )));
        }
        Ok(ConsensusDataset {
            dataset,
            records,
            retained,
            threshold,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The source dataset, including examples filtered out.
    pub fn source(&self) -> &Dataset {
        &self.dataset
    }

    pub fn all_records(&self) -> &[ConsensusRecord] {
        &self.records
    }

    pub fn retained_indices(&self) -> &[usize] {
        &self.retained
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn retention(&self) -> f64 {
        self.retained.len() as f64 / self.records.len().max(1) as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiRaterExample, &ConsensusRecord)> {
        self.retained
            .iter()
            .map(|&i| (&self.dataset.examples[i], &self.records[i]))
    }

    /// The retained examples as a standalone dataset.
    pub fn retained_dataset(&self) -> Dataset {
        self.dataset.subset(&self.retained)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.retained.iter().map(|&i| self.records[i].label).collect()
    }

    /// `index,consensus_label,alpha,retained`, one row per source example.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,consensus_label,alpha,retained\n");
        let mut keep = self.retained.iter().peekable();
        for (i, r) in self.records.iter().enumerate() {
            let is_kept = keep.peek() == Some(&&i);
            if is_kept {
                keep.next();
            }
            let _ = writeln!(out, "{i},{},{},{}", r.label, r.quality, u8::from(is_kept));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Rebuilds from an exported CSV, re-checking the quality filter.
    pub fn from_csv(dataset: Dataset, text: &str, threshold: f64) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: "<consensus>".into(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "index,consensus_label,alpha,retained")) => {}
            _ => return Err(err(1, "missing consensus header".into())),
        }
        let mut records = Vec::new();
        let mut flagged = Vec::new();
        for (no, line) in lines {
            let no = no + 1;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err(no, format!("expected 4 fields, found {}", f.len())));
            }
            let index: usize = f[0].parse().map_err(|_| err(no, "bad index".into()))?;
            if index != records.len() {
                return Err(err(no, format!("index {index} out of sequence")));
            }
            let label = f[1].parse().map_err(|_| err(no, "bad label".into()))?;
            let quality = f[2].parse().map_err(|_| err(no, "bad alpha".into()))?;
            if f[3] == "1" {
                flagged.push(index);
            }
            records.push(ConsensusRecord { label, quality });
        }
        let cds = ConsensusDataset::new(dataset, records, threshold)?;
        if cds.retained != flagged {
            return Err(Error::Contract(
                "retained flags disagree with the quality threshold".into(),
            ));
        }
        Ok(cds)
    }
}

/// Builds the consensus dataset from precomputed classifier probabilities.
pub fn build_consensus_from_probs(
    dataset: &Dataset,
    classifier_probs: &Matrix,
    cfg: &ConsensusConfig,
) -> Result<ConsensusDataset> {
    if dataset.is_empty() {
        return Err(Error::Config("consensus needs at least one example".into()));
    }
    let (aw, cw) = estimate_weights(dataset, classifier_probs)?;
    let records = dataset
        .examples
        .iter()
        .enumerate()
        .map(|(i, ex)| weighted_consensus(classifier_probs.row(i), &ex.annotations, &aw, cw))
        .collect::<Result<Vec<_>>>()?;
    ConsensusDataset::new(dataset.clone(), records, cfg.alpha_threshold)
}

pub fn build_consensus_dataset(
    dataset: &Dataset,
    classifier: &Classifier,
    cfg: &ConsensusConfig,
) -> Result<ConsensusDataset> {
    let probs = classifier.probs(&dataset.features())?;
    build_consensus_from_probs(dataset, &probs, cfg)
}

/// Fraction of retained records whose consensus label equals ground truth.
pub fn consensus_accuracy(cds: &ConsensusDataset) -> Result<f64> {
    let mut correct = 0usize;
    for (i, (ex, r)) in cds.iter().enumerate() {
        let gt = ex
            .ground_truth
            .ok_or_else(|| Error::State(format!("retained example {i} has no ground truth")))?;
        if gt == r.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / cds.len().max(1) as f64)
}

/// Accuracy of the plain majority vote (lowest-index ties) on every example.
pub fn majority_vote_accuracy(dataset: &Dataset) -> Result<f64> {
    let gt = dataset.ground_truth()?;
    let c = dataset.n_classes();
    let correct = dataset
        .examples
        .iter()
        .zip(&gt)
        .filter(|(ex, &y)| majority_vote(&ex.annotations, c, None) == y)
        .count();
    Ok(correct as f64 / gt.len().max(1) as f64)
}
