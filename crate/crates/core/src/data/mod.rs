//! Multi-rater datasets: synthetic generation, simulated annotators and the
//! CSV interchange format.

pub(crate) mod annotators;
mod blobs;
mod csv;

pub use annotators::{annotate, annotator_accuracy, sample_noisy_label, AnnotatorSpec};
pub use blobs::{gen_blobs, BlobConfig};
pub use csv::{from_csv_str, load_csv, save_csv, to_csv_string};

use crate::error::{Error, Result};
use crate::nnet::Matrix;

/// One input with its `M` annotator labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRaterExample {
    pub features: Vec<f64>,
    pub annotations: Vec<usize>,
    pub ground_truth: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetMeta {
    pub n_classes: usize,
    pub n_annotators: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub examples: Vec<MultiRaterExample>,
}

impl Dataset {
    /// Validates every example against `meta`.
    pub fn new(meta: DatasetMeta, examples: Vec<MultiRaterExample>) -> Result<Self> {
        if meta.n_classes < 2 || meta.feature_dim == 0 {
            return Err(Error::Config(format!(
                "dataset needs ≥ 2 classes and ≥ 1 feature, got {} and {}",
                meta.n_classes, meta.feature_dim
            )));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != meta.feature_dim {
                return Err(Error::Shape(format!(
                    "example {i} has {} features, expected {}",
                    ex.features.len(),
                    meta.feature_dim
                )));
            }
            if ex.annotations.len() != meta.n_annotators {
                return Err(Error::Shape(format!(
                    "example {i} has {} annotations, expected {}",
                    ex.annotations.len(),
                    meta.n_annotators
                )));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("example {i} has a non-finite feature")));
            }
            let bad = ex
                .annotations
                .iter()
                .chain(ex.ground_truth.iter())
                .any(|&c| c >= meta.n_classes);
            if bad {
                return Err(Error::Range(format!(
                    "example {i} has a class index outside [0, {})",
                    meta.n_classes
                )));
            }
        }
        Ok(Dataset { meta, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.meta.n_classes
    }

    pub fn n_annotators(&self) -> usize {
        self.meta.n_annotators
    }

    pub fn feature_dim(&self) -> usize {
        self.meta.feature_dim
    }

    /// Features stacked into an `n × d` matrix.
    pub fn features(&self) -> Matrix {
        self.features_of(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn features_of(&self, idx: &[usize]) -> Matrix {
        let d = self.feature_dim();
        let mut values = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            values.extend_from_slice(&self.examples[i].features);
        }
        Matrix::from_vec(idx.len(), d, values).expect("validated features")
    }

    /// Ground-truth labels, failing if any example lacks one.
    pub fn ground_truth(&self) -> Result<Vec<usize>> {
        self.examples
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                ex.ground_truth
                    .ok_or_else(|| Error::State(format!("example {i} has no ground truth")))
            })
            .collect()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.examples.iter().all(|ex| ex.ground_truth.is_some())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            meta: self.meta,
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}
