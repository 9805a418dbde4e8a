use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, DatasetMeta, MultiRaterExample};
use crate::error::{Error, Result};
use crate::nnet::Matrix;
use crate::rng::{self, streams};

/// How a simulated annotator corrupts the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum AnnotatorSpec {
    /// Row `y` of the row-stochastic matrix is the label distribution given
    /// true class `y`.
    ConfusionMatrix(Matrix),
    /// Flips with a feature-dependent probability whose dataset mean is
    /// `rate`; the flipped label is uniform over the wrong classes.
    InstanceDependent { rate: f64, projection_seed: u64 },
}

impl AnnotatorSpec {
    pub fn confusion(matrix: Matrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::Shape(format!(
                "confusion matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        for r in 0..matrix.rows() {
            let row = matrix.row(r);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "confusion row {r} is not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(AnnotatorSpec::ConfusionMatrix(matrix))
    }

    /// Diagonal `accuracy`, remaining mass spread evenly over wrong classes.
    pub fn symmetric(n_classes: usize, accuracy: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) || n_classes < 2 {
            return Err(Error::Config(format!(
                "annotator accuracy must lie in [0, 1], got {accuracy}"
            )));
        }
        let off = (1.0 - accuracy) / (n_classes - 1) as f64;
        let mut m = Matrix::zeros(n_classes, n_classes);
        for r in 0..n_classes {
            for c in 0..n_classes {
                m.set(r, c, if r == c { accuracy } else { off });
            }
        }
        AnnotatorSpec::confusion(m)
    }

    pub fn instance_dependent(rate: f64, projection_seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "instance-dependent noise rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(AnnotatorSpec::InstanceDependent {
            rate,
            projection_seed,
        })
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the final cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Per-example flip probabilities `rate · σ(w·x) / mean σ(w·x)`, clipped to 1.
pub(crate) fn idn_flip_probabilities(dataset: &Dataset, rate: f64, projection_seed: u64) -> Vec<f64> {
    let mut prng = rng::stream(projection_seed, streams::IDN_PROJECTION);
    let w: Vec<f64> = (0..dataset.feature_dim())
        .map(|_| StandardNormal.sample(&mut prng))
        .collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let scores: Vec<f64> = dataset
        .examples
        .iter()
        .map(|ex| {
            let s: f64 = ex.features.iter().zip(&w).map(|(x, wi)| x * wi / norm).sum();
            1.0 / (1.0 + (-s).exp())
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    scores
        .iter()
        .map(|s| if mean > 0.0 { (rate * s / mean).min(1.0) } else { rate })
        .collect()
}

/// Replaces the dataset's annotations with one label per spec.
pub fn annotate(dataset: &Dataset, specs: &[AnnotatorSpec], seed: u64) -> Result<Dataset> {
    let gt = dataset.ground_truth()?;
    let c = dataset.n_classes();
    let mut labels = vec![Vec::with_capacity(specs.len()); dataset.len()];
    for (j, spec) in specs.iter().enumerate() {
        let mut rng = rng::stream(seed, streams::ANNOTATE * 1_000_003 + j as u64);
        match spec {
            AnnotatorSpec::ConfusionMatrix(m) => {
                if m.rows() != c {
                    return Err(Error::Shape(format!(
                        "annotator {j} confusion matrix is {}x{}, dataset has {c} classes",
                        m.rows(),
                        m.cols()
                    )));
                }
                for (i, &y) in gt.iter().enumerate() {
                    labels[i].push(sample_categorical(m.row(y), &mut rng));
                }
            }
            AnnotatorSpec::InstanceDependent {
                rate,
                projection_seed,
            } => {
                let flip = idn_flip_probabilities(dataset, *rate, *projection_seed);
                for (i, &y) in gt.iter().enumerate() {
                    let label = if rng.gen::<f64>() < flip[i] {
                        let k = rng.gen_range(0..c - 1);
                        if k >= y {
                            k + 1
                        } else {
                            k
                        }
                    } else {
                        y
                    };
                    labels[i].push(label);
                }
            }
        }
    }
    let examples = dataset
        .examples
        .iter()
        .zip(labels)
        .map(|(ex, annotations)| MultiRaterExample {
            features: ex.features.clone(),
            annotations,
            ground_truth: ex.ground_truth,
        })
        .collect();
    Dataset::new(
        DatasetMeta {
            n_annotators: specs.len(),
            ..dataset.meta
        },
        examples,
    )
}

/// Fraction of each annotator's labels that match the ground truth.
pub fn annotator_accuracy(dataset: &Dataset) -> Result<Vec<f64>> {
    let gt = dataset.ground_truth()?;
    let n = dataset.len().max(1) as f64;
    Ok((0..dataset.n_annotators())
        .map(|j| {
            dataset
                .examples
                .iter()
                .zip(&gt)
                .filter(|(ex, &y)| ex.annotations[j] == y)
                .count() as f64
                / n
        })
        .collect())
}

/// One of the example's annotations, chosen uniformly.
pub fn sample_noisy_label(example: &MultiRaterExample, seed: u64) -> usize {
    sample_noisy_label_with(example, &mut rng::seeded(seed))
}

pub(crate) fn sample_noisy_label_with<R: Rng + ?Sized>(
    example: &MultiRaterExample,
    rng: &mut R,
) -> usize {
    example.annotations[rng.gen_range(0..example.annotations.len())]
}
