use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, MultiRaterExample};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub n_classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Distance between any two class centres (when `n_classes ≤ dim`).
    pub class_separation: f64,
}

/// Isotropic unit-variance Gaussian clusters, one per class.
///
/// With `n_classes ≤ dim` the centres sit at `(sep/√2)·e_k`, so every pair of
/// classes is exactly `sep` apart. Otherwise centres are random directions of
/// the same norm. Labels are balanced to within one example per class.
pub fn gen_blobs(cfg: &BlobConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    if cfg.n_classes < 2 || cfg.dim < 2 {
        return Err(Error::Config(format!(
            "blobs need n_classes ≥ 2 and dim ≥ 2, got {} and {}",
            cfg.n_classes, cfg.dim
        )));
    }
    if !cfg.class_separation.is_finite() || cfg.class_separation < 0.0 {
        return Err(Error::Config(format!(
            "class_separation must be a nonnegative finite number, got {}",
            cfg.class_separation
        )));
    }
    let mut rng = rng::stream(seed, streams::BLOBS);
    let radius = cfg.class_separation / std::f64::consts::SQRT_2;
    let centres: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|k| {
            if cfg.n_classes <= cfg.dim {
                let mut c = vec![0.0; cfg.dim];
                c[k] = radius;
                c
            } else {
                let v: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x * radius / norm).collect()
            }
        })
        .collect();

    let meta = DatasetMeta {
        n_classes: cfg.n_classes,
        n_annotators: 0,
        feature_dim: cfg.dim,
        seed,
    };
    let make = |n: usize, rng: &mut rng::RunRng| {
        let mut labels: Vec<usize> = (0..n).map(|i| i % cfg.n_classes).collect();
        labels.shuffle(rng);
        let examples = labels
            .into_iter()
            .map(|y| MultiRaterExample {
                features: centres[y]
                    .iter()
                    .map(|&c| c + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
                annotations: Vec::new(),
                ground_truth: Some(y),
            })
            .collect();
        Dataset::new(meta, examples)
    };
    let train = make(cfg.n_train, &mut rng)?;
    let test = make(cfg.n_test, &mut rng)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::to_csv_string;

    fn cfg(sep: f64) -> BlobConfig {
        BlobConfig {
            n_classes: 4,
            dim: 16,
            n_train: 2000,
            n_test: 2000,
            class_separation: sep,
        }
    }

    /// Nearest-centroid classifier fitted on train, scored on test.
    fn nearest_centroid_accuracy(train: &Dataset, test: &Dataset) -> f64 {
        let c = train.n_classes();
        let d = train.feature_dim();
        let mut sums = vec![vec![0.0; d]; c];
        let mut counts = vec![0usize; c];
        for ex in &train.examples {
            let y = ex.ground_truth.unwrap();
            counts[y] += 1;
            for (s, x) in sums[y].iter_mut().zip(&ex.features) {
                *s += x;
            }
        }
        let centroids: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| s.iter().map(|v| v / n as f64).collect())
            .collect();
        let correct = test
            .examples
            .iter()
            .filter(|ex| {
                let dist = |k: usize| -> f64 {
                    centroids[k]
                        .iter()
                        .zip(&ex.features)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum()
                };
                let best = (0..c)
                    .min_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap())
                    .unwrap();
                best == ex.ground_truth.unwrap()
            })
            .count();
        correct as f64 / test.len() as f64
    }

    #[test]
    fn zero_separation_is_chance() {
        let (tr, te) = gen_blobs(&cfg(0.0), 3).unwrap();
        let acc = nearest_centroid_accuracy(&tr, &te);
        assert!((acc - 0.25).abs() < 0.03, "accuracy {acc}");
    }

    #[test]
    fn wide_separation_is_easy() {
        let (tr, te) = gen_blobs(&cfg(10.0), 3).unwrap();
        assert!(nearest_centroid_accuracy(&tr, &te) > 0.99);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_blobs(&cfg(2.0), 11).unwrap();
        let b = gen_blobs(&cfg(2.0), 11).unwrap();
        assert_eq!(to_csv_string(&a.0), to_csv_string(&b.0));
        assert_eq!(to_csv_string(&a.1), to_csv_string(&b.1));
        let c = gen_blobs(&cfg(2.0), 12).unwrap();
        assert_ne!(to_csv_string(&a.0), to_csv_string(&c.0));
    }

    #[test]
    fn classes_balanced() {
        let mut c = cfg(1.0);
        c.n_train = 1003;
        let (tr, _) = gen_blobs(&c, 0).unwrap();
        let mut counts = [0usize; 4];
        for ex in &tr.examples {
            counts[ex.ground_truth.unwrap()] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }

    #[test]
    fn rejects_bad_config() {
        assert!(gen_blobs(&cfg(-1.0), 0).is_err());
        let mut c = cfg(1.0);
        c.dim = 1;
        assert!(gen_blobs(&c, 0).is_err());
    }

    #[test]
    fn more_classes_than_dims() {
        let c = BlobConfig {
            n_classes: 5,
            dim: 2,
            n_train: 50,
            n_test: 10,
            class_separation: 3.0,
        };
        let (tr, te) = gen_blobs(&c, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (50, 10));
    }
}
