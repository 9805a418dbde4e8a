//! Small synthetic pipelines shared by integration tests.
#![allow(dead_code)]

use lecomh::consensus::{build_consensus_dataset, ConsensusConfig, ConsensusDataset};
use lecomh::data::{annotate, gen_blobs, AnnotatorSpec, BlobConfig, Dataset};
use lecomh::lecomh::LecomhConfig;
use lecomh::nnet::OptConfig;
use lecomh::pretrain::{pretrain_classifier, Classifier, PretrainConfig};

pub struct Pipeline {
    pub train: Dataset,
    pub test: Dataset,
    pub classifier: Classifier,
    pub consensus: ConsensusDataset,
}

pub fn symmetric(accs: &[f64], c: usize) -> Vec<AnnotatorSpec> {
    accs.iter()
        .map(|&a| AnnotatorSpec::symmetric(c, a).unwrap())
        .collect()
}

pub fn pipeline(blobs: &BlobConfig, accs: &[f64], pretrain: &PretrainConfig, seed: u64) -> Pipeline {
    let (train, test) = gen_blobs(blobs, seed).unwrap();
    let specs = symmetric(accs, blobs.n_classes);
    let train = annotate(&train, &specs, seed).unwrap();
    let test = annotate(&test, &specs, seed + 1).unwrap();
    let classifier = pretrain_classifier(&train, pretrain, seed).unwrap();
    let consensus = build_consensus_dataset(&train, &classifier, &ConsensusConfig::default()).unwrap();
    Pipeline {
        train,
        test,
        classifier,
        consensus,
    }
}

/// 4-class, 16-dim blobs with annotators at 80/90/70%.
pub fn benchmark_blobs(n_train: usize, n_test: usize) -> BlobConfig {
    BlobConfig {
        n_classes: 4,
        dim: 16,
        n_train,
        n_test,
        class_separation: 3.3,
    }
}

pub const BENCH_ACCURACIES: [f64; 3] = [0.8, 0.9, 0.7];

/// A small, fast benchmark pipeline.
pub fn small_pipeline(seed: u64) -> Pipeline {
    pipeline(
        &benchmark_blobs(1500, 600),
        &BENCH_ACCURACIES,
        &PretrainConfig::default(),
        seed,
    )
}

pub fn lecomh_config(epochs: usize, width: usize) -> LecomhConfig {
    LecomhConfig {
        opt: OptConfig {
            epochs,
            ..OptConfig::default()
        },
        collab_hidden: vec![width, width],
        ..LecomhConfig::default()
    }
}
