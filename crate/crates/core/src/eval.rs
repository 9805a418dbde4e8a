//! Coverage, cost and accuracy of trained systems, λ sweeps, baselines and
//! curve files.
//!
//! Test targets are the ground-truth label where present, else the majority
//! vote of the example's full annotator pool.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use crate::consensus::{majority_vote, ConsensusDataset};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lecomh::{predict_batch, train_lecomh, LecomhConfig, LecomhModel, SelectionMode, TrainingLog};
use crate::pretrain::Classifier;
use crate::rng;

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub index: usize,
    pub predicted: usize,
    /// Number of annotators queried.
    pub chosen_index: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub n: usize,
    pub accuracy: f64,
    /// Fraction of examples answered by the AI alone.
    pub coverage: f64,
    pub mean_cost: f64,
}

impl EvalSummary {
    pub fn from_records(records: &[PredictionRecord]) -> Self {
        let n = records.len();
        let nf = n.max(1) as f64;
        EvalSummary {
            n,
            accuracy: records.iter().filter(|r| r.correct).count() as f64 / nf,
            coverage: records.iter().filter(|r| r.chosen_index == 0).count() as f64 / nf,
            mean_cost: records.iter().map(|r| r.chosen_index).sum::<usize>() as f64 / nf,
        }
    }
}

/// One aggregated row of an accuracy/coverage curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveragePoint {
    pub lambda: f64,
    pub coverage: f64,
    pub mean_cost: f64,
    pub accuracy: f64,
    /// Standard error of the accuracy over trials.
    pub accuracy_std: f64,
    pub trials: usize,
}

/// One baseline operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub name: String,
    pub coverage: f64,
    pub cost: f64,
    pub accuracy: f64,
}

/// Evaluation label of every example.
pub fn test_targets(dataset: &Dataset) -> Vec<usize> {
    let c = dataset.n_classes();
    dataset
        .examples
        .iter()
        .map(|ex| ex.ground_truth.unwrap_or_else(|| majority_vote(&ex.annotations, c, None)))
        .collect()
}

/// Per-example seed derived from the run seed.
pub fn example_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// `M` pool annotations drawn without replacement, in random order.
fn draw_subset(pool: &[usize], m: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::seeded(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), m)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.shuffle(&mut rng);
    picked
}

/// Runs the full system on every test example.
///
/// Each example draws `M` members of its annotator pool, where `M` is the
/// number of slots the model was trained with.
pub fn evaluate_system(
    model: &LecomhModel,
    test: &Dataset,
    seed: u64,
    mode: SelectionMode,
) -> Result<(Vec<PredictionRecord>, EvalSummary)> {
    let m = model.n_annotators();
    if test.n_annotators() < m {
        return Err(Error::Config(format!(
            "annotator pool of {} is smaller than the {m} slots the model was trained with",
            test.n_annotators()
        )));
    }
    if test.n_classes() != model.n_classes() || test.feature_dim() != model.classifier.net.input_dim() {
        return Err(Error::Shape("test dataset does not match the model".into()));
    }
    let targets = test_targets(test);
    let idx: Vec<usize> = (0..test.len()).collect();
    let chunks: Vec<Vec<PredictionRecord>> = idx
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let x = test.features_of(chunk);
            let seeds: Vec<u64> = chunk.iter().map(|&i| example_seed(seed, i)).collect();
            let anns: Vec<Vec<usize>> = chunk
                .iter()
                .zip(&seeds)
                .map(|(&i, &s)| draw_subset(&test.examples[i].annotations, m, s))
                .collect();
            let preds = predict_batch(model, &x, &anns, &seeds, mode)?;
            Ok(chunk
                .iter()
                .zip(preds)
                .map(|(&i, p)| PredictionRecord {
                    index: i,
                    predicted: p.label,
                    chosen_index: p.selection.chosen_index,
                    correct: p.label == targets[i],
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let records: Vec<PredictionRecord> = chunks.into_iter().flatten().collect();
    let summary = EvalSummary::from_records(&records);
    Ok((records, summary))
}

/// Training and evaluation inputs shared by every sweep leg.
#[derive(Debug, Clone, Copy)]
pub struct SweepData<'a> {
    pub consensus: &'a ConsensusDataset,
    pub classifier: &'a Classifier,
    pub test: &'a Dataset,
}

/// The outcome of one `(λ, seed)` training and evaluation.
#[derive(Debug, Clone)]
pub struct SweepLeg {
    pub lambda: f64,
    pub seed: u64,
    pub model: LecomhModel,
    pub log: TrainingLog,
    pub records: Vec<PredictionRecord>,
    pub summary: EvalSummary,
}

/// Trains and evaluates every `(λ, seed)` pair; legs run in parallel and are
/// returned ordered by λ, then seed position.
pub fn sweep_legs(
    data: SweepData,
    template: &LecomhConfig,
    lambdas: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepLeg>> {
    if lambdas.is_empty() || seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one lambda and one seed".into()));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pairs: Vec<(f64, u64)> = sorted
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    pairs
        .par_iter()
        .map(|&(lambda, seed)| {
            let cfg = LecomhConfig {
                lambda,
                ..template.clone()
            };
            let (model, log) = train_lecomh(data.consensus, data.classifier, &cfg, seed)?;
            let (records, summary) = evaluate_system(&model, data.test, seed, cfg.selection_mode())?;
            Ok(SweepLeg {
                lambda,
                seed,
                model,
                log,
                records,
                summary,
            })
        })
        .collect()
}

/// Mean over legs sharing a λ, with the standard error of the accuracy.
pub fn aggregate_legs(legs: &[SweepLeg]) -> Vec<CoveragePoint> {
    let mut points = Vec::new();
    let mut start = 0;
    while start < legs.len() {
        let lambda = legs[start].lambda;
        let end = start + legs[start..].iter().take_while(|l| l.lambda == lambda).count();
        let group = &legs[start..end];
        let n = group.len() as f64;
        let mean = |f: fn(&EvalSummary) -> f64| group.iter().map(|l| f(&l.summary)).sum::<f64>() / n;
        let accuracy = mean(|s| s.accuracy);
        let accuracy_std = if group.len() > 1 {
            let var = group
                .iter()
                .map(|l| (l.summary.accuracy - accuracy).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        points.push(CoveragePoint {
            lambda,
            coverage: mean(|s| s.coverage),
            mean_cost: mean(|s| s.mean_cost),
            accuracy,
            accuracy_std,
            trials: group.len(),
        });
        start = end;
    }
    points
}

/// One [`CoveragePoint`] per λ, sorted by λ.
pub fn sweep_lambda(
    data: SweepData,
    template: &LecomhConfig,
    lambdas: &[f64],
    seeds: &[u64],
) -> Result<Vec<CoveragePoint>> {
    Ok(aggregate_legs(&sweep_legs(data, template, lambdas, seeds)?))
}

/// Defers the least confident examples to the pool majority vote.
///
/// The rejection score is `1 − max_k p_k`; for coverage `q` the
/// `round((1 − q)·N)` highest-scoring examples (ties to the lower index) are
/// answered by the majority vote and the rest by the classifier. The cost of
/// a deferred example is the pool size.
pub fn baseline_confidence_deferral(
    classifier: &Classifier,
    test: &Dataset,
    coverages: &[f64],
) -> Result<Vec<BaselineRow>> {
    if let Some(q) = coverages.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::Config(format!("coverage target {q} outside [0, 1]")));
    }
    let n = test.len();
    let c = test.n_classes();
    let targets = test_targets(test);
    let probs = classifier.probs(&test.features())?;
    let ai: Vec<usize> = probs.argmax_rows();
    let mv: Vec<usize> = test
        .examples
        .iter()
        .map(|ex| majority_vote(&ex.annotations, c, None))
        .collect();
    let score: Vec<f64> = (0..n)
        .map(|i| 1.0 - probs.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let nf = n.max(1) as f64;

    Ok(coverages
        .iter()
        .map(|&q| {
            let n_defer = (((1.0 - q) * n as f64).round() as usize).min(n);
            let mut deferred = vec![false; n];
            order[..n_defer].iter().for_each(|&i| deferred[i] = true);
            let correct = (0..n)
                .filter(|&i| (if deferred[i] { mv[i] } else { ai[i] }) == targets[i])
                .count();
            BaselineRow {
                name: "confidence_deferral".into(),
                coverage: (n - n_defer) as f64 / nf,
                cost: n_defer as f64 * test.n_annotators() as f64 / nf,
                accuracy: correct as f64 / nf,
            }
        })
        .collect())
}

/// AI alone, one uniformly drawn annotator per example, and the pool majority
/// vote.
pub fn baselines_simple(test: &Dataset, classifier: &Classifier, seed: u64) -> Result<Vec<BaselineRow>> {
    if test.n_annotators() == 0 {
        return Err(Error::Config("baselines need an annotator pool".into()));
    }
    let c = test.n_classes();
    let targets = test_targets(test);
    let nf = test.len().max(1) as f64;
    let acc = |pred: &[usize]| pred.iter().zip(&targets).filter(|(a, b)| a == b).count() as f64 / nf;

    let ai = classifier.predict(&test.features())?;
    let human: Vec<usize> = test
        .examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = rng::seeded(example_seed(seed, i));
            ex.annotations[rng.gen_range(0..ex.annotations.len())]
        })
        .collect();
    let mv: Vec<usize> = test
        .examples
        .iter()
        .map(|ex| majority_vote(&ex.annotations, c, None))
        .collect();
    let row = |name: &str, coverage: f64, cost: f64, accuracy: f64| BaselineRow {
        name: name.into(),
        coverage,
        cost,
        accuracy,
    };
    Ok(vec![
        row("ai", 1.0, 0.0, acc(&ai)),
        row("human", 0.0, 1.0, acc(&human)),
        row("majority_vote", 0.0, test.n_annotators() as f64, acc(&mv)),
    ])
}

pub const CURVE_HEADER: &str = "lambda,coverage,mean_cost,accuracy,accuracy_std,trials";
pub const BASELINE_HEADER: &str = "name,coverage,cost,accuracy";

/// Curve CSV text, rows sorted by coverage (then λ).
pub fn curve_to_csv(points: &[CoveragePoint]) -> String {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.coverage.total_cmp(&b.coverage).then(a.lambda.total_cmp(&b.lambda)));
    let mut s = format!("{CURVE_HEADER}\n");
    for p in sorted {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.lambda, p.coverage, p.mean_cost, p.accuracy, p.accuracy_std, p.trials
        );
    }
    s
}

pub fn emit_curve(points: &[CoveragePoint], path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Config("refusing to write an empty curve".into()));
    }
    std::fs::write(path, curve_to_csv(points)).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(v: &str, path: &str, line: usize, name: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse {
        path: path.into(),
        line,
        msg: format!("bad {name} value {v:?}"),
    })
}

fn data_lines<'a>(text: &'a str, header: &str, origin: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => {
            return Err(Error::Parse {
                path: origin.into(),
                line: 1,
                msg: format!("expected header {header:?}"),
            })
        }
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != width {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    msg: format!("expected {width} fields, found {}", f.len()),
                });
            }
            Ok((i + 1, f))
        })
        .collect()
}

pub fn parse_curve(text: &str, origin: &str) -> Result<Vec<CoveragePoint>> {
    data_lines(text, CURVE_HEADER, origin)?
        .into_iter()
        .map(|(line, f)| {
            Ok(CoveragePoint {
                lambda: parse_field(f[0], origin, line, "lambda")?,
                coverage: parse_field(f[1], origin, line, "coverage")?,
                mean_cost: parse_field(f[2], origin, line, "mean_cost")?,
                accuracy: parse_field(f[3], origin, line, "accuracy")?,
                accuracy_std: parse_field(f[4], origin, line, "accuracy_std")?,
                trials: parse_field(f[5], origin, line, "trials")?,
            })
        })
        .collect()
}

pub fn baselines_to_csv(rows: &[BaselineRow]) -> String {
    let mut s = format!("{BASELINE_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.name, r.coverage, r.cost, r.accuracy);
    }
    s
}

pub fn parse_baselines(text: &str, origin: &str) -> Result<Vec<BaselineRow>> {
    data_lines(text, BASELINE_HEADER, origin)?
        .into_iter()
        .map(|(line, f)| {
            Ok(BaselineRow {
                name: f[0].to_string(),
                coverage: parse_field(f[1], origin, line, "coverage")?,
                cost: parse_field(f[2], origin, line, "cost")?,
                accuracy: parse_field(f[3], origin, line, "accuracy")?,
            })
        })
        .collect()
}

/// `index,predicted,chosen_index,correct` rows.
pub fn records_to_csv(records: &[PredictionRecord]) -> String {
    let mut s = String::from("index,predicted,chosen_index,correct\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.index, r.predicted, r.chosen_index, r.correct as u8);
    }
    s
}

