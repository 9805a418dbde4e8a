use super::gating::{assemble_into, gumbel_softmax, SelectionSample};
use super::LecomhModel;
use crate::error::{Error, Result};
use crate::nnet::{argmax, softmax, softmax_vec, Matrix};

/// How the collaboration format is picked at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Argmax of the selection logits; no randomness.
    Argmax,
    /// Argmax of one Gumbel-softmax draw seeded per example.
    Sampled,
}

impl SelectionMode {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::Argmax => "argmax",
            SelectionMode::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub label: usize,
    /// `soft` holds the relaxed draw (or the selection softmax in argmax
    /// mode); the collaboration head always sees the hard one-hot.
    pub selection: SelectionSample,
}

fn select(logits: &[f64], tau: f64, seed: u64, mode: SelectionMode) -> Result<SelectionSample> {
    match mode {
        SelectionMode::Argmax => {
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite selection logits".into()));
            }
            Ok(SelectionSample {
                soft: softmax_vec(logits),
                chosen_index: argmax(logits),
            })
        }
        SelectionMode::Sampled => gumbel_softmax(logits, tau, seed),
    }
}

/// Final class distribution for one example whose annotations are already
/// drawn and ordered.
pub fn final_prediction(
    model: &LecomhModel,
    features: &[f64],
    annotations: &[usize],
    seed: u64,
    mode: SelectionMode,
) -> Result<Prediction> {
    let x = Matrix::from_vec(1, features.len(), features.to_vec())?;
    let mut out = predict_batch(model, &x, &[annotations.to_vec()], &[seed], mode)?;
    Ok(out.pop().expect("one row"))
}

/// Row-wise [`final_prediction`]; `seeds[i]` drives row `i`.
pub fn predict_batch(
    model: &LecomhModel,
    features: &Matrix,
    annotations: &[Vec<usize>],
    seeds: &[u64],
    mode: SelectionMode,
) -> Result<Vec<Prediction>> {
    let n = features.rows();
    let (c, m) = (model.n_classes(), model.n_annotators());
    if annotations.len() != n || seeds.len() != n {
        return Err(Error::Shape("one annotation list and seed per row required".into()));
    }
    if let Some(a) = annotations.iter().find(|a| a.len() != m) {
        return Err(Error::Shape(format!(
            "model expects {m} annotations per example, got {}",
            a.len()
        )));
    }
    if annotations.iter().flatten().any(|&y| y >= c) {
        return Err(Error::Range(format!("annotation outside [0, {c})")));
    }
    let ai = model.classifier.probs(features)?;
    let logits = model.selection.net.forward(features)?;
    let mut selections = Vec::with_capacity(n);
    let mut input = Matrix::zeros(n, (m + 1) * c);
    for r in 0..n {
        let s = select(logits.row(r), model.temperature, seeds[r], mode)?;
        let hard = SelectionSample::one_hot(m + 1, s.chosen_index).soft;
        assemble_into(ai.row(r), &annotations[r], &hard, input.row_mut(r));
        selections.push(s);
    }
    let probs = softmax(&model.collab.net.forward(&input)?);
    Ok(selections
        .into_iter()
        .enumerate()
        .map(|(r, selection)| {
            let p = probs.row(r).to_vec();
            Prediction {
                label: argmax(&p),
                probs: p,
                selection,
            }
        })
        .collect())
}
