//! Collaboration-format sampling, gated input assembly and annotation cost.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::MultiRaterExample;
use crate::error::{Error, Result};
use crate::nnet::{argmax, softmax_in_place};
use crate::rng;

/// A relaxed one-hot selection over `M + 1` collaboration formats. Index `K`
/// means the AI plus `K` annotators.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSample {
    pub soft: Vec<f64>,
    pub chosen_index: usize,
}

impl SelectionSample {
    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut soft = vec![0.0; len];
        soft[index] = 1.0;
        SelectionSample {
            soft,
            chosen_index: index,
        }
    }
}

/// Standard Gumbel draw `−ln(−ln U)`, `U ∈ (0, 1)`.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    -(-u.ln()).ln()
}

/// `softmax((logits + g) / τ)` with the supplied Gumbel noise.
pub fn gumbel_softmax_with_noise(logits: &[f64], temperature: f64, noise: &[f64]) -> Result<SelectionSample> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Config(format!(
            "Gumbel-softmax temperature must be positive, got {temperature}"
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite selection logits".into()));
    }
    let mut soft: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / temperature)
        .collect();
    // argmax before normalizing: softmax may round small temperatures to ties
    let chosen_index = argmax(&soft);
    softmax_in_place(&mut soft);
    Ok(SelectionSample { soft, chosen_index })
}

pub fn gumbel_softmax(logits: &[f64], temperature: f64, seed: u64) -> Result<SelectionSample> {
    let mut rng = rng::seeded(seed);
    let noise: Vec<f64> = logits.iter().map(|_| sample_gumbel(&mut rng)).collect();
    gumbel_softmax_with_noise(logits, temperature, &noise)
}

/// `gate_j = Σ_{k ≥ j} z_k` for `j = 1..=M`: the probability that at least
/// `j` annotators are consulted.
pub fn gates(z: &[f64]) -> Vec<f64> {
    let m = z.len() - 1;
    let mut g = vec![0.0; m];
    let mut acc = 0.0;
    for j in (1..=m).rev() {
        acc += z[j];
        g[j - 1] = acc;
    }
    g
}

/// `[ai_probs, gate_1·m_1, …, gate_M·m_M]`, each slot `|𝓨|` wide.
///
/// With `z` one-hot at `K`, slots `1..=K` carry the annotations and the rest
/// are zero.
pub fn assemble_input(ai_probs: &[f64], annotations_onehot: &[Vec<f64>], z: &[f64]) -> Result<Vec<f64>> {
    let c = ai_probs.len();
    if z.len() != annotations_onehot.len() + 1 {
        return Err(Error::Shape(format!(
            "selection vector has {} entries, expected M + 1 = {}",
            z.len(),
            annotations_onehot.len() + 1
        )));
    }
    if annotations_onehot.iter().any(|a| a.len() != c) {
        return Err(Error::Shape(format!("every annotation must be {c} wide")));
    }
    let mut out = Vec::with_capacity(c * z.len());
    out.extend_from_slice(ai_probs);
    for (gate, a) in gates(z).iter().zip(annotations_onehot) {
        out.extend(a.iter().map(|v| gate * v));
    }
    Ok(out)
}

/// Same as [`assemble_input`] with annotations given as class indices,
/// written into `out`.
pub(crate) fn assemble_into(ai_probs: &[f64], annotations: &[usize], z: &[f64], out: &mut [f64]) {
    let c = ai_probs.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    out[..c].copy_from_slice(ai_probs);
    for (j, gate) in gates(z).into_iter().enumerate() {
        out[(j + 1) * c + annotations[j]] = gate;
    }
}

/// Uniformly random order of the example's annotations.
pub fn permute_annotations(example: &MultiRaterExample, seed: u64) -> Vec<usize> {
    let mut rng = rng::seeded(seed);
    permute_with(&example.annotations, &mut rng)
}

pub(crate) fn permute_with<R: Rng + ?Sized>(annotations: &[usize], rng: &mut R) -> Vec<usize> {
    let mut a = annotations.to_vec();
    a.shuffle(rng);
    a
}

/// Expected number of annotators queried: `Σ_j g_j · (j − 1)` with 1-based
/// `j`, i.e. `Σ_k k · g_k` over 0-based selection indices.
pub fn cost(selection_probs: &[f64]) -> Result<f64> {
    let sum: f64 = selection_probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || selection_probs.iter().any(|&p| p < 0.0) {
        return Err(Error::Contract(format!(
            "selection probabilities must be a distribution (sum {sum})"
        )));
    }
    Ok(selection_probs
        .iter()
        .enumerate()
        .map(|(k, p)| k as f64 * p)
        .sum())
}
