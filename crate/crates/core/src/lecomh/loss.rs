use rand::Rng;

use super::gating::{assemble_into, permute_with, sample_gumbel};
use super::{LecomhConfig, LecomhModel};
use crate::error::{Error, Result};
use crate::nnet::{argmax, softmax, softmax_in_place, Gradients, Matrix, LOG_CLAMP};

/// The random quantities of one training step: Gumbel noise per selection
/// logit and the annotation order per example. Fixing these makes the loss a
/// deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNoise {
    /// `batch × (M + 1)` standard Gumbel draws.
    pub gumbel: Matrix,
    /// Annotation labels of each example in their sampled order.
    pub annotations: Vec<Vec<usize>>,
}

impl BatchNoise {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, annotations: &[&[usize]]) -> Self {
        let m = annotations.first().map_or(0, |a| a.len());
        let mut gumbel = Matrix::zeros(annotations.len(), m + 1);
        let mut ordered = Vec::with_capacity(annotations.len());
        for (r, a) in annotations.iter().enumerate() {
            ordered.push(permute_with(a, rng));
            for v in gumbel.row_mut(r) {
                *v = sample_gumbel(rng);
            }
        }
        BatchNoise {
            gumbel,
            annotations: ordered,
        }
    }
}

/// Inputs of one mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    pub features: &'a Matrix,
    /// Classifier softmax outputs for the batch. Used as-is when the
    /// classifier is frozen; recomputed (and differentiated) otherwise.
    pub ai_probs: Option<&'a Matrix>,
    /// Consensus labels.
    pub labels: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// `mean(CE) + λ·mean(cost)`.
    pub loss: f64,
    pub ce: f64,
    pub cost: f64,
    /// Examples whose sampled format was AI alone.
    pub ai_alone: usize,
    pub selection_grads: Gradients,
    pub collab_grads: Gradients,
    /// Present only when the classifier is trained jointly.
    pub classifier_grads: Option<Gradients>,
}

/// Mean over the batch of `CE(y^c, h(p(z, f(x), rand(M)))) + λ·cost(softmax(g(x)))`
/// with `z = softmax((g(x) + G)/τ)`, and its gradients.
pub fn lecomh_loss(
    batch: &LossBatch,
    model: &LecomhModel,
    cfg: &LecomhConfig,
    noise: &BatchNoise,
) -> Result<LossOutput> {
    let n = batch.features.rows();
    let (c, m) = (model.n_classes(), model.n_annotators());
    if batch.labels.len() != n || noise.annotations.len() != n || noise.gumbel.rows() != n {
        return Err(Error::Shape("batch components disagree on batch size".into()));
    }
    if noise.gumbel.cols() != m + 1 || noise.annotations.iter().any(|a| a.len() != m) {
        return Err(Error::Shape(format!("noise must cover {m} annotators")));
    }
    let tau = cfg.temperature;
    let nf = n.max(1) as f64;

    // AI evidence
    let (ai_probs, clf_tape) = if cfg.freeze_classifier {
        match batch.ai_probs {
            Some(p) => (p.clone(), None),
            None => (model.classifier.probs(batch.features)?, None),
        }
    } else {
        let (logits, tape) = model.classifier.net.forward_tape(batch.features)?;
        (softmax(&logits), Some(tape))
    };

    // selection
    let (sel_logits, sel_tape) = model.selection.net.forward_tape(batch.features)?;
    let mut z = Matrix::zeros(n, m + 1);
    let mut q = softmax(&sel_logits);
    let mut ai_alone = 0;
    for r in 0..n {
        let zr = z.row_mut(r);
        for ((zv, l), g) in zr.iter_mut().zip(sel_logits.row(r)).zip(noise.gumbel.row(r)) {
            *zv = (l + g) / tau;
        }
        if argmax(zr) == 0 {
            ai_alone += 1;
        }
        softmax_in_place(zr);
    }

    // collaboration
    let width = (m + 1) * c;
    let mut input = Matrix::zeros(n, width);
    for r in 0..n {
        assemble_into(ai_probs.row(r), &noise.annotations[r], z.row(r), input.row_mut(r));
    }
    let (logits, collab_tape) = model.collab.net.forward_tape(&input)?;
    let p = softmax(&logits);

    let mut ce = 0.0;
    let mut cost = 0.0;
    let mut d_logits = p.clone();
    for r in 0..n {
        let y = batch.labels[r];
        if y >= c {
            return Err(Error::Range(format!("consensus label {y} outside [0, {c})")));
        }
        ce -= p.get(r, y).max(LOG_CLAMP).ln();
        let row = d_logits.row_mut(r);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v /= nf);
        cost += q.row(r).iter().enumerate().map(|(k, v)| k as f64 * v).sum::<f64>();
    }
    ce /= nf;
    cost /= nf;
    let loss = ce + cfg.lambda * cost;
    if !loss.is_finite() {
        return Err(Error::Numeric("LECOMH loss is not finite".into()));
    }

    let collab_back = model.collab.net.backward(&collab_tape, &d_logits)?;
    let d_input = &collab_back.input_grad;

    // through the gates and the Gumbel-softmax into the selection logits
    let mut d_sel = Matrix::zeros(n, m + 1);
    for r in 0..n {
        let di = d_input.row(r);
        let zr = z.row(r);
        let mut dz = vec![0.0; m + 1];
        let mut running = 0.0;
        for k in 1..=m {
            running += di[k * c + noise.annotations[r][k - 1]];
            dz[k] = running;
        }
        let dot: f64 = zr.iter().zip(&dz).map(|(a, b)| a * b).sum();
        let qr = q.row_mut(r);
        let expected: f64 = qr.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
        for (k, d) in d_sel.row_mut(r).iter_mut().enumerate() {
            *d = zr[k] * (dz[k] - dot) / tau + cfg.lambda * qr[k] * (k as f64 - expected) / nf;
        }
    }
    let sel_back = model.selection.net.backward(&sel_tape, &d_sel)?;

    let classifier_grads = match clf_tape {
        Some(tape) => {
            let mut d_clf = Matrix::zeros(n, c);
            for r in 0..n {
                let pr = ai_probs.row(r);
                let dp = &d_input.row(r)[..c];
                let dot: f64 = pr.iter().zip(dp).map(|(a, b)| a * b).sum();
                for (k, d) in d_clf.row_mut(r).iter_mut().enumerate() {
                    *d = pr[k] * (dp[k] - dot);
                }
            }
            Some(model.classifier.net.backward(&tape, &d_clf)?.grads)
        }
        None => None,
    };

    Ok(LossOutput {
        loss,
        ce,
        cost,
        ai_alone,
        selection_grads: sel_back.grads,
        collab_grads: collab_back.grads,
        classifier_grads,
    })
}
