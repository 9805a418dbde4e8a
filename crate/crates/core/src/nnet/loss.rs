use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    let mut v = logits.to_vec();
    softmax_in_place(&mut v);
    v
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "probabilities are {}x{} but targets are {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// `−Σ_c t_c · ln max(p_c, 1e-12)` for every row.
pub fn per_example_cross_entropy(probs: &Matrix, targets: &Matrix) -> Result<Vec<f64>> {
    check_same_shape(probs, targets)?;
    Ok((0..probs.rows())
        .map(|r| {
            probs
                .row(r)
                .iter()
                .zip(targets.row(r))
                .filter(|(_, &t)| t != 0.0)
                .map(|(&p, &t)| -t * p.max(LOG_CLAMP).ln())
                .sum()
        })
        .collect())
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy(probs: &Matrix, targets: &Matrix) -> Result<f64> {
    let per = per_example_cross_entropy(probs, targets)?;
    if per.is_empty() {
        return Ok(0.0);
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Gradient of the mean softmax cross-entropy with respect to the logits:
/// `(p − t) / batch`.
pub fn softmax_cross_entropy_grad(probs: &Matrix, targets: &Matrix) -> Result<Matrix> {
    check_same_shape(probs, targets)?;
    let n = probs.rows().max(1) as f64;
    let mut g = probs.clone();
    for (gv, t) in g.values_mut().iter_mut().zip(targets.values()) {
        *gv = (*gv - t) / n;
    }
    Ok(g)
}

/// One-hot rows for class labels.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), n_classes);
    for (r, &c) in labels.iter().enumerate() {
        m.set(r, c, 1.0);
    }
    m
}
