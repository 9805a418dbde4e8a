//! Straightforward second implementations used as test oracles.
#![allow(dead_code)]

use lecomh::lecomh::{BatchNoise, LecomhModel};
use lecomh::nnet::Matrix;

use super::dd::{self, Dd};

/// Mean `CE + λ·cost` of a batch in double-double, following the case
/// definitions directly: gate `j` is the selection mass on formats `≥ j`.
pub fn lecomh_loss_dd(
    model: &LecomhModel,
    x: &Matrix,
    ai_probs: Option<&Matrix>,
    labels: &[usize],
    noise: &BatchNoise,
    lambda: f64,
    tau: f64,
) -> Dd {
    let c = model.n_classes();
    let m = model.n_annotators();
    let mut total = Dd::ZERO;
    for r in 0..x.rows() {
        let xr: Vec<Dd> = x.row(r).iter().map(|&v| Dd::from(v)).collect();
        let ai: Vec<Dd> = match ai_probs {
            Some(p) => p.row(r).iter().map(|&v| Dd::from(v)).collect(),
            None => dd::softmax(&dd::mlp_forward(&model.classifier.net, &xr)),
        };
        let logits = dd::mlp_forward(&model.selection.net, &xr);
        let perturbed: Vec<Dd> = logits
            .iter()
            .zip(noise.gumbel.row(r))
            .map(|(&l, &g)| (l + Dd::from(g)).div_f64(tau))
            .collect();
        let z = dd::softmax(&perturbed);
        let mut input = vec![Dd::ZERO; (m + 1) * c];
        input[..c].copy_from_slice(&ai);
        for j in 1..=m {
            let gate = z[j..].iter().copied().fold(Dd::ZERO, |a, b| a + b);
            input[j * c + noise.annotations[r][j - 1]] = gate;
        }
        let out = dd::mlp_forward(&model.collab.net, &input);
        let ce = dd::softmax_cross_entropy(&out, labels[r]);
        let q = dd::softmax(&logits);
        let cost = q
            .iter()
            .enumerate()
            .fold(Dd::ZERO, |a, (k, &v)| a + v * Dd::from(k as f64));
        total = total + ce + cost * Dd::from(lambda);
    }
    total.div_f64(x.rows() as f64)
}

/// The input-assembly case table: with `K` annotators selected, slots
/// `1..=K` hold the first `K` one-hot annotations and the rest are zero.
pub fn case_table_input(ai: &[f64], annotations: &[usize], k: usize) -> Vec<f64> {
    let c = ai.len();
    let mut v = ai.to_vec();
    for (j, &a) in annotations.iter().enumerate() {
        let mut slot = vec![0.0; c];
        if j < k {
            slot[a] = 1.0;
        }
        v.extend(slot);
    }
    v
}

fn dense(x: &[f64], w: &Matrix, b: &[f64], relu: bool) -> Vec<f64> {
    (0..w.cols())
        .map(|j| {
            let s = b[j] + x.iter().enumerate().map(|(i, v)| v * w.get(i, j)).sum::<f64>();
            if relu && s < 0.0 {
                0.0
            } else {
                s
            }
        })
        .collect()
}

pub fn forward(net: &lecomh::nnet::Mlp, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let n = net.num_layers();
    for l in 0..n {
        a = dense(&a, &net.weights()[l], &net.biases()[l], l + 1 < n);
    }
    a
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Deterministic-selection prediction: AI softmax, argmax format `K`, case
/// table input, collaboration softmax.
pub fn predict_argmax(model: &LecomhModel, x: &[f64], annotations: &[usize]) -> (Vec<f64>, usize) {
    let ai = softmax(&forward(&model.classifier.net, x));
    let g = forward(&model.selection.net, x);
    let mut k = 0;
    for (i, v) in g.iter().enumerate() {
        if *v > g[k] {
            k = i;
        }
    }
    let input = case_table_input(&ai, annotations, k);
    (softmax(&forward(&model.collab.net, &input)), k)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for t in i..=j {
                r[idx[t]] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
