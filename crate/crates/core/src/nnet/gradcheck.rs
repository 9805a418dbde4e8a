//! Central finite differences over network parameters.

use super::mlp::{Gradients, Mlp};

/// Default perturbation for [`finite_diff_grad`].
pub const DEFAULT_STEP: f64 = 1e-5;

/// Estimates `∂loss/∂p ≈ (loss(p + h) − loss(p − h)) / 2h` for every
/// parameter of `net`, one coordinate at a time.
pub fn finite_diff_grad<F>(mut loss_fn: F, net: &Mlp, step: f64) -> Gradients
where
    F: FnMut(&Mlp) -> f64,
{
    let base = net.params();
    let mut probe = net.clone();
    let mut flat = vec![0.0; base.len()];
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + step;
        probe.set_params(&params).expect("same parameter count");
        let plus = loss_fn(&probe);
        params[i] = base[i] - step;
        probe.set_params(&params).expect("same parameter count");
        let minus = loss_fn(&probe);
        params[i] = base[i];
        flat[i] = (plus - minus) / (2.0 * step);
    }
    unflatten(net, &flat)
}

fn unflatten(net: &Mlp, flat: &[f64]) -> Gradients {
    let mut g = Gradients::zeros_like(net);
    let mut off = 0;
    for (w, b) in g.weights.iter_mut().zip(g.biases.iter_mut()) {
        let n = w.values().len();
        w.values_mut().copy_from_slice(&flat[off..off + n]);
        off += n;
        let m = b.len();
        b.copy_from_slice(&flat[off..off + m]);
        off += m;
    }
    g
}

/// Largest relative error `|a − n| / max(|a|, |n|)` between two gradient
/// vectors, skipping coordinates where both magnitudes are below `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs() >= floor || n.abs() >= floor)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}
