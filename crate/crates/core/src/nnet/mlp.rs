//! Fully connected ReLU networks with an explicit forward tape.
//!
//! Each layer computes `a_{l+1} = relu(a_l · W_l + b_l)`, where `W_l` is stored
//! as an `in × out` matrix. The final layer has no activation and emits logits.

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Activations recorded by [`Mlp::forward_tape`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Matrix>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Parameter-shaped gradient (or velocity) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Flattened in the same order as [`Mlp::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.values());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.values_mut().iter_mut().for_each(|v| *v *= factor);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Output of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    /// Gradient of the loss with respect to the network input batch.
    pub input_grad: Matrix,
}

impl Mlp {
    /// Scaled-uniform initialization, `U(±√(6/(fan_in+fan_out)))` for weights
    /// and zero biases.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(layer_sizes)?;
        for w in &mut net.weights {
            let bound = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            for v in w.values_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[0], w[1]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parts(weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Shape(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_sizes = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *layer_sizes.last().unwrap() || b.len() != w.cols() {
                return Err(Error::Shape(format!("layer {l} dimensions do not chain")));
            }
            if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("layer {l} has non-finite parameters")));
            }
            layer_sizes.push(w.cols());
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.values().len() + b.len())
            .sum()
    }

    /// All parameters flattened layer by layer: weights (row-major) then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.values());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.values().len();
            w.values_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
            let m = b.len();
            b.copy_from_slice(&flat[off..off + m]);
            off += m;
        }
        Ok(())
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(&self, layer: usize, input: &Matrix) -> Result<Matrix> {
        let mut z = input.matmul(&self.weights[layer])?;
        let b = &self.biases[layer];
        for r in 0..z.rows() {
            for (v, bias) in z.row_mut(r).iter_mut().zip(b) {
                *v += bias;
            }
        }
        Ok(z)
    }

    /// Logits for a batch (`batch × output_dim`).
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut a = self.affine(0, batch)?;
        for l in 1..self.num_layers() {
            relu_in_place(&mut a);
            a = self.affine(l, &a)?;
        }
        Ok(a)
    }

    /// Forward pass that records the activations needed by [`Mlp::backward`].
    pub fn forward_tape(&self, batch: &Matrix) -> Result<(Matrix, Tape)> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        inputs.push(batch.clone());
        let mut a = self.affine(0, batch)?;
        for l in 1..self.num_layers() {
            relu_in_place(&mut a);
            inputs.push(a.clone());
            a = self.affine(l, &a)?;
        }
        Ok((a, Tape { inputs }))
    }

    /// Backpropagates `grad_out` (∂loss/∂logits, `batch × output_dim`) through
    /// the recorded tape.
    pub fn backward(&self, tape: &Tape, grad_out: &Matrix) -> Result<Backward> {
        if tape.is_empty() {
            return Err(Error::State(
                "backward called without a recorded forward pass".into(),
            ));
        }
        if tape.inputs.len() != self.num_layers() {
            return Err(Error::State(format!(
                "tape records {} layers, network has {}",
                tape.inputs.len(),
                self.num_layers()
            )));
        }
        let batch = tape.inputs[0].rows();
        if grad_out.rows() != batch || grad_out.cols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                batch,
                self.output_dim()
            )));
        }

        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out.clone();
        for l in (0..self.num_layers()).rev() {
            let input = &tape.inputs[l];
            grads.weights[l] = input.t_matmul(&delta)?;
            let gb = &mut grads.biases[l];
            for r in 0..delta.rows() {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            let mut upstream = delta.matmul_t(&self.weights[l])?;
            if l > 0 {
                // relu'(z) = 1 exactly where the recorded activation is positive
                for (u, &a) in upstream.values_mut().iter_mut().zip(input.values()) {
                    if a <= 0.0 {
                        *u = 0.0;
                    }
                }
            }
            delta = upstream;
        }
        Ok(Backward {
            grads,
            input_grad: delta,
        })
    }

    /// Serializes to the textual weights format.
    ///
    /// ```text
    /// mlp v1 <layer sizes>
    /// <W_0 row-major>
    /// <b_0>
    /// ...
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::from("mlp v1");
        for n in &self.layer_sizes {
            out.push(' ');
            out.push_str(&n.to_string());
        }
        out.push('\n');
        for (w, b) in self.weights.iter().zip(&self.biases) {
            push_floats(&mut out, w.values());
            push_floats(&mut out, b);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: "<weights>".into(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "empty input".into()))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("mlp") || tokens.next() != Some("v1") {
            return Err(parse_err(1, format!("bad header {header:?}")));
        }
        let sizes = tokens
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(1, e.to_string()))?;
        let mut net = Mlp::zeros(&sizes).map_err(|e| parse_err(1, e.to_string()))?;

        let mut line_no = 1;
        let mut next_tensor = |expected: usize| -> Result<Vec<f64>> {
            line_no += 1;
            let line = lines
                .next()
                .ok_or_else(|| parse_err(line_no, "missing parameter line".into()))?;
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(line_no, e.to_string()))?;
            if vals.len() != expected {
                return Err(parse_err(
                    line_no,
                    format!("expected {expected} values, found {}", vals.len()),
                ));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(line_no, "non-finite parameter".into()));
            }
            Ok(vals)
        };
        for l in 0..net.num_layers() {
            let n = net.weights[l].values().len();
            let w = next_tensor(n)?;
            net.weights[l].values_mut().copy_from_slice(&w);
            let b = next_tensor(net.biases[l].len())?;
            net.biases[l] = b;
        }
        Ok(net)
    }
}

fn push_floats(out: &mut String, vals: &[f64]) {
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{v:.16e}"));
    }
    out.push('\n');
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.values_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_gives_zero_logits() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let y = net.forward(&x).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer() {
        let net = Mlp::from_parts(vec![Matrix::identity(2)], vec![vec![0.0, 0.0]]).unwrap();
        let y = net
            .forward(&Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap())
            .unwrap();
        assert_eq!(y.values(), &[1.0, 2.0]);
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        let err = net.forward(&Matrix::zeros(1, 4)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    /// Independent reimplementation: explicit triple loops, no shared helpers.
    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = net.num_layers();
        for l in 0..n {
            let w = &net.weights()[l];
            let mut z = net.biases()[l].clone();
            for (j, zj) in z.iter_mut().enumerate() {
                for (i, ai) in a.iter().enumerate() {
                    *zj += ai * w.get(i, j);
                }
            }
            if l + 1 < n {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::new(&[5, 8, 3], &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y = net.forward(&x).unwrap();
        for (r, row) in rows.iter().enumerate() {
            let oracle = naive_forward(&net, row);
            for (a, b) in y.row(r).iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let (y2, _) = net.forward_tape(&x).unwrap();
        assert_eq!(y, y2);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let net = Mlp::zeros(&[2, 2]).unwrap();
        let err = net
            .backward(&Tape::default(), &Matrix::zeros(1, 2))
            .unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let (_, tape) = net.forward_tape(&x).unwrap();
        let b = net.backward(&tape, &Matrix::zeros(1, 2)).unwrap();
        assert!(b.grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_layer_squared_error_gradient_is_xt_delta() {
        // L = ½‖xW − t‖², so ∂L/∂W = xᵀ(xW − t) and ∂L/∂b = xW − t.
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, -1.0]]).unwrap();
        let net = Mlp::from_parts(vec![w], vec![vec![0.0, 0.0]]).unwrap();
        let x = Matrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
        let (y, tape) = net.forward_tape(&x).unwrap();
        assert_eq!(y.values(), &[5.0, -1.0]);
        let delta = Matrix::from_rows(&[vec![5.0 - 1.0, -1.0 - 0.0]]).unwrap();
        let b = net.backward(&tape, &delta).unwrap();
        assert_eq!(b.grads.weights[0].values(), &[12.0, -3.0, 4.0, -1.0]);
        assert_eq!(b.grads.biases[0], vec![4.0, -1.0]);
    }

    #[test]
    fn text_format_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let net = Mlp::new(&[4, 7, 3], &mut rng).unwrap();
        let text = net.to_text();
        assert!(text.starts_with("mlp v1 4 7 3\n"));
        let back = Mlp::from_text(&text).unwrap();
        assert_eq!(net, back);
        let bits: Vec<u64> = net.params().iter().map(|v| v.to_bits()).collect();
        let bits2: Vec<u64> = back.params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, bits2);
    }

    #[test]
    fn text_format_rejects_truncated_input() {
        let net = Mlp::zeros(&[2, 2]).unwrap();
        let text = net.to_text();
        let truncated: String = text.lines().take(2).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            Mlp::from_text(&truncated),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
