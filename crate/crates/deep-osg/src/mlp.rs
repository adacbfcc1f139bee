//! Fully-connected network core: exact-erf GELU hidden layers, affine output,
//! and hand-derived reverse-mode gradients. No computation-graph machinery;
//! the architecture is fixed, so a recorded forward tape is all backprop needs.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::Rng;

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014327;

/// Exact GELU: x * Phi(x), with Phi the standard normal CDF evaluated via erf.
pub fn gelu(x: f64) -> f64 {
    x * 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// d/dx [x * Phi(x)] = Phi(x) + x * phi(x).
pub fn gelu_deriv(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Parameters of one MLP. Also reused as the container for gradients, since
/// gradients share the exact shape of the parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// All-zero parameters for the given widths (input, hidden..., output).
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer { weight: Matrix::zeros(w[1], w[0]), bias: vec![0.0; w[1]] })
            .collect();
        Ok(MlpParams { layers })
    }

    /// Glorot-uniform weights (zero biases), drawn from the supplied RNG so
    /// initialization is reproducible from a seed.
    pub fn glorot<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(widths)?;
        for layer in &mut params.layers {
            let fan_in = layer.weight.cols() as f64;
            let fan_out = layer.weight.rows() as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for w in layer.weight.data_mut() {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        Ok(params)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = vec![self.layers[0].weight.cols()];
        w.extend(self.layers.iter().map(|l| l.weight.rows()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.rows())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.rows() == b.weight.rows()
                    && a.weight.cols() == b.weight.cols()
                    && a.bias.len() == b.bias.len()
            })
    }

    /// self += alpha * other, used to accumulate gradient contributions.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("parameter shapes differ in add_scaled".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += alpha * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for l in &mut self.layers {
            for x in l.weight.data_mut() {
                *x *= alpha;
            }
            for x in &mut l.bias {
                *x *= alpha;
            }
        }
    }

    /// Visits every scalar parameter mutably, layer by layer.
    pub fn for_each_scalar_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            for x in l.weight.data_mut() {
                f(x);
            }
            for x in &mut l.bias {
                f(x);
            }
        }
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Shape("an MLP needs at least input and output widths".into()));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::Shape("zero layer width".into()));
    }
    Ok(())
}

/// Everything the backward pass needs from one forward evaluation: the input
/// of each layer and the pre-activation of each hidden layer.
#[derive(Debug, Clone)]
pub struct MlpTape {
    pub layer_inputs: Vec<Vec<f64>>,
    pub hidden_preacts: Vec<Vec<f64>>,
}

/// Forward pass; returns the output together with the tape for backprop.
pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, MlpTape)> {
    if x.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has length {}, network expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut hidden_preacts = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut a = x.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        let z = layer.weight.affine(&a, &layer.bias);
        layer_inputs.push(a);
        if i + 1 < n_layers {
            a = z.iter().map(|&v| gelu(v)).collect();
            hidden_preacts.push(z);
        } else {
            a = z;
        }
    }
    Ok((a, MlpTape { layer_inputs, hidden_preacts }))
}

/// Reverse-mode pass: given d(loss)/d(output), returns parameter gradients
/// (shaped like the parameters) and d(loss)/d(input).
pub fn mlp_backprop(
    params: &MlpParams,
    tape: &MlpTape,
    upstream: &[f64],
) -> Result<(MlpParams, Vec<f64>)> {
    let n_layers = params.layers.len();
    if tape.layer_inputs.len() != n_layers || tape.hidden_preacts.len() + 1 != n_layers {
        return Err(Error::Shape("tape does not match network depth".into()));
    }
    for (l, inp) in tape.layer_inputs.iter().enumerate() {
        if inp.len() != params.layers[l].weight.cols() {
            return Err(Error::Shape(format!("tape entry {l} does not match layer width")));
        }
    }
    if upstream.len() != params.output_dim() {
        return Err(Error::Shape(format!(
            "upstream has length {}, output has {}",
            upstream.len(),
            params.output_dim()
        )));
    }
    let mut grads = params.zeros_like();
    let mut g = upstream.to_vec();
    for l in (0..n_layers).rev() {
        if l + 1 < n_layers {
            // Hidden layer: fold the activation derivative into g first.
            for (gi, zi) in g.iter_mut().zip(&tape.hidden_preacts[l]) {
                *gi *= gelu_deriv(*zi);
            }
        }
        let a_in = &tape.layer_inputs[l];
        let gl = &mut grads.layers[l];
        let in_dim = a_in.len();
        for (r, &gr) in g.iter().enumerate() {
            gl.bias[r] += gr;
            let row = &mut gl.weight.data_mut()[r * in_dim..(r + 1) * in_dim];
            for (w, &ai) in row.iter_mut().zip(a_in) {
                *w += gr * ai;
            }
        }
        let mut g_prev = vec![0.0; in_dim];
        params.layers[l].weight.matvec_t_acc(&g, &mut g_prev);
        g = g_prev;
    }
    Ok((grads, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{central_diff_grad, grad_close};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn gelu_frozen_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-12);
        // Phi(1) from a 25-digit normal-CDF reference.
        assert_relative_eq!(gelu(1.0), 0.841344746068542949, max_relative = 1e-15);
        assert_relative_eq!(gelu(0.5), 0.345731230637006552, max_relative = 1e-14);
        assert_relative_eq!(gelu(-1.0), -0.158655253931457051, max_relative = 1e-14);
    }

    #[test]
    fn gelu_reflection_identity() {
        // x*Phi(x) satisfies gelu(x) - gelu(-x) = x.
        for &x in &[0.0, 0.3, -2.5, 7.0, -19.0, 0.5e-3] {
            let diff = gelu(x) - gelu(-x);
            assert!((diff - x).abs() <= 1e-12 * x.abs().max(1.0), "x={x}");
        }
    }

    #[test]
    fn gelu_deriv_matches_finite_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.2] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert_relative_eq!(gelu_deriv(x), fd, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    #[test]
    fn forward_matches_hand_computed_example() {
        // 2-2-2 network evaluated independently with 25-digit arithmetic.
        let mut p = MlpParams::zeros(&[2, 2, 2]).unwrap();
        p.layers[0].weight = Matrix::from_rows(&[&[0.5, -0.25], &[0.75, 1.0]]).unwrap();
        p.layers[0].bias = vec![0.1, -0.2];
        p.layers[1].weight = Matrix::from_rows(&[&[1.0, 0.5], &[-0.5, 0.25]]).unwrap();
        p.layers[1].bias = vec![0.05, 0.0];
        let (y, _) = mlp_forward(&p, &[0.3, -0.7]).unwrap();
        assert_relative_eq!(y[0], 0.248126921283453217, max_relative = 1e-15);
        assert_relative_eq!(y[1], -0.18338374597595135, max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_input_and_upstream_lengths() {
        let p = MlpParams::zeros(&[3, 4, 2]).unwrap();
        assert!(mlp_forward(&p, &[1.0, 2.0]).is_err());
        let (_, tape) = mlp_forward(&p, &[1.0, 2.0, 3.0]).unwrap();
        assert!(mlp_backprop(&p, &tape, &[1.0]).is_err());
    }

    #[test]
    fn detects_stale_tape() {
        let p = MlpParams::zeros(&[3, 4, 2]).unwrap();
        let other = MlpParams::zeros(&[3, 5, 2]).unwrap();
        let (_, tape) = mlp_forward(&other, &[1.0, 2.0, 3.0]).unwrap();
        assert!(mlp_backprop(&p, &tape, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn glorot_is_seeded_and_bounded() {
        let widths = [4, 8, 3];
        let mut r1 = ChaCha12Rng::seed_from_u64(9);
        let mut r2 = ChaCha12Rng::seed_from_u64(9);
        let a = MlpParams::glorot(&widths, &mut r1).unwrap();
        let b = MlpParams::glorot(&widths, &mut r2).unwrap();
        assert_eq!(a, b);
        for (l, layer) in a.layers.iter().enumerate() {
            let limit = (6.0
                / (layer.weight.cols() as f64 + layer.weight.rows() as f64))
                .sqrt();
            assert!(layer.weight.data().iter().all(|w| w.abs() <= limit), "layer {l}");
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn backprop_matches_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let widths = [3, 6, 5, 2];
        let params = MlpParams::glorot(&widths, &mut rng).unwrap();
        let x = [0.35, -0.8, 0.2];
        let upstream = [0.7, -1.3];
        let (_, tape) = mlp_forward(&params, &x).unwrap();
        let (grads, input_grad) = mlp_backprop(&params, &tape, &upstream).unwrap();

        // Scalar objective <upstream, f(x)> so directional FD checks apply.
        let loss_of = |p: &MlpParams| {
            let (y, _) = mlp_forward(p, &x).unwrap();
            y.iter().zip(&upstream).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = central_diff_grad(&params, 1e-6, loss_of);
        assert!(grad_close(&grads, &fd, 1e-5), "parameter gradients disagree with FD");

        for i in 0..x.len() {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let f = |xx: &[f64; 3]| {
                let (y, _) = mlp_forward(&params, xx).unwrap();
                y.iter().zip(&upstream).map(|(a, b)| a * b).sum::<f64>()
            };
            let fd_i = (f(&xp) - f(&xm)) / 2e-6;
            assert_relative_eq!(input_grad[i], fd_i, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let params = MlpParams::glorot(&[2, 4, 2], &mut rng).unwrap();
        let (_, tape) = mlp_forward(&params, &[0.1, 0.2]).unwrap();
        let (grads, input_grad) = mlp_backprop(&params, &tape, &[0.0, 0.0]).unwrap();
        assert_eq!(grads, params.zeros_like());
        assert!(input_grad.iter().all(|&g| g == 0.0));
    }
}
