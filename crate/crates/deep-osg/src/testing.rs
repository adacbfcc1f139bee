//! Test support: independent finite-difference oracles used to verify the
//! hand-derived gradients. These helpers only ever call forward passes, so
//! they stay independent of the reverse-mode code they check.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mlp::MlpParams;
use crate::net::{BlockVariant, OsgNet, Sharing};

/// Central-difference gradient of `f` with respect to every scalar in
/// `params`, returned in parameter shape.
pub fn central_diff_grad(
    params: &MlpParams,
    h: f64,
    mut f: impl FnMut(&MlpParams) -> f64,
) -> MlpParams {
    let mut grads = params.zeros_like();
    let mut work = params.clone();
    for l in 0..params.layers.len() {
        for idx in 0..params.layers[l].weight.data().len() {
            let orig = work.layers[l].weight.data()[idx];
            work.layers[l].weight.data_mut()[idx] = orig + h;
            let fp = f(&work);
            work.layers[l].weight.data_mut()[idx] = orig - h;
            let fm = f(&work);
            work.layers[l].weight.data_mut()[idx] = orig;
            grads.layers[l].weight.data_mut()[idx] = (fp - fm) / (2.0 * h);
        }
        for idx in 0..params.layers[l].bias.len() {
            let orig = work.layers[l].bias[idx];
            work.layers[l].bias[idx] = orig + h;
            let fp = f(&work);
            work.layers[l].bias[idx] = orig - h;
            let fm = f(&work);
            work.layers[l].bias[idx] = orig;
            grads.layers[l].bias[idx] = (fp - fm) / (2.0 * h);
        }
    }
    grads
}

/// Central-difference gradient over every scalar of every stored block.
pub fn central_diff_grad_net(
    net: &OsgNet,
    h: f64,
    mut f: impl FnMut(&OsgNet) -> f64,
) -> Vec<MlpParams> {
    let mut out = Vec::with_capacity(net.stored_blocks().len());
    for b in 0..net.stored_blocks().len() {
        let block = net.stored_blocks()[b].clone();
        let g = central_diff_grad(&block, h, |p| {
            let mut probe = net.clone();
            probe.replace_block(b, p.clone());
            f(&probe)
        });
        out.push(g);
    }
    out
}

/// Relative agreement with an absolute floor for vanishing components:
/// passes when |a-b| <= tol*max(|a|,|b|) or |a-b| <= 1e-8.
pub fn scalar_close(a: f64, b: f64, tol: f64) -> bool {
    let diff = (a - b).abs();
    diff <= tol * a.abs().max(b.abs()) || diff <= 1e-8
}

pub fn grad_close(a: &MlpParams, b: &MlpParams, tol: f64) -> bool {
    if !a.same_shape(b) {
        return false;
    }
    for (la, lb) in a.layers.iter().zip(&b.layers) {
        for (x, y) in la.weight.data().iter().zip(lb.weight.data()) {
            if !scalar_close(*x, *y, tol) {
                return false;
            }
        }
        for (x, y) in la.bias.iter().zip(&lb.bias) {
            if !scalar_close(*x, *y, tol) {
                return false;
            }
        }
    }
    true
}

pub fn grads_close(a: &[MlpParams], b: &[MlpParams], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| grad_close(x, y, tol))
}

/// Builds a single-block network whose update is exactly F(u, d) = u + d*A*u,
/// up to rounding. The identity gelu(x) - gelu(-x) = x makes the hidden layer
/// [u; -u] reproduce u after the activation, so the output layer [A | -A]
/// applies A linearly. The lag feature column is zero: the lag enters only
/// through the residual scaling.
pub fn linear_residual_net(a: &Matrix) -> Result<OsgNet> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape("linear test network needs a square matrix".into()));
    }
    let mut block = MlpParams::zeros(&[n + 1, 2 * n, n])?;
    for i in 0..n {
        block.layers[0].weight.set(i, i, 1.0);
        block.layers[0].weight.set(n + i, i, -1.0);
    }
    for i in 0..n {
        for j in 0..n {
            block.layers[1].weight.set(i, j, a.get(i, j));
            block.layers[1].weight.set(i, n + j, -a.get(i, j));
        }
    }
    OsgNet::from_blocks(n, vec![block], 1, BlockVariant::Standard, Sharing::Recursive)
}
