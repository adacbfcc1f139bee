//! Adam with bias correction plus a triangular cyclic learning-rate schedule.

use crate::error::{Error, Result};
use crate::mlp::MlpParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second-moment estimates for a list of parameter blocks.
#[derive(Debug, Clone)]
pub struct AdamState {
    hyper: AdamHyper,
    m: Vec<MlpParams>,
    v: Vec<MlpParams>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[MlpParams], hyper: AdamHyper) -> Self {
        AdamState {
            hyper,
            m: params.iter().map(|p| p.zeros_like()).collect(),
            v: params.iter().map(|p| p.zeros_like()).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One Adam update over every scalar of every block. Rejects non-finite
    /// gradients with the offending block/layer named, so training aborts
    /// with a diagnosable error instead of silently corrupting parameters.
    pub fn step(&mut self, params: &mut [MlpParams], grads: &[MlpParams], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape("parameter/gradient block counts differ".into()));
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            if !p.same_shape(g) {
                return Err(Error::Shape(format!("gradient shape differs in block {b}")));
            }
            for (l, layer) in g.layers.iter().enumerate() {
                let finite = layer.weight.data().iter().chain(layer.bias.iter()).all(|x| x.is_finite());
                if !finite {
                    return Err(Error::NonFinite(format!("gradient in block {b}, layer {l}")));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (l, gl) in g.layers.iter().enumerate() {
                let pw = p.layers[l].weight.data_mut();
                let mw = m.layers[l].weight.data_mut();
                let vw = v.layers[l].weight.data_mut();
                for i in 0..pw.len() {
                    let gi = gl.weight.data()[i];
                    mw[i] = beta1 * mw[i] + (1.0 - beta1) * gi;
                    vw[i] = beta2 * vw[i] + (1.0 - beta2) * gi * gi;
                    pw[i] -= lr * (mw[i] / bc1) / ((vw[i] / bc2).sqrt() + eps);
                }
                for i in 0..p.layers[l].bias.len() {
                    let gi = gl.bias[i];
                    m.layers[l].bias[i] = beta1 * m.layers[l].bias[i] + (1.0 - beta1) * gi;
                    v.layers[l].bias[i] = beta2 * v.layers[l].bias[i] + (1.0 - beta2) * gi * gi;
                    p.layers[l].bias[i] -=
                        lr * (m.layers[l].bias[i] / bc1) / ((v.layers[l].bias[i] / bc2).sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Triangular cyclic schedule: lr starts at `base`, peaks at `max` half-way
/// through each cycle, and returns to `base` at cycle boundaries.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CyclicLr {
    pub base: f64,
    pub max: f64,
    pub cycle_steps: u64,
}

impl Default for CyclicLr {
    fn default() -> Self {
        CyclicLr { base: 1e-4, max: 1e-3, cycle_steps: 2000 }
    }
}

impl CyclicLr {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.max >= self.base) {
            return Err(Error::Config(format!(
                "cyclic lr needs 0 < base <= max, got base={} max={}",
                self.base, self.max
            )));
        }
        if self.cycle_steps == 0 {
            return Err(Error::Config("cyclic lr cycle_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let phase = (step % self.cycle_steps) as f64 / self.cycle_steps as f64;
        let tri = 1.0 - (2.0 * phase - 1.0).abs();
        self.base + (self.max - self.base) * tri
    }
}
