//! Modal-space reduction for PDE learning: Fourier-type basis sets,
//! Galerkin projection through the quadrature Gram system, reference
//! evolution of modal coefficients, and modal burst datasets.
//!
//! States are coefficient vectors; the same network, losses, and trainer
//! consume them unchanged. All bases here are periodic, so the quadrature is
//! the composite trapezoid rule, which integrates the trigonometric products
//! appearing in Gram matrices and Galerkin terms exactly.

use crate::dynamics::{hash_stream, stream_rng, BurstDataset, DeltaSampling};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::loss::Burst;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// 1D real Fourier family used by all bases: index 0 is the constant 1,
/// then (cos kx, sin kx) pairs for k = 1, 2, ...
fn fourier_1d(i: usize, x: f64) -> f64 {
    if i == 0 {
        1.0
    } else {
        let k = ((i + 1) / 2) as f64;
        if i % 2 == 1 {
            (k * x).cos()
        } else {
            (k * x).sin()
        }
    }
}

type BasisEval = Box<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;

/// A finite basis with the quadrature rule its inner products use.
pub struct ModalBasis {
    name: String,
    n: usize,
    space_dim: usize,
    eval: BasisEval,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ModalBasis {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of basis functions (the modal state dimension).
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn eval_member(&self, i: usize, x: &[f64]) -> f64 {
        debug_assert!(i < self.n);
        (self.eval)(i, x)
    }

    /// Gram matrix G_ij = <phi_i, phi_j> under the quadrature rule.
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.n, self.n);
        for (node, w) in self.nodes.iter().zip(&self.weights) {
            let vals: Vec<f64> = (0..self.n).map(|i| self.eval_member(i, node)).collect();
            for i in 0..self.n {
                for j in 0..self.n {
                    g.set(i, j, g.get(i, j) + w * vals[i] * vals[j]);
                }
            }
        }
        g
    }

    /// Galerkin projection of function samples on the quadrature nodes.
    pub fn project_samples(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.nodes.len() {
            return Err(Error::Shape(format!(
                "projection needs {} samples on the quadrature nodes, got {}",
                self.nodes.len(),
                samples.len()
            )));
        }
        let mut rhs = vec![0.0; self.n];
        for ((node, w), s) in self.nodes.iter().zip(&self.weights).zip(samples) {
            for (i, r) in rhs.iter_mut().enumerate() {
                *r += w * s * self.eval_member(i, node);
            }
        }
        self.gram().solve(&rhs)
    }

    pub fn project_fn(&self, f: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        let samples: Vec<f64> = self.nodes.iter().map(|x| f(x)).collect();
        self.project_samples(&samples)
    }

    /// Series evaluation at one point.
    pub fn reconstruct_at(&self, coeffs: &[f64], x: &[f64]) -> Result<f64> {
        if coeffs.len() != self.n {
            return Err(Error::Shape(format!(
                "coefficient vector has length {}, basis has {}",
                coeffs.len(),
                self.n
            )));
        }
        Ok(coeffs.iter().enumerate().map(|(i, c)| c * self.eval_member(i, x)).sum())
    }

    pub fn reconstruct_on_nodes(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.nodes.iter().map(|x| self.reconstruct_at(coeffs, x)).collect()
    }
}

impl std::fmt::Debug for ModalBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModalBasis")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("space_dim", &self.space_dim)
            .field("quad_nodes", &self.nodes.len())
            .finish()
    }
}

fn periodic_nodes_1d(m: usize, start: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let h = 2.0 * PI / m as f64;
    let nodes = (0..m).map(|k| vec![start + h * k as f64]).collect();
    (nodes, vec![h; m])
}

/// Seven-function Fourier basis {1, cos x, sin x, ..., sin 3x} on (0, 2pi).
pub fn advection_basis() -> ModalBasis {
    let (nodes, weights) = periodic_nodes_1d(256, 0.0);
    ModalBasis {
        name: "fourier7".into(),
        n: 7,
        space_dim: 1,
        eval: Box::new(|i, x| fourier_1d(i, x[0])),
        nodes,
        weights,
    }
}

/// Nine-sine basis {sin ix} on (-pi, pi) with homogeneous Dirichlet ends.
pub fn burgers_basis() -> ModalBasis {
    let (nodes, weights) = periodic_nodes_1d(36, -PI);
    ModalBasis {
        name: "sine9".into(),
        n: 9,
        space_dim: 1,
        eval: Box::new(|i, x| (((i + 1) as f64) * x[0]).sin()),
        nodes,
        weights,
    }
}

/// Tensor-product basis {1, cos x, sin x, cos 2x, sin 2x} x (same in y) on
/// the periodic square; the flattened index is p*5 + q.
pub fn convdiff_basis() -> ModalBasis {
    let m = 32;
    let h = 2.0 * PI / m as f64;
    let mut nodes = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            nodes.push(vec![h * a as f64, h * b as f64]);
        }
    }
    ModalBasis {
        name: "fourier5x5".into(),
        n: 25,
        space_dim: 2,
        eval: Box::new(|i, x| fourier_1d(i / 5, x[0]) * fourier_1d(i % 5, x[1])),
        nodes,
        weights: vec![h * h; m * m],
    }
}

/// Rotates one (cos, sin) coefficient pair by `theta`: the translation
/// u(x) -> u(x - delta) maps coefficients (a, b) of (cos kx, sin kx) to
/// (a cos k delta - b sin k delta, a sin k delta + b cos k delta).
fn rotate_pair(v: &mut [f64], ia: usize, ib: usize, theta: f64) {
    let (a, b) = (v[ia], v[ib]);
    let (s, c) = theta.sin_cos();
    v[ia] = a * c - b * s;
    v[ib] = a * s + b * c;
}

/// The reference PDE evolution in modal coordinates.
pub enum ModalPde {
    /// u_t + u_x = 0, periodic: exact rotation of each harmonic pair.
    Advection,
    /// u_t + u u_x = nu u_xx on (-pi, pi), Dirichlet: Galerkin sine system
    /// with the quadratic term evaluated pseudo-spectrally on the 4n grid,
    /// integrated by fixed-step RK4.
    ViscousBurgers { nu: f64, tau: f64, sin_table: Matrix, cos_table: Matrix, m: usize },
    /// u_t + a1 u_x + a2 u_y = s1 u_xx + s2 u_yy, periodic: exact per-mode
    /// rotation plus exponential decay.
    ConvDiff2d { alpha: [f64; 2], sigma: [f64; 2] },
}

impl std::fmt::Debug for ModalPde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModalPde::Advection => write!(f, "Advection"),
            ModalPde::ViscousBurgers { nu, tau, .. } => {
                write!(f, "ViscousBurgers {{ nu: {nu}, tau: {tau} }}")
            }
            ModalPde::ConvDiff2d { alpha, sigma } => {
                write!(f, "ConvDiff2d {{ alpha: {alpha:?}, sigma: {sigma:?} }}")
            }
        }
    }
}

/// A modal system: basis, reference PDE, and the coefficient box initial
/// states are drawn from.
#[derive(Debug)]
pub struct ModalSystem {
    name: String,
    pub basis: ModalBasis,
    pub pde: ModalPde,
    coeff_domain: Vec<[f64; 2]>,
}

impl ModalSystem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn coeff_domain(&self) -> &[[f64; 2]] {
        &self.coeff_domain
    }

    /// Evolves modal coefficients over a lag.
    pub fn evolve(&self, v0: &[f64], delta: f64) -> Result<Vec<f64>> {
        if v0.len() != self.dim() {
            return Err(Error::Shape(format!(
                "modal state has length {}, basis has {}",
                v0.len(),
                self.dim()
            )));
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidDelta {
                value: delta,
                reason: "modal evolution needs a finite lag >= 0".into(),
            });
        }
        if delta == 0.0 {
            return Ok(v0.to_vec());
        }
        match &self.pde {
            ModalPde::Advection => {
                let mut v = v0.to_vec();
                for k in 1..=3usize {
                    rotate_pair(&mut v, 2 * k - 1, 2 * k, k as f64 * delta);
                }
                Ok(v)
            }
            ModalPde::ConvDiff2d { alpha, sigma } => {
                let mut v = v0.to_vec();
                let wavenumber = |p: usize| ((p + 1) / 2) as f64;
                // Advection in x rotates (cos k x, sin k x) pairs for every
                // fixed y factor; same in y; diffusion then damps each mode.
                for k in 1..=2usize {
                    for q in 0..5 {
                        rotate_pair(&mut v, (2 * k - 1) * 5 + q, 2 * k * 5 + q, k as f64 * alpha[0] * delta);
                    }
                    for p in 0..5 {
                        rotate_pair(&mut v, p * 5 + 2 * k - 1, p * 5 + 2 * k, k as f64 * alpha[1] * delta);
                    }
                }
                for p in 0..5 {
                    for q in 0..5 {
                        let kp = wavenumber(p);
                        let kq = wavenumber(q);
                        let rate = sigma[0] * kp * kp + sigma[1] * kq * kq;
                        v[p * 5 + q] *= (-rate * delta).exp();
                    }
                }
                Ok(v)
            }
            ModalPde::ViscousBurgers { nu, tau, sin_table, cos_table, m } => {
                let n = self.dim();
                let mut v = v0.to_vec();
                let steps = ((delta / tau).ceil() as usize).max(1);
                let mut k1 = vec![0.0; n];
                let mut k2 = vec![0.0; n];
                let mut k3 = vec![0.0; n];
                let mut k4 = vec![0.0; n];
                let mut tmp = vec![0.0; n];
                let rhs = |v: &[f64], out: &mut [f64]| {
                    burgers_rhs(v, out, *nu, sin_table, cos_table, *m);
                };
                for i in 0..steps {
                    let start = tau * i as f64;
                    let h = if i + 1 == steps { delta - start } else { *tau };
                    if h <= 0.0 {
                        break;
                    }
                    rhs(&v, &mut k1);
                    for j in 0..n {
                        tmp[j] = v[j] + 0.5 * h * k1[j];
                    }
                    rhs(&tmp, &mut k2);
                    for j in 0..n {
                        tmp[j] = v[j] + 0.5 * h * k2[j];
                    }
                    rhs(&tmp, &mut k3);
                    for j in 0..n {
                        tmp[j] = v[j] + h * k3[j];
                    }
                    rhs(&tmp, &mut k4);
                    for j in 0..n {
                        v[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                    }
                    if !linalg::all_finite(&v) {
                        return Err(Error::NonFinite(format!(
                            "modal reference state became non-finite near time {:.6e}",
                            start + h
                        )));
                    }
                }
                Ok(v)
            }
        }
    }
}

/// Galerkin right-hand side of the viscous problem for sine coefficients:
/// out_j = -(2/M) sum_k (u u_x)(x_k) sin((j+1) x_k) - nu (j+1)^2 v_j,
/// with u and u_x synthesized from precomputed mode tables on the M grid.
fn burgers_rhs(v: &[f64], out: &mut [f64], nu: f64, sin_table: &Matrix, cos_table: &Matrix, m: usize) {
    let n = v.len();
    // u and u_x on the grid (tables are M x n).
    for j in 0..n {
        out[j] = 0.0;
    }
    let mut acc = vec![0.0; n];
    for k in 0..m {
        let srow = sin_table.row(k);
        let crow = cos_table.row(k);
        let mut u = 0.0;
        let mut ux = 0.0;
        for i in 0..n {
            u += v[i] * srow[i];
            ux += (i + 1) as f64 * v[i] * crow[i];
        }
        let f = u * ux;
        for (j, a) in acc.iter_mut().enumerate() {
            *a += f * srow[j];
        }
    }
    let scale = 2.0 / m as f64;
    for j in 0..n {
        out[j] = -scale * acc[j] - nu * ((j + 1) * (j + 1)) as f64 * v[j];
    }
}

/// Advection setup: 7 Fourier modes, coefficient box from the experiment.
pub fn advection_system() -> ModalSystem {
    ModalSystem {
        name: "advection".into(),
        basis: advection_basis(),
        pde: ModalPde::Advection,
        coeff_domain: vec![
            [-0.8, 0.8],
            [-0.8, 0.8],
            [-0.8, 0.8],
            [-0.2, 0.2],
            [-0.2, 0.2],
            [-0.03, 0.03],
            [-0.03, 0.03],
        ],
    }
}

/// Viscous setup: 9 sine modes, nu = 0.1, reference RK4 step 1e-4.
pub fn burgers_system() -> ModalSystem {
    let basis = burgers_basis();
    let m = basis.nodes().len();
    let n = basis.len();
    let mut sin_table = Matrix::zeros(m, n);
    let mut cos_table = Matrix::zeros(m, n);
    for (k, node) in basis.nodes().iter().enumerate() {
        for i in 0..n {
            let arg = (i + 1) as f64 * node[0];
            sin_table.set(k, i, arg.sin());
            cos_table.set(k, i, arg.cos());
        }
    }
    ModalSystem {
        name: "burgers_viscous".into(),
        basis,
        pde: ModalPde::ViscousBurgers { nu: 0.1, tau: 1e-4, sin_table, cos_table, m },
        coeff_domain: vec![
            [-1.5, 1.5],
            [-0.5, 0.5],
            [-0.2, 0.2],
            [-0.2, 0.2],
            [-0.1, 0.1],
            [-0.1, 0.1],
            [-0.05, 0.05],
            [-0.05, 0.05],
            [-0.02, 0.02],
        ],
    }
}

/// Convection-diffusion setup: 25 tensor modes, velocities (1, 0.7) and
/// diffusivities (0.1, 0.16). The coefficient box shrinks with the mode's
/// total wavenumber (half-width 0.5 / (1 + kp^2 + kq^2)).
pub fn convdiff_system() -> ModalSystem {
    let wavenumber = |p: usize| ((p + 1) / 2) as f64;
    let coeff_domain = (0..25)
        .map(|idx| {
            let kp = wavenumber(idx / 5);
            let kq = wavenumber(idx % 5);
            let half = 0.5 / (1.0 + kp * kp + kq * kq);
            [-half, half]
        })
        .collect();
    ModalSystem {
        name: "convdiff2d".into(),
        basis: convdiff_basis(),
        pde: ModalPde::ConvDiff2d { alpha: [1.0, 0.7], sigma: [0.1, 0.16] },
        coeff_domain,
    }
}

pub fn modal_by_name(name: &str) -> Result<ModalSystem> {
    match name {
        "advection" => Ok(advection_system()),
        "burgers_viscous" => Ok(burgers_system()),
        "convdiff2d" => Ok(convdiff_system()),
        other => Err(Error::Config(format!(
            "unknown modal system '{other}' (built-ins: advection, burgers_viscous, convdiff2d)"
        ))),
    }
}

pub const MODAL_NAMES: [&str; 3] = ["advection", "burgers_viscous", "convdiff2d"];

/// Generates modal bursts exactly like `make_bursts` does for ODE systems:
/// initial coefficients uniform in the coefficient box, lags from `sampling`,
/// transitions by the modal reference evolution. Per-burst substreams keep
/// the result order-independent and reproducible.
pub fn make_modal_bursts(
    sys: &ModalSystem,
    sampling: &DeltaSampling,
    count: usize,
    seed: u64,
) -> Result<BurstDataset> {
    sampling.validate()?;
    if count == 0 {
        return Err(Error::Empty("burst generation needs count >= 1".into()));
    }
    let bursts: Vec<Burst> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<Burst> {
            let mut rng = stream_rng(hash_stream(seed, 0, 4), i as u64, 0);
            let u0: Vec<f64> = sys
                .coeff_domain
                .iter()
                .map(|b| rng.gen_range(b[0]..=b[1]))
                .collect();
            let delta1 = sampling.sample(&mut rng);
            let delta2 = sampling.sample(&mut rng);
            let u1 = sys.evolve(&u0, delta1)?;
            let u2 = sys.evolve(&u1, delta2)?;
            Ok(Burst { u0, u1, u2, delta1, delta2 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BurstDataset {
        system: sys.name().to_string(),
        bursts,
        domain_bounds: sys.coeff_domain.clone(),
        delta_range: sampling.range(),
        delta_repr: sampling.repr(),
        seed,
        eta: 0.0,
        normalized: false,
        norm: None,
    })
}
