//! Reference dynamics: autonomous ODE systems, integrators, and the burst
//! datasets sampled from them.
//!
//! A burst is two consecutive transitions {u0, d1, u1, d2, u2} generated by
//! evolving a sampled initial state over two sampled lags. Datasets carry
//! their sampling provenance (seed, lag distribution, noise level) and can be
//! normalized per channel to [-1, 1] for training.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::loss::Burst;
use crate::net::DeltaFeatureMap;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Deterministic substream derivation: one base seed plus two coordinates
/// (burst index, purpose tag) give an independent generator seed. Uses the
/// splitmix64 finalizer over the sequentially mixed words.
pub fn hash_stream(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed;
    for w in [a, b] {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(w);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Seeded generator for a named substream.
pub fn stream_rng(seed: u64, a: u64, b: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(hash_stream(seed, a, b))
}

type Predicate = Box<dyn Fn(&[f64]) -> bool + Send + Sync>;
type Sampler = Box<dyn Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync>;

/// Region initial states are drawn from: an axis-aligned box, optionally
/// restricted by a membership predicate (sampled by rejection) or replaced by
/// a custom sampler (for non-box regions like a probability simplex).
pub struct Domain {
    bounds: Vec<[f64; 2]>,
    predicate: Option<Predicate>,
    sampler: Option<Sampler>,
}

impl Domain {
    pub fn new_box(bounds: Vec<[f64; 2]>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Empty("domain needs at least one coordinate".into()));
        }
        for b in &bounds {
            if !(b[0].is_finite() && b[1].is_finite() && b[0] <= b[1]) {
                return Err(Error::Config(format!("bad domain interval [{}, {}]", b[0], b[1])));
            }
        }
        Ok(Domain { bounds, predicate: None, sampler: None })
    }

    /// Restricts the box by a membership test; sampling rejects outsiders.
    pub fn with_predicate(
        mut self,
        predicate: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.predicate = Some(Box::new(predicate));
        self
    }

    /// Replaces box sampling entirely; `bounds` stays as the enclosing box.
    pub fn with_sampler(
        mut self,
        sampler: impl Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.sampler = Some(Box::new(sampler));
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.bounds.len()
            && u.iter().zip(&self.bounds).all(|(x, b)| *x >= b[0] && *x <= b[1])
            && self.predicate.as_ref().map_or(true, |p| p(u))
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if let Some(s) = &self.sampler {
            return Ok(s(rng));
        }
        for _ in 0..10_000 {
            let u: Vec<f64> =
                self.bounds.iter().map(|b| rng.gen_range(b[0]..=b[1])).collect();
            if self.predicate.as_ref().map_or(true, |p| p(&u)) {
                return Ok(u);
            }
        }
        Err(Error::Numeric("domain rejection sampling stalled after 10000 draws".into()))
    }
}

impl std::fmt::Debug for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Domain")
            .field("bounds", &self.bounds)
            .field("predicate", &self.predicate.is_some())
            .field("sampler", &self.sampler.is_some())
            .finish()
    }
}

type Rhs = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type Jac = Box<dyn Fn(&[f64], &mut Matrix) + Send + Sync>;

/// Autonomous system du/dt = f(u) with an analytic Jacobian (needed by the
/// implicit integrator) and the region its data is drawn from.
pub struct OdeSystem {
    name: String,
    dim: usize,
    rhs: Rhs,
    jacobian: Jac,
    pub domain: Domain,
}

impl OdeSystem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        domain: Domain,
        rhs: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        jacobian: impl Fn(&[f64], &mut Matrix) + Send + Sync + 'static,
    ) -> Result<Self> {
        if domain.dim() != dim {
            return Err(Error::Shape(format!(
                "domain dimension {} differs from system dimension {dim}",
                domain.dim()
            )));
        }
        Ok(OdeSystem { name: name.into(), dim, rhs: Box::new(rhs), jacobian: Box::new(jacobian), domain })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rhs(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.dim);
        (self.rhs)(u, out);
    }

    pub fn eval_rhs(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.rhs(u, &mut out);
        out
    }

    pub fn jacobian(&self, u: &[f64], out: &mut Matrix) {
        debug_assert_eq!(u.len(), self.dim);
        (self.jacobian)(u, out);
    }
}

impl std::fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdeSystem").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

/// Reference integrator choice. The explicit scheme is fourth order with a
/// fixed step; the implicit scheme is backward Euler with Newton iterations
/// and step-doubling error control, for stiff systems.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    Rk4 { dt: f64 },
    Stiff { tol: f64 },
}

impl Integrator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Integrator::Rk4 { dt } if !(dt.is_finite() && *dt > 0.0) => {
                Err(Error::Config(format!("integrator step must be positive, got {dt}")))
            }
            Integrator::Stiff { tol } if !(tol.is_finite() && *tol > 0.0) => {
                Err(Error::Config(format!("integrator tolerance must be positive, got {tol}")))
            }
            _ => Ok(()),
        }
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidDelta { value: t, reason: "integration horizon must be finite and >= 0".into() });
    }
    Ok(())
}

fn check_state(u: &[f64], t: f64, scheme: &str) -> Result<()> {
    if linalg::all_finite(u) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{scheme} state became non-finite near time {t:.6e}")))
    }
}

/// Classical fourth-order step of size `h`, writing in place.
fn rk4_step(sys: &OdeSystem, u: &mut [f64], h: f64, scratch: &mut Rk4Scratch) {
    let n = u.len();
    sys.rhs(u, &mut scratch.k1);
    for i in 0..n {
        scratch.tmp[i] = u[i] + 0.5 * h * scratch.k1[i];
    }
    sys.rhs(&scratch.tmp, &mut scratch.k2);
    for i in 0..n {
        scratch.tmp[i] = u[i] + 0.5 * h * scratch.k2[i];
    }
    sys.rhs(&scratch.tmp, &mut scratch.k3);
    for i in 0..n {
        scratch.tmp[i] = u[i] + h * scratch.k3[i];
    }
    sys.rhs(&scratch.tmp, &mut scratch.k4);
    for i in 0..n {
        u[i] += h / 6.0 * (scratch.k1[i] + 2.0 * scratch.k2[i] + 2.0 * scratch.k3[i] + scratch.k4[i]);
    }
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Rk4Scratch { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }
}

/// Evolves `u0` over horizon `t` with fixed steps of size `dt` (the final
/// step is shortened to land exactly on `t`).
pub fn rk4_evolve(sys: &OdeSystem, u0: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
    check_horizon(t)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("integrator step must be positive, got {dt}")));
    }
    let mut u = u0.to_vec();
    if t == 0.0 {
        return Ok(u);
    }
    let mut scratch = Rk4Scratch::new(u.len());
    let n = ((t / dt).ceil() as usize).max(1);
    for i in 0..n {
        let start = dt * i as f64;
        let h = if i + 1 == n { t - start } else { dt };
        if h <= 0.0 {
            break; // rounding consumed the horizon on the previous step
        }
        rk4_step(sys, &mut u, h, &mut scratch);
        check_state(&u, start + h, "explicit integrator")?;
    }
    Ok(u)
}

/// One backward-Euler step: solves x = u + h f(x) by Newton iteration from a
/// forward-Euler predictor.
fn backward_euler_step(sys: &OdeSystem, u: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = u.len();
    let mut fx = vec![0.0; n];
    sys.rhs(u, &mut fx);
    let mut x: Vec<f64> = u.iter().zip(&fx).map(|(ui, fi)| ui + h * fi).collect();
    let mut jac = Matrix::zeros(n, n);
    for _ in 0..25 {
        if !linalg::all_finite(&x) {
            return Err(Error::NonFinite("implicit step iterate became non-finite".into()));
        }
        sys.rhs(&x, &mut fx);
        let residual: Vec<f64> =
            (0..n).map(|i| -(x[i] - u[i] - h * fx[i])).collect();
        sys.jacobian(&x, &mut jac);
        let mut newton = Matrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                let v = if r == c { 1.0 } else { 0.0 } - h * jac.get(r, c);
                newton.set(r, c, v);
            }
        }
        let delta = newton.solve(&residual)?;
        for i in 0..n {
            x[i] += delta[i];
        }
        if linalg::norm_inf(&delta) <= 1e-12 * (1.0 + linalg::norm_inf(&x)) {
            check_state(&x, h, "implicit integrator")?;
            return Ok(x);
        }
    }
    Err(Error::Numeric("implicit step Newton iteration did not converge".into()))
}

/// Evolves a stiff system over horizon `t` with backward Euler under
/// step-doubling control: each step is compared against two half steps, and
/// when their gap is at most `tol` the locally extrapolated value
/// 2*u_half - u_full is accepted (cancels the first-order error term while
/// keeping exact conservation of linear invariants and full damping of stiff
/// modes). The step halves on rejection or Newton failure and grows 1.5x
/// after acceptance.
pub fn stiff_evolve(sys: &OdeSystem, u0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    check_horizon(t)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Config(format!("integrator tolerance must be positive, got {tol}")));
    }
    let mut u = u0.to_vec();
    if t == 0.0 {
        return Ok(u);
    }
    check_state(&u, 0.0, "implicit integrator")?;
    let h_min = 1e-14 * t;
    let mut s = 0.0;
    let mut h = t / 16.0;
    while s < t * (1.0 - 1e-15) {
        h = h.min(t - s);
        if h < h_min {
            return Err(Error::Numeric(format!(
                "implicit integrator stalled near time {s:.6e} (step underflow)"
            )));
        }
        let full = backward_euler_step(sys, &u, h);
        let halves = backward_euler_step(sys, &u, 0.5 * h)
            .and_then(|mid| backward_euler_step(sys, &mid, 0.5 * h));
        match (full, halves) {
            (Ok(uf), Ok(uh)) => {
                let est = linalg::norm_inf(&linalg::sub(&uf, &uh));
                if est <= tol {
                    u = uh.iter().zip(&uf).map(|(half, full)| 2.0 * half - full).collect();
                    s += h;
                    h *= 1.5;
                } else {
                    h *= 0.5;
                }
            }
            _ => h *= 0.5,
        }
    }
    Ok(u)
}

pub fn evolve(sys: &OdeSystem, u0: &[f64], t: f64, integrator: &Integrator) -> Result<Vec<f64>> {
    if u0.len() != sys.dim() {
        return Err(Error::Shape(format!(
            "state has length {}, system {} has dimension {}",
            u0.len(),
            sys.name(),
            sys.dim()
        )));
    }
    match integrator {
        Integrator::Rk4 { dt } => rk4_evolve(sys, u0, t, *dt),
        Integrator::Stiff { tol } => stiff_evolve(sys, u0, t, *tol),
    }
}

/// Lag distribution for burst generation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaSampling {
    Uniform { min: f64, max: f64 },
    /// Lag = 10^e with e uniform — covers several decades for multiscale data.
    LogUniform { log10_min: f64, log10_max: f64 },
}

impl DeltaSampling {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.range();
        if lo > 0.0 && hi >= lo && hi.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("bad lag range [{lo}, {hi}]")))
        }
    }

    /// Physical lag bounds.
    pub fn range(&self) -> [f64; 2] {
        match self {
            DeltaSampling::Uniform { min, max } => [*min, *max],
            DeltaSampling::LogUniform { log10_min, log10_max } => {
                [10f64.powf(*log10_min), 10f64.powf(*log10_max)]
            }
        }
    }

    /// The lag-channel coordinate that gets normalized for this distribution.
    pub fn repr(&self) -> DeltaRepr {
        match self {
            DeltaSampling::Uniform { .. } => DeltaRepr::Identity,
            DeltaSampling::LogUniform { .. } => DeltaRepr::NegLog10,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            DeltaSampling::Uniform { min, max } => rng.gen_range(*min..=*max),
            DeltaSampling::LogUniform { log10_min, log10_max } => {
                10f64.powf(rng.gen_range(*log10_min..=*log10_max))
            }
        }
    }
}

/// Coordinate the lag channel is expressed in before its affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRepr {
    Identity,
    NegLog10,
}

impl DeltaRepr {
    pub fn apply(&self, delta: f64) -> Result<f64> {
        match self {
            DeltaRepr::Identity => Ok(delta),
            DeltaRepr::NegLog10 => {
                if delta > 0.0 {
                    Ok(-delta.log10())
                } else {
                    Err(Error::InvalidDelta {
                        value: delta,
                        reason: "log lag coordinate needs a positive lag".into(),
                    })
                }
            }
        }
    }

    pub fn invert(&self, r: f64) -> f64 {
        match self {
            DeltaRepr::Identity => r,
            DeltaRepr::NegLog10 => 10f64.powf(-r),
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            DeltaRepr::Identity => 0,
            DeltaRepr::NegLog10 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(DeltaRepr::Identity),
            1 => Ok(DeltaRepr::NegLog10),
            other => Err(Error::Format(format!("unknown lag-coordinate tag {other}"))),
        }
    }
}

/// Per-channel affine map to [-1, 1]. A degenerate channel (constant data)
/// maps to 0 and inverts to its constant.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelStats {
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

impl ChannelStats {
    pub fn fit(values: impl Iterator<Item = f64>) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for v in values {
            if !v.is_finite() {
                return Err(Error::NonFinite("channel statistics saw a non-finite value".into()));
            }
            min = min.min(v);
            max = max.max(v);
            any = true;
        }
        if !any {
            return Err(Error::Empty("channel statistics need at least one value".into()));
        }
        Ok(ChannelStats { min, max, degenerate: min == max })
    }

    pub fn forward(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            2.0 * (x - self.min) / (self.max - self.min) - 1.0
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            self.min + (y + 1.0) * (self.max - self.min) / 2.0
        }
    }
}

/// Normalization statistics for a dataset: one map per state channel plus one
/// for the lag channel (fitted in its `repr` coordinate).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub state: Vec<ChannelStats>,
    pub delta: ChannelStats,
    pub repr: DeltaRepr,
}

impl NormStats {
    pub fn fit(dataset: &BurstDataset) -> Result<Self> {
        if dataset.bursts.is_empty() {
            return Err(Error::Empty("cannot fit normalization on an empty dataset".into()));
        }
        let n = dataset.bursts[0].u0.len();
        let mut state = Vec::with_capacity(n);
        for c in 0..n {
            state.push(ChannelStats::fit(dataset.bursts.iter().flat_map(|b| {
                [b.u0[c], b.u1[c], b.u2[c]].into_iter()
            }))?);
        }
        let repr = dataset.delta_repr;
        let mut reprs = Vec::with_capacity(2 * dataset.bursts.len());
        for b in &dataset.bursts {
            reprs.push(repr.apply(b.delta1)?);
            reprs.push(repr.apply(b.delta2)?);
        }
        let delta = ChannelStats::fit(reprs.into_iter())?;
        Ok(NormStats { state, delta, repr })
    }

    pub fn state_dim(&self) -> usize {
        self.state.len()
    }

    pub fn normalize_state(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.state.len() {
            return Err(Error::Shape("state length differs from normalization channels".into()));
        }
        Ok(u.iter().zip(&self.state).map(|(x, c)| c.forward(*x)).collect())
    }

    pub fn denormalize_state(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.state.len() {
            return Err(Error::Shape("state length differs from normalization channels".into()));
        }
        Ok(u.iter().zip(&self.state).map(|(y, c)| c.inverse(*y)).collect())
    }

    /// Physical lag -> normalized lag channel.
    pub fn normalize_delta(&self, delta: f64) -> Result<f64> {
        Ok(self.delta.forward(self.repr.apply(delta)?))
    }

    /// Normalized lag channel -> physical lag.
    pub fn denormalize_delta(&self, y: f64) -> f64 {
        self.repr.invert(self.delta.inverse(y))
    }

    /// Affine map the network applies to its lag-feature coordinate. It is
    /// the same map the lag channel was normalized with, expressed as
    /// scale/offset on the repr coordinate.
    pub fn delta_feature_map(&self) -> DeltaFeatureMap {
        if self.delta.degenerate {
            // Constant-lag data: center the feature at zero.
            DeltaFeatureMap { scale: 1.0, offset: -self.delta.min }
        } else {
            let scale = 2.0 / (self.delta.max - self.delta.min);
            DeltaFeatureMap { scale, offset: -1.0 - scale * self.delta.min }
        }
    }

    /// Normalized-coordinate image of the physical sampling box.
    pub fn normalized_bounds(&self, physical: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
        if physical.len() != self.state.len() {
            return Err(Error::Shape("bounds length differs from normalization channels".into()));
        }
        Ok(physical
            .iter()
            .zip(&self.state)
            .map(|(b, c)| {
                let lo = c.forward(b[0]);
                let hi = c.forward(b[1]);
                [lo.min(hi), lo.max(hi)]
            })
            .collect())
    }
}

/// A generated burst dataset with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstDataset {
    pub system: String,
    pub bursts: Vec<Burst>,
    /// Physical sampling box (enclosing box for predicate domains).
    pub domain_bounds: Vec<[f64; 2]>,
    /// Physical lag bounds.
    pub delta_range: [f64; 2],
    pub delta_repr: DeltaRepr,
    pub seed: u64,
    /// Multiplicative noise level the states carry (0 = clean).
    pub eta: f64,
    pub normalized: bool,
    pub norm: Option<NormStats>,
}

impl BurstDataset {
    pub fn state_dim(&self) -> Result<usize> {
        self.bursts
            .first()
            .map(|b| b.u0.len())
            .ok_or_else(|| Error::Empty("dataset has no bursts".into()))
    }
}

/// Generates `count` bursts. Each burst has its own derived random stream, so
/// the result is independent of iteration order and reproducible from
/// (system, integrator, sampling, seed) alone.
pub fn make_bursts(
    sys: &OdeSystem,
    integrator: &Integrator,
    sampling: &DeltaSampling,
    count: usize,
    seed: u64,
) -> Result<BurstDataset> {
    integrator.validate()?;
    sampling.validate()?;
    if count == 0 {
        return Err(Error::Empty("burst generation needs count >= 1".into()));
    }
    let bursts: Vec<Burst> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<Burst> {
            let mut rng = stream_rng(seed, i as u64, 0);
            let u0 = sys.domain.sample(&mut rng)?;
            let delta1 = sampling.sample(&mut rng);
            let delta2 = sampling.sample(&mut rng);
            let u1 = evolve(sys, &u0, delta1, integrator)?;
            let u2 = evolve(sys, &u1, delta2, integrator)?;
            Ok(Burst { u0, u1, u2, delta1, delta2 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BurstDataset {
        system: sys.name().to_string(),
        bursts,
        domain_bounds: sys.domain.bounds().to_vec(),
        delta_range: sampling.range(),
        delta_repr: sampling.repr(),
        seed,
        eta: 0.0,
        normalized: false,
        norm: None,
    })
}

/// Applies componentwise multiplicative noise u <- u * (1 + e) with e uniform
/// in [-eta, eta], independently per component and state. Must run on clean,
/// unnormalized data.
pub fn add_noise(dataset: &mut BurstDataset, eta: f64, seed: u64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("noise level must be finite and >= 0, got {eta}")));
    }
    if dataset.normalized {
        return Err(Error::Config("noise must be applied before normalization".into()));
    }
    if dataset.eta != 0.0 {
        return Err(Error::Config("dataset already carries noise".into()));
    }
    if eta == 0.0 {
        return Ok(());
    }
    for (i, burst) in dataset.bursts.iter_mut().enumerate() {
        let mut rng = stream_rng(seed, i as u64, 1);
        for state in [&mut burst.u0, &mut burst.u1, &mut burst.u2] {
            for x in state.iter_mut() {
                *x *= 1.0 + rng.gen_range(-eta..=eta);
            }
        }
    }
    dataset.eta = eta;
    Ok(())
}

/// Fits per-channel statistics and rewrites all bursts (states and lags) into
/// normalized coordinates.
pub fn normalize_dataset(dataset: &mut BurstDataset) -> Result<()> {
    if dataset.normalized {
        return Err(Error::Config("dataset is already normalized".into()));
    }
    let stats = NormStats::fit(dataset)?;
    for burst in &mut dataset.bursts {
        burst.u0 = stats.normalize_state(&burst.u0)?;
        burst.u1 = stats.normalize_state(&burst.u1)?;
        burst.u2 = stats.normalize_state(&burst.u2)?;
        burst.delta1 = stats.normalize_delta(burst.delta1)?;
        burst.delta2 = stats.normalize_delta(burst.delta2)?;
    }
    dataset.normalized = true;
    dataset.norm = Some(stats);
    Ok(())
}

/// Inverse of `normalize_dataset`.
pub fn denormalize_dataset(dataset: &mut BurstDataset) -> Result<()> {
    if !dataset.normalized {
        return Err(Error::Config("dataset is not normalized".into()));
    }
    let stats = dataset
        .norm
        .clone()
        .ok_or_else(|| Error::Format("normalized dataset lacks its statistics".into()))?;
    for burst in &mut dataset.bursts {
        burst.u0 = stats.denormalize_state(&burst.u0)?;
        burst.u1 = stats.denormalize_state(&burst.u1)?;
        burst.u2 = stats.denormalize_state(&burst.u2)?;
        burst.delta1 = stats.denormalize_delta(burst.delta1);
        burst.delta2 = stats.denormalize_delta(burst.delta2);
    }
    dataset.normalized = false;
    Ok(())
}

/// Splits `0..n` into training and validation index sets. With `dynamic` the
/// membership is resampled every epoch; otherwise epoch 0 fixes membership
/// and later epochs only reshuffle the training order.
pub fn split_indices(
    n: usize,
    val_fraction: f64,
    split_seed: u64,
    epoch: u64,
    dynamic: bool,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!(
            "validation fraction must lie in [0, 1), got {val_fraction}"
        )));
    }
    if n == 0 {
        return Err(Error::Empty("cannot split zero items".into()));
    }
    let membership_epoch = if dynamic { epoch } else { 0 };
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(split_seed, membership_epoch, 2);
    shuffle(&mut indices, &mut rng);
    let mut n_val = (n as f64 * val_fraction).round() as usize;
    if n_val >= n {
        n_val = n - 1;
    }
    let val: Vec<usize> = indices[..n_val].to_vec();
    let mut train: Vec<usize> = indices[n_val..].to_vec();
    if !dynamic && epoch > 0 {
        let mut order_rng = stream_rng(split_seed, epoch, 3);
        shuffle(&mut train, &mut order_rng);
    }
    Ok((train, val))
}

/// Fisher-Yates with our own index arithmetic so the permutation is pinned to
/// this code rather than a library's shuffle implementation details.
fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// du1 = u1 - 4 u2 + 3, du2 = 4 u1 - 7 u2 + 3. The coefficient matrix has
    /// the double eigenvalue -3 and the flow is known in closed form.
    fn linear_system() -> OdeSystem {
        let domain = Domain::new_box(vec![[0.0, 2.0], [0.0, 2.0]]).unwrap();
        OdeSystem::new(
            "linear",
            2,
            domain,
            |u, out| {
                out[0] = u[0] - 4.0 * u[1] + 3.0;
                out[1] = 4.0 * u[0] - 7.0 * u[1] + 3.0;
            },
            |_, out| {
                out.set(0, 0, 1.0);
                out.set(0, 1, -4.0);
                out.set(1, 0, 4.0);
                out.set(1, 1, -7.0);
            },
        )
        .unwrap()
    }

    fn linear_exact(u0: &[f64], t: f64) -> Vec<f64> {
        // exp(At) = e^{-3t} (I + t(A + 3I)) for the double eigenvalue -3;
        // u(t) = u* + exp(At)(u0 - u*) with fixed point u* = (1, 1).
        let decay = (-3.0 * t).exp();
        let d = [u0[0] - 1.0, u0[1] - 1.0];
        let e00 = decay * (1.0 + 4.0 * t);
        let e01 = decay * (-4.0 * t);
        let e10 = decay * (4.0 * t);
        let e11 = decay * (1.0 - 4.0 * t);
        vec![1.0 + e00 * d[0] + e01 * d[1], 1.0 + e10 * d[0] + e11 * d[1]]
    }

    #[test]
    fn rk4_matches_exact_linear_flow() {
        let sys = linear_system();
        let got = rk4_evolve(&sys, &[2.0, 1.0], 1.0, 1e-3).unwrap();
        // Frozen closed-form values.
        assert!((got[0] - 1.24893534183931971).abs() <= 1e-10, "{}", got[0]);
        assert!((got[1] - 1.19914827347145577).abs() <= 1e-10, "{}", got[1]);
    }

    #[test]
    fn rk4_error_shrinks_at_fourth_order() {
        let sys = linear_system();
        let exact = linear_exact(&[2.0, 1.0], 1.0);
        let err = |dt: f64| {
            let got = rk4_evolve(&sys, &[2.0, 1.0], 1.0, dt).unwrap();
            linalg::norm2(&linalg::sub(&got, &exact))
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!(ratio >= 12.0, "observed order ratio {ratio}");
    }

    #[test]
    fn rk4_at_fixed_point_is_exact() {
        let sys = linear_system();
        let got = rk4_evolve(&sys, &[1.0, 1.0], 0.5, 1e-2).unwrap();
        assert_eq!(got, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_horizon_returns_input() {
        let sys = linear_system();
        assert_eq!(evolve(&sys, &[1.7, 0.3], 0.0, &Integrator::Rk4 { dt: 0.1 }).unwrap(), vec![1.7, 0.3]);
        assert!(evolve(&sys, &[1.0, 1.0], -0.1, &Integrator::Rk4 { dt: 0.1 }).is_err());
    }

    #[test]
    fn blowup_is_reported_as_non_finite() {
        let domain = Domain::new_box(vec![[0.5, 1.5]]).unwrap();
        let sys = OdeSystem::new(
            "quadratic-blowup",
            1,
            domain,
            |u, out| out[0] = u[0] * u[0],
            |u, out| out.set(0, 0, 2.0 * u[0]),
        )
        .unwrap();
        let err = rk4_evolve(&sys, &[1.0], 2.0, 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err:?}");
    }

    #[test]
    fn stiff_integrator_hits_scalar_decay() {
        let domain = Domain::new_box(vec![[0.0, 1.0]]).unwrap();
        let sys = OdeSystem::new(
            "decay",
            1,
            domain,
            |u, out| out[0] = -1000.0 * u[0],
            |_, out| out.set(0, 0, -1000.0),
        )
        .unwrap();
        // Frozen: e^{-10} after a horizon of 10 decay times.
        let tol = 1e-8;
        let got = stiff_evolve(&sys, &[1.0], 0.01, tol).unwrap();
        assert!((got[0] - 4.53999297624848515e-5).abs() <= tol * 10.0, "{}", got[0]);
    }

    #[test]
    fn implicit_steps_preserve_linear_invariants() {
        // du1 = -5 u1, du2 = 5 u1: the sum is conserved, and the implicit
        // update inherits that up to the Newton solve tolerance.
        let domain = Domain::new_box(vec![[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let sys = OdeSystem::new(
            "transfer",
            2,
            domain,
            |u, out| {
                out[0] = -5.0 * u[0];
                out[1] = 5.0 * u[0];
            },
            |_, out| {
                out.set(0, 0, -5.0);
                out.set(0, 1, 0.0);
                out.set(1, 0, 5.0);
                out.set(1, 1, 0.0);
            },
        )
        .unwrap();
        let got = stiff_evolve(&sys, &[1.0, 0.0], 3.0, 1e-8).unwrap();
        assert!((got[0] + got[1] - 1.0).abs() <= 1e-10, "sum {}", got[0] + got[1]);
    }

    #[test]
    fn bursts_are_deterministic_and_chain_consistently() {
        let sys = linear_system();
        let sampling = DeltaSampling::Uniform { min: 0.05, max: 0.15 };
        let integ = Integrator::Rk4 { dt: 1e-3 };
        let a = make_bursts(&sys, &integ, &sampling, 12, 99).unwrap();
        let b = make_bursts(&sys, &integ, &sampling, 12, 99).unwrap();
        assert_eq!(a, b);
        let c = make_bursts(&sys, &integ, &sampling, 12, 100).unwrap();
        assert_ne!(a, c);
        for burst in &a.bursts {
            assert!(sys.domain.contains(&burst.u0));
            assert!((0.05..=0.15).contains(&burst.delta1));
            // One long jump equals the chained short jumps up to solver error.
            let long = rk4_evolve(&sys, &burst.u0, burst.delta1 + burst.delta2, 1e-3).unwrap();
            let gap = linalg::norm2(&linalg::sub(&long, &burst.u2));
            assert!(gap <= 1e-9, "semigroup gap {gap}");
        }
    }

    #[test]
    fn log_uniform_lags_cover_their_decades() {
        let sampling = DeltaSampling::LogUniform { log10_min: -4.9, log10_max: 0.1 };
        let [lo, hi] = sampling.range();
        assert_relative_eq!(lo, 10f64.powf(-4.9));
        assert_relative_eq!(hi, 10f64.powf(0.1));
        let mut rng = stream_rng(5, 0, 0);
        let draws: Vec<f64> = (0..1000).map(|_| sampling.sample(&mut rng)).collect();
        assert!(draws.iter().all(|d| (lo..=hi).contains(d)));
        let mean_log = draws.iter().map(|d| d.log10()).sum::<f64>() / 1000.0;
        let se = 5.0 / 12f64.sqrt() / 1000f64.sqrt();
        assert!((mean_log + 2.4).abs() <= 3.0 * se, "mean log10 {mean_log}");
    }

    #[test]
    fn noise_has_expected_spread_and_guards() {
        let sys = linear_system();
        let sampling = DeltaSampling::Uniform { min: 0.05, max: 0.15 };
        let integ = Integrator::Rk4 { dt: 1e-3 };
        let clean = make_bursts(&sys, &integ, &sampling, 200, 7).unwrap();
        let mut noisy = clean.clone();
        add_noise(&mut noisy, 0.1, 7).unwrap();
        let mut ratios = Vec::new();
        for (cb, nb) in clean.bursts.iter().zip(&noisy.bursts) {
            for (cu, nu) in [(&cb.u0, &nb.u0), (&cb.u1, &nb.u1), (&cb.u2, &nb.u2)] {
                for (c, n) in cu.iter().zip(nu.iter()) {
                    if c.abs() > 1e-9 {
                        ratios.push(n / c - 1.0);
                    }
                }
            }
            assert_eq!(cb.delta1, nb.delta1);
        }
        let m = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / m;
        let se = 0.1 / 12f64.sqrt() / m.sqrt() * 2.0; // sd of U[-eta, eta] = eta/sqrt(3)
        assert!(mean.abs() <= 3.0 * se, "noise mean {mean}");
        assert!(ratios.iter().all(|r| r.abs() <= 0.1 + 1e-12));
        assert!(add_noise(&mut noisy, 0.1, 8).is_err(), "double application must fail");
        let mut normalized = clean.clone();
        normalize_dataset(&mut normalized).unwrap();
        assert!(add_noise(&mut normalized, 0.1, 8).is_err());
    }

    #[test]
    fn normalization_round_trips_and_bounds_channels() {
        let sys = linear_system();
        let sampling = DeltaSampling::Uniform { min: 0.05, max: 0.15 };
        let original = make_bursts(&sys, &Integrator::Rk4 { dt: 1e-3 }, &sampling, 50, 3).unwrap();
        let mut ds = original.clone();
        normalize_dataset(&mut ds).unwrap();
        assert!(ds.normalized);
        for b in &ds.bursts {
            for x in b.u0.iter().chain(&b.u1).chain(&b.u2) {
                assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(x));
            }
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&b.delta1));
        }
        assert!(normalize_dataset(&mut ds).is_err(), "double normalization must fail");
        denormalize_dataset(&mut ds).unwrap();
        for (a, b) in original.bursts.iter().zip(&ds.bursts) {
            for (x, y) in a.u0.iter().zip(&b.u0) {
                assert_relative_eq!(x, y, max_relative = 1e-12, epsilon = 1e-12);
            }
            assert_relative_eq!(a.delta1, b.delta1, max_relative = 1e-12);
            assert_relative_eq!(a.delta2, b.delta2, max_relative = 1e-12);
        }
    }

    #[test]
    fn degenerate_channel_maps_to_zero_and_back() {
        let stats = ChannelStats { min: 2.5, max: 2.5, degenerate: true };
        assert_eq!(stats.forward(2.5), 0.0);
        assert_eq!(stats.inverse(0.0), 2.5);
        let fitted = ChannelStats::fit([1.0, 1.0, 1.0].into_iter()).unwrap();
        assert!(fitted.degenerate);
    }

    #[test]
    fn lag_feature_map_matches_channel_map() {
        let sys = linear_system();
        let sampling = DeltaSampling::Uniform { min: 0.05, max: 0.15 };
        let mut ds = make_bursts(&sys, &Integrator::Rk4 { dt: 1e-3 }, &sampling, 50, 3).unwrap();
        normalize_dataset(&mut ds).unwrap();
        let stats = ds.norm.as_ref().unwrap();
        let fmap = stats.delta_feature_map();
        for d in [0.05, 0.0821, 0.15] {
            let via_channel = stats.normalize_delta(d).unwrap();
            let via_map = fmap.apply(stats.repr.apply(d).unwrap());
            assert_relative_eq!(via_channel, via_map, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_lag_round_trip_through_repr() {
        let repr = DeltaRepr::NegLog10;
        for d in [1e-5, 3.2e-3, 0.9, 12.0] {
            let r = repr.apply(d).unwrap();
            assert_relative_eq!(repr.invert(r), d, max_relative = 1e-12);
        }
        assert!(repr.apply(0.0).is_err());
        assert!(repr.apply(-0.5).is_err());
    }

    #[test]
    fn splits_partition_and_respect_mode() {
        for (n, frac) in [(10usize, 0.1), (37, 0.25), (100, 0.1), (3, 0.5)] {
            for epoch in [0u64, 5] {
                for dynamic in [false, true] {
                    let (train, val) = split_indices(n, frac, 42, epoch, dynamic).unwrap();
                    let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
                    all.sort_unstable();
                    assert_eq!(all, (0..n).collect::<Vec<_>>(), "n={n} frac={frac}");
                    assert!(!train.is_empty());
                }
            }
        }
        // Static mode: membership identical across epochs, order reshuffled.
        let (t0, v0) = split_indices(100, 0.1, 7, 0, false).unwrap();
        let (t5, v5) = split_indices(100, 0.1, 7, 5, false).unwrap();
        assert_eq!(v0, v5);
        let mut s0 = t0.clone();
        let mut s5 = t5.clone();
        s0.sort_unstable();
        s5.sort_unstable();
        assert_eq!(s0, s5);
        assert_ne!(t0, t5, "epochs should reshuffle the training order");
        // Dynamic mode: membership moves between epochs.
        let (_, dv0) = split_indices(100, 0.1, 7, 0, true).unwrap();
        let (_, dv5) = split_indices(100, 0.1, 7, 5, true).unwrap();
        assert_ne!(dv0, dv5);
        assert_eq!(dv0, v0, "epoch 0 membership agrees across modes");
    }

    #[test]
    fn rejection_domain_and_custom_sampler() {
        let disc = Domain::new_box(vec![[-1.0, 1.0], [-1.0, 1.0]])
            .unwrap()
            .with_predicate(|u| u[0] * u[0] + u[1] * u[1] <= 1.0);
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..200 {
            let u = disc.sample(&mut rng).unwrap();
            assert!(u[0] * u[0] + u[1] * u[1] <= 1.0);
            assert!(disc.contains(&u));
        }
        assert!(!disc.contains(&[0.99, 0.99]));

        let simplex = Domain::new_box(vec![[0.0, 1.0], [0.0, 1.0]])
            .unwrap()
            .with_sampler(|rng| {
                let a = rng.gen_range(0.0..=0.5);
                vec![a, 1.0 - a]
            });
        let u = simplex.sample(&mut rng).unwrap();
        assert_eq!(u[0] + u[1], 1.0);
    }
}
