//! Prediction rollouts, accuracy/robustness metrics, semigroup-residual
//! diagnostics, and numeric checks of the operator-approximation bounds.
//!
//! Everything that rolls a state forward is generic over a stepper closure
//! `(normalized state, physical lag) -> next normalized state`, so the same
//! metrics run on a trained network, a random network, or the reference flow
//! map substituted as the predictor.

use crate::dynamics::{stream_rng, NormStats};
use crate::error::{Error, Result};
use crate::linalg;
use crate::loss::metric;
use crate::loss::MetricKind;
use crate::net::{osg_forward_mapped, OsgNet};
use crate::storage;
use rand::Rng;
use rayon::prelude::*;
use std::path::Path;

/// A predicted trajectory in physical units. `truncated` marks divergence:
/// the rollout stops at the last finite state instead of failing.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub deltas: Vec<f64>,
    pub truncated: bool,
}

/// Positive steps summing to a fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub steps: Vec<f64>,
}

impl Partition {
    pub fn horizon(&self) -> f64 {
        self.steps.iter().sum()
    }
}

/// Inputs to the a-priori error bound: a Lipschitz estimate for the exact
/// time-stepper family and a sampled sup-norm estimate of the network's
/// deviation from it. The bound is only as good as these estimates — reports
/// must label it a sampled-domain bound, not a guarantee.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremContext {
    pub lipschitz: f64,
    pub sup_error: f64,
    /// Human-readable description of the sampled region.
    pub domain: String,
}

impl TheoremContext {
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz.is_finite() && self.lipschitz >= 0.0) {
            return Err(Error::Config(format!(
                "Lipschitz estimate must be finite and >= 0, got {}",
                self.lipschitz
            )));
        }
        if !(self.sup_error.is_finite() && self.sup_error >= 0.0) {
            return Err(Error::Config(format!(
                "sup-error estimate must be finite and >= 0, got {}",
                self.sup_error
            )));
        }
        Ok(())
    }
}

/// Stepper over a trained network: consumes and produces normalized states,
/// takes physical lags (the stored feature map does the channel scaling).
pub fn net_stepper<'a>(
    net: &'a OsgNet,
    norm: &NormStats,
) -> impl Fn(&[f64], f64) -> Result<Vec<f64>> + Sync + 'a {
    let fmap = norm.delta_feature_map();
    move |u, d| Ok(osg_forward_mapped(net, u, d, &fmap)?.0)
}

/// Stepper that wraps a physical-coordinate flow map (e.g. the reference
/// integrator) so it can stand in for a network inside any metric.
pub fn oracle_stepper<'a, F>(
    flow: F,
    norm: &'a NormStats,
) -> impl Fn(&[f64], f64) -> Result<Vec<f64>> + Sync + 'a
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync + 'a,
{
    move |u_norm, d| {
        let u = norm.denormalize_state(u_norm)?;
        let v = flow(&u, d)?;
        norm.normalize_state(&v)
    }
}

/// One stepper application with divergence folded into `None`. Errors other
/// than non-finite values propagate (they indicate misuse, not divergence).
fn try_step<F>(step: &F, u: &[f64], delta: f64) -> Result<Option<Vec<f64>>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    match step(u, delta) {
        Ok(v) if linalg::all_finite(&v) => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(Error::NonFinite(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Normalized end state after composing `steps`, or None when any step
/// diverges.
fn end_state_norm<F>(step: &F, u0_norm: &[f64], steps: &[f64]) -> Result<Option<Vec<f64>>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    let mut u = u0_norm.to_vec();
    for &d in steps {
        match try_step(step, &u, d)? {
            Some(v) => u = v,
            None => return Ok(None),
        }
    }
    Ok(Some(u))
}

/// Recursive prediction from a physical initial state: normalize, apply the
/// stepper, denormalize, repeat — the carried state is the physical one, so a
/// multi-step rollout is bitwise identical to feeding single-step rollouts
/// into each other. Divergence truncates the rollout and sets the marker; it
/// is not an error.
pub fn predict_with<F>(
    step: &F,
    norm: &NormStats,
    u0: &[f64],
    deltas: &[f64],
) -> Result<Rollout>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    let mut u = u0.to_vec();
    let mut times = vec![0.0];
    let mut states = vec![u0.to_vec()];
    let mut used = Vec::with_capacity(deltas.len());
    let mut truncated = false;
    let mut t = 0.0;
    for &d in deltas {
        let next = try_step(step, &norm.normalize_state(&u)?, d)?;
        let Some(v) = next else {
            truncated = true;
            break;
        };
        let phys = norm.denormalize_state(&v)?;
        if !linalg::all_finite(&phys) {
            truncated = true;
            break;
        }
        t += d;
        times.push(t);
        states.push(phys.clone());
        used.push(d);
        u = phys;
    }
    Ok(Rollout { times, states, deltas: used, truncated })
}

/// `predict_with` over a trained network.
pub fn predict(net: &OsgNet, norm: &NormStats, u0: &[f64], deltas: &[f64]) -> Result<Rollout> {
    predict_with(&net_stepper(net, norm), norm, u0, deltas)
}

/// Reference data for the accuracy metrics: I initial states and their true
/// trajectories at the uniform times m*delta, m = 1..=M, all physical.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub initial_states: Vec<Vec<f64>>,
    pub reference: Vec<Vec<Vec<f64>>>,
    pub delta: f64,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.initial_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial_states.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.reference.first().map_or(0, |r| r.len())
    }
}

/// Chains the reference flow M times per initial state.
pub fn make_test_set<F>(
    flow: F,
    initial_states: Vec<Vec<f64>>,
    m: usize,
    delta: f64,
) -> Result<TestSet>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    if initial_states.is_empty() {
        return Err(Error::Empty("test set needs at least one trajectory".into()));
    }
    if m == 0 {
        return Err(Error::Config("test set needs at least one time step".into()));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidDelta { value: delta, reason: "test-set step must be positive".into() });
    }
    let reference: Vec<Vec<Vec<f64>>> = initial_states
        .par_iter()
        .map(|u0| {
            let mut u = u0.clone();
            let mut traj = Vec::with_capacity(m);
            for _ in 0..m {
                u = flow(&u, delta)?;
                traj.push(u.clone());
            }
            Ok(traj)
        })
        .collect::<Result<_>>()?;
    Ok(TestSet { initial_states, reference, delta })
}

/// Per-time mean relative l2 error and its time average, on physical
/// (non-normalized) data. Returns (curve over m = 1..=M, average).
pub fn mean_rel_error<F>(
    step: &F,
    norm: &NormStats,
    test: &TestSet,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    let m = test.steps();
    if m == 0 || test.is_empty() {
        return Err(Error::Empty("test set has no trajectories or no time steps".into()));
    }
    let per_traj: Vec<Vec<f64>> = test
        .initial_states
        .par_iter()
        .zip(&test.reference)
        .enumerate()
        .map(|(i, (u0, reference))| {
            if reference.len() != m {
                return Err(Error::Shape(format!(
                    "trajectory {i} has {} reference states, expected {m}",
                    reference.len()
                )));
            }
            let mut u = u0.clone();
            let mut errs = Vec::with_capacity(m);
            for (j, truth) in reference.iter().enumerate() {
                let t = test.delta * (j + 1) as f64;
                let Some(v) = try_step(step, &norm.normalize_state(&u)?, test.delta)? else {
                    return Err(Error::Numeric(format!(
                        "prediction diverged for trajectory {i} near time {t}"
                    )));
                };
                let phys = norm.denormalize_state(&v)?;
                let err = metric(truth, &phys, MetricKind::RelativeL2).map_err(|e| match e {
                    Error::Numeric(_) => Error::Numeric(format!(
                        "reference state of trajectory {i} at time {t} has zero norm"
                    )),
                    other => other,
                })?;
                errs.push(err);
                u = phys;
            }
            Ok(errs)
        })
        .collect::<Result<_>>()?;
    let count = per_traj.len() as f64;
    let curve: Vec<f64> =
        (0..m).map(|j| per_traj.iter().map(|e| e[j]).sum::<f64>() / count).collect();
    let avg = curve.iter().sum::<f64>() / m as f64;
    Ok((curve, avg))
}

/// Writes the error curve as CSV rows (time, rel_error).
pub fn write_curve_csv(path: impl AsRef<Path>, delta: f64, curve: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = curve
        .iter()
        .enumerate()
        .map(|(j, e)| vec![(delta * (j + 1) as f64).to_string(), e.to_string()])
        .collect();
    storage::write_csv(path, &["time", "rel_error"], &rows)
}

/// Draws K partitions of [0, t]: the step count is uniform over the range the
/// lag interval allows, steps are uniform in that interval, then rescaled so
/// they sum to t exactly (within rounding).
pub fn sample_partitions<R: Rng>(
    t: f64,
    delta_range: [f64; 2],
    k: usize,
    rng: &mut R,
) -> Result<Vec<Partition>> {
    let [lo, hi] = delta_range;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Config(format!("partition horizon must be positive, got {t}")));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Config(format!("bad lag range [{lo}, {hi}]")));
    }
    let min_count = (t / hi).ceil().max(1.0) as usize;
    let max_count = (t / lo).floor() as usize;
    if max_count < min_count {
        return Err(Error::Config(format!(
            "no step count fits horizon {t} with lags in [{lo}, {hi}]"
        )));
    }
    Ok((0..k)
        .map(|_| {
            let count = rng.gen_range(min_count..=max_count);
            let mut steps: Vec<f64> = (0..count).map(|_| rng.gen_range(lo..=hi)).collect();
            let total: f64 = steps.iter().sum();
            let scale = t / total;
            for s in &mut steps {
                *s *= scale;
            }
            Partition { steps }
        })
        .collect())
}

/// Robustness spread: for each trajectory, the end state is predicted under
/// every partition; sigma is the mean over trajectories of the per-trajectory
/// standard deviation of the end-time relative errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpread {
    pub sigma: f64,
    /// Rollouts that diverged (excluded from the statistics).
    pub divergent: usize,
}

fn population_std(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k).sqrt()
}

pub fn partition_std<F>(
    step: &F,
    norm: &NormStats,
    initial_states: &[Vec<f64>],
    reference_ends: &[Vec<f64>],
    partitions: &[Partition],
) -> Result<PartitionSpread>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    if initial_states.len() != reference_ends.len() {
        return Err(Error::Shape("one reference end state per trajectory required".into()));
    }
    if initial_states.is_empty() || partitions.is_empty() {
        return Err(Error::Empty("partition spread needs trajectories and partitions".into()));
    }
    let per_traj: Vec<(Vec<f64>, usize)> = initial_states
        .par_iter()
        .zip(reference_ends)
        .enumerate()
        .map(|(i, (u0, truth))| {
            let u0n = norm.normalize_state(u0)?;
            let mut errs = Vec::with_capacity(partitions.len());
            let mut diverged = 0usize;
            for p in partitions {
                match end_state_norm(step, &u0n, &p.steps)? {
                    None => diverged += 1,
                    Some(v) => {
                        let phys = norm.denormalize_state(&v)?;
                        let err =
                            metric(truth, &phys, MetricKind::RelativeL2).map_err(|e| match e {
                                Error::Numeric(_) => Error::Numeric(format!(
                                    "reference end state of trajectory {i} has zero norm"
                                )),
                                other => other,
                            })?;
                        errs.push(err);
                    }
                }
            }
            Ok((errs, diverged))
        })
        .collect::<Result<_>>()?;
    let divergent: usize = per_traj.iter().map(|(_, d)| d).sum();
    let stds: Vec<f64> =
        per_traj.iter().filter(|(e, _)| e.len() >= 2).map(|(e, _)| population_std(e)).collect();
    if stds.is_empty() {
        return Err(Error::Numeric(
            "every trajectory had fewer than two convergent partitions".into(),
        ));
    }
    let sigma = stds.iter().sum::<f64>() / stds.len() as f64;
    Ok(PartitionSpread { sigma, divergent })
}

/// Max pairwise l2 discrepancy, in normalized coordinates, between composed
/// rollouts of the same probe state under different partitions of the same
/// horizon. A perfect one-parameter semigroup gives 0 for every partition
/// pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub epsilon: f64,
    pub divergent: usize,
}

pub fn semigroup_residual<F>(
    step: &F,
    norm: &NormStats,
    probe_states: &[Vec<f64>],
    partitions: &[Partition],
) -> Result<ResidualReport>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    if probe_states.is_empty() || partitions.is_empty() {
        return Err(Error::Empty("semigroup residual needs probes and partitions".into()));
    }
    let per_probe: Vec<(f64, usize)> = probe_states
        .par_iter()
        .map(|u0| {
            let u0n = norm.normalize_state(u0)?;
            let mut ends = Vec::with_capacity(partitions.len());
            let mut diverged = 0usize;
            for p in partitions {
                match end_state_norm(step, &u0n, &p.steps)? {
                    None => diverged += 1,
                    Some(v) => ends.push(v),
                }
            }
            let mut worst = 0.0f64;
            for a in 0..ends.len() {
                for b in a + 1..ends.len() {
                    worst = worst.max(linalg::norm2(&linalg::sub(&ends[a], &ends[b])));
                }
            }
            Ok((worst, diverged))
        })
        .collect::<Result<_>>()?;
    let epsilon = per_probe.iter().map(|(w, _)| *w).fold(0.0, f64::max);
    let divergent = per_probe.iter().map(|(_, d)| d).sum();
    Ok(ResidualReport { epsilon, divergent })
}

/// Machine-checked instance of the partition-spread bound: for each probe,
/// the standard deviation (across partitions) of the absolute l2 end-time
/// errors is at most (K-1)/K times the max pairwise discrepancy of the same
/// rollouts. Everything is measured in physical coordinates so both sides
/// share units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Report {
    pub sigma_max: f64,
    pub epsilon_max: f64,
    pub bound: f64,
    /// min over probes of (per-probe bound - per-probe sigma); the inequality
    /// holds when this is not materially negative.
    pub min_slack: f64,
    pub holds: bool,
    pub divergent: usize,
}

pub fn theorem2_check<F>(
    step: &F,
    norm: &NormStats,
    probe_states: &[Vec<f64>],
    anchor_ends: &[Vec<f64>],
    partitions: &[Partition],
) -> Result<Theorem2Report>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    if probe_states.len() != anchor_ends.len() {
        return Err(Error::Shape("one anchor end state per probe required".into()));
    }
    if probe_states.is_empty() || partitions.len() < 2 {
        return Err(Error::Empty("bound check needs probes and at least two partitions".into()));
    }
    const TOL: f64 = 1e-12;
    let per_probe: Vec<Option<(f64, f64, f64)>> = probe_states
        .par_iter()
        .zip(anchor_ends)
        .map(|(u0, anchor)| {
            let u0n = norm.normalize_state(u0)?;
            let mut ends = Vec::with_capacity(partitions.len());
            for p in partitions {
                if let Some(v) = end_state_norm(step, &u0n, &p.steps)? {
                    ends.push(norm.denormalize_state(&v)?);
                }
            }
            if ends.len() < 2 {
                return Ok(None);
            }
            let errs: Vec<f64> =
                ends.iter().map(|v| linalg::norm2(&linalg::sub(v, anchor))).collect();
            let sigma = population_std(&errs);
            let mut eps = 0.0f64;
            for a in 0..ends.len() {
                for b in a + 1..ends.len() {
                    eps = eps.max(linalg::norm2(&linalg::sub(&ends[a], &ends[b])));
                }
            }
            let kk = ends.len() as f64;
            let bound = (kk - 1.0) / kk * eps;
            Ok(Some((sigma, eps, bound - sigma)))
        })
        .collect::<Result<_>>()?;
    let divergent = per_probe.iter().filter(|r| r.is_none()).count();
    let valid: Vec<&(f64, f64, f64)> = per_probe.iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::Numeric("every probe diverged under the partitions".into()));
    }
    let sigma_max = valid.iter().map(|(s, _, _)| *s).fold(0.0, f64::max);
    let epsilon_max = valid.iter().map(|(_, e, _)| *e).fold(0.0, f64::max);
    let min_slack = valid.iter().map(|(_, _, sl)| *sl).fold(f64::INFINITY, f64::min);
    let kk = partitions.len() as f64;
    Ok(Theorem2Report {
        sigma_max,
        epsilon_max,
        bound: (kk - 1.0) / kk * epsilon_max,
        min_slack,
        holds: min_slack >= -TOL,
        divergent,
    })
}

/// A-priori accumulated-error bound for j uniform steps of size delta:
/// sup_error * delta * (1 - e^{L j delta}) / (1 - e^{L delta}), with the
/// L -> 0 limit j * delta * sup_error.
pub fn theorem1_bound(ctx: &TheoremContext, delta: f64, j: usize) -> Result<f64> {
    ctx.validate()?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidDelta { value: delta, reason: "bound step must be positive".into() });
    }
    if j == 0 {
        return Ok(0.0);
    }
    let l = ctx.lipschitz;
    if l == 0.0 {
        return Ok(ctx.sup_error * delta * j as f64);
    }
    // exp_m1 keeps the ratio accurate when L*delta is tiny.
    let num = (l * delta * j as f64).exp_m1();
    let den = (l * delta).exp_m1();
    Ok(ctx.sup_error * delta * num / den)
}

/// Non-uniform form of the same bound: sup_error * sum_s delta_s *
/// e^{L (t_j - t_s)} with t_s the partial sums of the steps.
pub fn theorem1_bound_general(ctx: &TheoremContext, deltas: &[f64]) -> Result<f64> {
    ctx.validate()?;
    let t_end: f64 = deltas.iter().sum();
    let mut t_s = 0.0;
    let mut acc = 0.0;
    for &d in deltas {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidDelta { value: d, reason: "bound steps must be positive".into() });
        }
        t_s += d;
        acc += d * (ctx.lipschitz * (t_end - t_s)).exp();
    }
    Ok(ctx.sup_error * acc)
}

/// Sampled sup-norm estimate of the gap between the network's learned
/// time-stepper family and the exact one, over random (state, lag) draws:
/// max ||(F_net(u,d) - u)/d - (flow(u,d) - u)/d||_2. A sampled lower estimate
/// of the true sup, suitable only for a sampled-domain bound.
pub fn estimate_sup_error<F, G>(
    step: &F,
    flow: G,
    norm: &NormStats,
    bounds: &[[f64; 2]],
    delta_range: [f64; 2],
    count: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
    G: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    if count == 0 {
        return Err(Error::Empty("sup-error estimate needs at least one sample".into()));
    }
    let [lo, hi] = delta_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Config(format!("bad lag range [{lo}, {hi}]")));
    }
    let mut rng = stream_rng(seed, 0, 6);
    let samples: Vec<(Vec<f64>, f64)> = (0..count)
        .map(|_| {
            let u: Vec<f64> = bounds.iter().map(|b| rng.gen_range(b[0]..=b[1])).collect();
            let d = rng.gen_range(lo..=hi);
            (u, d)
        })
        .collect();
    let worst = samples
        .par_iter()
        .map(|(u, d)| {
            let un = norm.normalize_state(u)?;
            let vn = step(&un, *d)?;
            let v_net = norm.denormalize_state(&vn)?;
            let v_true = flow(u, *d)?;
            let gap: Vec<f64> = v_net
                .iter()
                .zip(&v_true)
                .map(|(a, b)| (a - b) / d)
                .collect();
            Ok(linalg::norm2(&gap))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Verifies the one-step Lipschitz property of the exact stepper family
/// phi(u, d) = (flow(u, d) - u)/d on random pairs:
/// ||phi(u1,d) - phi(u2,d)|| <= ((e^{L d} - 1)/d) ||u1 - u2||.
/// Returns the maximum relative violation (0 when the bound always holds).
pub fn lemma1_check<F>(
    flow: F,
    lipschitz: f64,
    bounds: &[[f64; 2]],
    delta: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    if pairs == 0 {
        return Err(Error::Empty("Lipschitz check needs at least one pair".into()));
    }
    if !(lipschitz.is_finite() && lipschitz > 0.0) {
        return Err(Error::Config(format!(
            "Lipschitz constant must be finite and positive, got {lipschitz}"
        )));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidDelta { value: delta, reason: "check lag must be positive".into() });
    }
    let mut rng = stream_rng(seed, 0, 7);
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
        .map(|_| {
            let mut one = || -> Vec<f64> {
                bounds.iter().map(|b| rng.gen_range(b[0]..=b[1])).collect()
            };
            (one(), one())
        })
        .collect();
    let rate = ((lipschitz * delta).exp() - 1.0) / delta;
    let worst = draws
        .par_iter()
        .map(|(u1, u2)| {
            let sep = linalg::norm2(&linalg::sub(u1, u2));
            if sep == 0.0 {
                return Ok(0.0);
            }
            let v1 = flow(u1, delta)?;
            let v2 = flow(u2, delta)?;
            let phi_gap: Vec<f64> = v1
                .iter()
                .zip(&v2)
                .zip(u1.iter().zip(u2))
                .map(|((a, b), (x, y))| ((a - x) - (b - y)) / delta)
                .collect();
            let lhs = linalg::norm2(&phi_gap);
            let rhs = rate * sep;
            Ok((lhs / rhs - 1.0).max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst)
}
