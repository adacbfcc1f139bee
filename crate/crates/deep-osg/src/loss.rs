//! Training objectives over two-lag bursts {u0, d1, u1, d2, u2}.
//!
//! Three objectives are provided. The plain data-fitting loss checks the two
//! observed transitions. The trajectory-consistency loss adds compositions
//! that must also land on the observed states. The semigroup-regularized loss
//! augments data fitting with a penalty on the defect between one long step
//! and the two orders of composing short steps, evaluated at freshly sampled
//! probe states, which enforces the semigroup law away from the data.
//!
//! Every objective returns its value together with parameter gradients shaped
//! like `net.stored_blocks()`. Gradients flow through *all* network
//! applications, including both arguments of the defect terms.

use crate::error::{Error, Result};
use crate::linalg;
use crate::net::{osg_backprop, osg_forward_mapped, DeltaFeatureMap, OsgNet, OsgTape};
use crate::mlp::MlpParams;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// ||u - v||_2^2.
    L2Squared,
    /// ||u - v||_2 / ||u||_2, with u the reference argument.
    RelativeL2,
}

/// Pointwise discrepancy l(u, v). For the relative metric the first argument
/// is the reference whose norm scales the error.
pub fn metric(u: &[f64], v: &[f64], kind: MetricKind) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "metric arguments have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let diff = linalg::sub(u, v);
    match kind {
        MetricKind::L2Squared => Ok(linalg::dot(&diff, &diff)),
        MetricKind::RelativeL2 => {
            let nu = linalg::norm2(u);
            if nu == 0.0 {
                return Err(Error::Numeric("relative metric needs a nonzero reference".into()));
            }
            Ok(linalg::norm2(&diff) / nu)
        }
    }
}

/// Gradients of l(u, v) with respect to both arguments. At a zero difference
/// the relative metric is not differentiable; the subgradient 0 is returned.
fn metric_grads(u: &[f64], v: &[f64], kind: MetricKind) -> Result<(Vec<f64>, Vec<f64>)> {
    let diff = linalg::sub(u, v);
    match kind {
        MetricKind::L2Squared => {
            let du: Vec<f64> = diff.iter().map(|d| 2.0 * d).collect();
            let dv: Vec<f64> = diff.iter().map(|d| -2.0 * d).collect();
            Ok((du, dv))
        }
        MetricKind::RelativeL2 => {
            let nu = linalg::norm2(u);
            if nu == 0.0 {
                return Err(Error::Numeric("relative metric needs a nonzero reference".into()));
            }
            let nd = linalg::norm2(&diff);
            if nd == 0.0 {
                return Ok((vec![0.0; u.len()], vec![0.0; v.len()]));
            }
            let du: Vec<f64> = u
                .iter()
                .zip(&diff)
                .map(|(ui, di)| di / (nd * nu) - nd * ui / (nu * nu * nu))
                .collect();
            let dv: Vec<f64> = diff.iter().map(|di| -di / (nd * nu)).collect();
            Ok((du, dv))
        }
    }
}

/// Which objective drives training, with its knobs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LossSpec {
    Baseline { metric: MetricKind },
    Lisg { metric: MetricKind },
    Gdsg { metric: MetricKind, lambda: f64, q: usize },
}

impl LossSpec {
    pub fn metric(&self) -> MetricKind {
        match self {
            LossSpec::Baseline { metric }
            | LossSpec::Lisg { metric }
            | LossSpec::Gdsg { metric, .. } => *metric,
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            LossSpec::Baseline { .. } => "baseline",
            LossSpec::Lisg { .. } => "lisg",
            LossSpec::Gdsg { .. } => "gdsg",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossSpec::Gdsg { lambda, q, .. } = self {
            if !(lambda.is_finite() && *lambda >= 0.0) {
                return Err(Error::Config(format!(
                    "defect weight must be finite and >= 0, got {lambda}"
                )));
            }
            if *q == 0 {
                return Err(Error::Config("need at least one probe tuple per burst".into()));
            }
        }
        Ok(())
    }
}

/// One observed two-lag burst. States live in whatever coordinates the
/// network consumes (normalized during training); lags are physical.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
}

/// Probe tuple for the semigroup defect: a state and two lags, no data.
#[derive(Debug, Clone, PartialEq)]
pub struct SgTuple {
    pub u0: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
}

fn check_burst(net: &OsgNet, burst: &Burst) -> Result<()> {
    let n = net.state_dim();
    if burst.u0.len() != n || burst.u1.len() != n || burst.u2.len() != n {
        return Err(Error::Shape("burst state dimension differs from network".into()));
    }
    Ok(())
}

/// Accumulates weighted per-pass gradients into a stored-block-shaped sum.
struct GradSink<'a> {
    net: &'a OsgNet,
    fmap: DeltaFeatureMap,
    grads: Vec<MlpParams>,
}

impl<'a> GradSink<'a> {
    fn new(net: &'a OsgNet, fmap: &DeltaFeatureMap) -> Self {
        GradSink { net, fmap: *fmap, grads: net.zero_grads() }
    }

    fn forward(&self, u: &[f64], delta: f64) -> Result<(Vec<f64>, OsgTape)> {
        osg_forward_mapped(self.net, u, delta, &self.fmap)
    }

    /// Backprop `upstream` through a recorded pass, accumulating parameter
    /// gradients and returning the input-state gradient for chained passes.
    fn backward(&mut self, tape: &OsgTape, upstream: &[f64]) -> Result<Vec<f64>> {
        let (g, input_grad, _) = osg_backprop(self.net, tape, upstream)?;
        for (acc, gi) in self.grads.iter_mut().zip(&g) {
            acc.add_scaled(1.0, gi)?;
        }
        Ok(input_grad)
    }
}

fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{what} evaluated to {value}")))
    }
}

/// Plain data-fitting objective: (1/2)[l(u1, F(u0,d1)) + l(u2, F(u1,d2))].
pub fn baseline_loss(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    burst: &Burst,
    kind: MetricKind,
) -> Result<(f64, Vec<MlpParams>)> {
    check_burst(net, burst)?;
    let mut sink = GradSink::new(net, fmap);
    let (p01, t01) = sink.forward(&burst.u0, burst.delta1)?;
    let (p12, t12) = sink.forward(&burst.u1, burst.delta2)?;
    let l1 = metric(&burst.u1, &p01, kind)?;
    let l2 = metric(&burst.u2, &p12, kind)?;
    let value = ensure_finite(0.5 * (l1 + l2), "data loss")?;

    let (_, mut g1) = metric_grads(&burst.u1, &p01, kind)?;
    let (_, mut g2) = metric_grads(&burst.u2, &p12, kind)?;
    for g in &mut g1 {
        *g *= 0.5;
    }
    for g in &mut g2 {
        *g *= 0.5;
    }
    sink.backward(&t01, &g1)?;
    sink.backward(&t12, &g2)?;
    Ok((value, sink.grads))
}

/// Trajectory-consistency objective: the two data terms plus the long jump
/// F(u0,d1+d2) and both composition orders, all matched against u2, averaged
/// over the five terms.
pub fn lisg_loss(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    burst: &Burst,
    kind: MetricKind,
) -> Result<(f64, Vec<MlpParams>)> {
    check_burst(net, burst)?;
    let mut sink = GradSink::new(net, fmap);
    let (p01, t01) = sink.forward(&burst.u0, burst.delta1)?;
    let (p12, t12) = sink.forward(&burst.u1, burst.delta2)?;
    let (p02, t02) = sink.forward(&burst.u0, burst.delta1 + burst.delta2)?;
    let (p012, t012) = sink.forward(&p01, burst.delta2)?;
    let (q02, tq02) = sink.forward(&burst.u0, burst.delta2)?;
    let (p021, t021) = sink.forward(&q02, burst.delta1)?;

    let terms = [
        metric(&burst.u1, &p01, kind)?,
        metric(&burst.u2, &p12, kind)?,
        metric(&burst.u2, &p02, kind)?,
        metric(&burst.u2, &p012, kind)?,
        metric(&burst.u2, &p021, kind)?,
    ];
    let value = ensure_finite(terms.iter().sum::<f64>() / 5.0, "trajectory-consistency loss")?;

    let w = 1.0 / 5.0;
    let scale = |mut g: Vec<f64>| {
        for x in &mut g {
            *x *= w;
        }
        g
    };
    // Composed passes first so their input gradients can merge into the
    // upstreams of the passes they reuse.
    let (_, g012) = metric_grads(&burst.u2, &p012, kind)?;
    let into_p01 = sink.backward(&t012, &scale(g012))?;
    let (_, g021) = metric_grads(&burst.u2, &p021, kind)?;
    let into_q02 = sink.backward(&t021, &scale(g021))?;

    let (_, g01) = metric_grads(&burst.u1, &p01, kind)?;
    let mut up01 = scale(g01);
    linalg::axpy(1.0, &into_p01, &mut up01);
    sink.backward(&t01, &up01)?;

    let (_, g12) = metric_grads(&burst.u2, &p12, kind)?;
    sink.backward(&t12, &scale(g12))?;
    let (_, g02) = metric_grads(&burst.u2, &p02, kind)?;
    sink.backward(&t02, &scale(g02))?;
    sink.backward(&tq02, &into_q02)?;
    Ok((value, sink.grads))
}

/// Mean semigroup defect over probe tuples:
/// (1/2Q) sum_i [ l(F(u0,d1+d2), F(F(u0,d1),d2)) + l(F(u0,d1+d2), F(F(u0,d2),d1)) ].
/// Gradients flow through all three passages of every tuple.
pub fn semigroup_defect(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    tuples: &[SgTuple],
    kind: MetricKind,
) -> Result<(f64, Vec<MlpParams>)> {
    if tuples.is_empty() {
        return Err(Error::Empty("semigroup defect needs at least one probe tuple".into()));
    }
    let n = net.state_dim();
    let mut sink = GradSink::new(net, fmap);
    let mut total = 0.0;
    let w = 1.0 / (2.0 * tuples.len() as f64);
    for tuple in tuples {
        if tuple.u0.len() != n {
            return Err(Error::Shape("probe tuple dimension differs from network".into()));
        }
        let (long, t_long) = sink.forward(&tuple.u0, tuple.delta1 + tuple.delta2)?;
        let (mid12, t_mid12) = sink.forward(&tuple.u0, tuple.delta1)?;
        let (c12, t_c12) = sink.forward(&mid12, tuple.delta2)?;
        let (mid21, t_mid21) = sink.forward(&tuple.u0, tuple.delta2)?;
        let (c21, t_c21) = sink.forward(&mid21, tuple.delta1)?;

        total += metric(&long, &c12, kind)? + metric(&long, &c21, kind)?;

        let (d_long_a, d_c12) = metric_grads(&long, &c12, kind)?;
        let (d_long_b, d_c21) = metric_grads(&long, &c21, kind)?;
        // The long jump feeds both defect terms; backprop it once with the
        // merged upstream.
        let up_long: Vec<f64> = d_long_a.iter().zip(&d_long_b).map(|(a, b)| w * (a + b)).collect();
        let up_c12: Vec<f64> = d_c12.iter().map(|g| w * g).collect();
        let up_c21: Vec<f64> = d_c21.iter().map(|g| w * g).collect();

        let into_mid12 = sink.backward(&t_c12, &up_c12)?;
        sink.backward(&t_mid12, &into_mid12)?;
        let into_mid21 = sink.backward(&t_c21, &up_c21)?;
        sink.backward(&t_mid21, &into_mid21)?;
        sink.backward(&t_long, &up_long)?;
    }
    let value = ensure_finite(w * total, "semigroup defect")?;
    Ok((value, sink.grads))
}

/// Semigroup-regularized objective for one burst:
/// (L_data + lambda * L_defect) / (1 + lambda).
pub fn gdsg_loss(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    burst: &Burst,
    tuples: &[SgTuple],
    lambda: f64,
    kind: MetricKind,
) -> Result<(f64, Vec<MlpParams>)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("defect weight must be finite and >= 0, got {lambda}")));
    }
    let (data, mut grads) = baseline_loss(net, fmap, burst, kind)?;
    let (defect, defect_grads) = semigroup_defect(net, fmap, tuples, kind)?;
    let w = 1.0 / (1.0 + lambda);
    let value = ensure_finite(w * (data + lambda * defect), "semigroup-regularized loss")?;
    for (acc, g) in grads.iter_mut().zip(&defect_grads) {
        acc.scale(w);
        acc.add_scaled(w * lambda, g)?;
    }
    Ok((value, grads))
}

/// Draws probe tuples: states from the supplied sampler, lags uniform in
/// `delta_range` (both lags independently).
pub fn sample_sg_tuples<R: Rng>(
    mut state_sampler: impl FnMut(&mut R) -> Vec<f64>,
    delta_range: [f64; 2],
    count: usize,
    rng: &mut R,
) -> Result<Vec<SgTuple>> {
    if !(delta_range[0] > 0.0 && delta_range[1] >= delta_range[0]) {
        return Err(Error::Config(format!(
            "lag range [{}, {}] must be positive and ordered",
            delta_range[0], delta_range[1]
        )));
    }
    Ok((0..count)
        .map(|_| SgTuple {
            u0: state_sampler(rng),
            delta1: rng.gen_range(delta_range[0]..=delta_range[1]),
            delta2: rng.gen_range(delta_range[0]..=delta_range[1]),
        })
        .collect())
}

/// Uniform sampler over an axis-aligned box, the common probe-state choice.
pub fn box_sampler<R: Rng>(bounds: &[[f64; 2]]) -> impl FnMut(&mut R) -> Vec<f64> + '_ {
    move |rng: &mut R| bounds.iter().map(|b| rng.gen_range(b[0]..=b[1])).collect()
}

fn forward_value(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    u: &[f64],
    delta: f64,
) -> Result<Vec<f64>> {
    let (out, _) = osg_forward_mapped(net, u, delta, fmap)?;
    Ok(out)
}

/// Forward-only data term, identical in value to `baseline_loss` but without
/// gradient work — the cheap path for validation sweeps.
pub fn data_loss_value(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    burst: &Burst,
    kind: MetricKind,
) -> Result<f64> {
    check_burst(net, burst)?;
    let p01 = forward_value(net, fmap, &burst.u0, burst.delta1)?;
    let p12 = forward_value(net, fmap, &burst.u1, burst.delta2)?;
    ensure_finite(
        0.5 * (metric(&burst.u1, &p01, kind)? + metric(&burst.u2, &p12, kind)?),
        "data loss",
    )
}

/// Forward-only trajectory-consistency value, matching `lisg_loss`.
pub fn lisg_loss_value(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    burst: &Burst,
    kind: MetricKind,
) -> Result<f64> {
    check_burst(net, burst)?;
    let p01 = forward_value(net, fmap, &burst.u0, burst.delta1)?;
    let p12 = forward_value(net, fmap, &burst.u1, burst.delta2)?;
    let p02 = forward_value(net, fmap, &burst.u0, burst.delta1 + burst.delta2)?;
    let p012 = forward_value(net, fmap, &p01, burst.delta2)?;
    let q02 = forward_value(net, fmap, &burst.u0, burst.delta2)?;
    let p021 = forward_value(net, fmap, &q02, burst.delta1)?;
    let sum = metric(&burst.u1, &p01, kind)?
        + metric(&burst.u2, &p12, kind)?
        + metric(&burst.u2, &p02, kind)?
        + metric(&burst.u2, &p012, kind)?
        + metric(&burst.u2, &p021, kind)?;
    ensure_finite(sum / 5.0, "trajectory-consistency loss")
}

/// Forward-only mean semigroup defect over probe tuples, matching
/// `semigroup_defect`.
pub fn semigroup_defect_value(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    tuples: &[SgTuple],
    kind: MetricKind,
) -> Result<f64> {
    if tuples.is_empty() {
        return Err(Error::Empty("semigroup defect needs at least one probe tuple".into()));
    }
    let n = net.state_dim();
    let mut total = 0.0;
    for tuple in tuples {
        if tuple.u0.len() != n {
            return Err(Error::Shape("probe tuple dimension differs from network".into()));
        }
        let long = forward_value(net, fmap, &tuple.u0, tuple.delta1 + tuple.delta2)?;
        let mid12 = forward_value(net, fmap, &tuple.u0, tuple.delta1)?;
        let c12 = forward_value(net, fmap, &mid12, tuple.delta2)?;
        let mid21 = forward_value(net, fmap, &tuple.u0, tuple.delta2)?;
        let c21 = forward_value(net, fmap, &mid21, tuple.delta1)?;
        total += metric(&long, &c12, kind)? + metric(&long, &c21, kind)?;
    }
    ensure_finite(total / (2.0 * tuples.len() as f64), "semigroup defect")
}
