//! Mini-batch training loop: per-epoch validation splits, loss dispatch,
//! Adam with a cyclic learning rate, validation-gated snapshotting, and
//! periodic history recording.
//!
//! Every source of randomness is a named substream of two seeds (split_seed
//! for membership/order, tuple_seed for probe states), so a fixed config
//! reproduces training bit-for-bit regardless of thread count.

use crate::dynamics::{split_indices, stream_rng, BurstDataset, NormStats};
use crate::error::{Error, Result};
use crate::loss::{self, Burst, LossSpec, MetricKind, SgTuple};
use crate::mlp::MlpParams;
use crate::net::{DeltaFeatureMap, OsgNet};
use crate::optim::{AdamHyper, AdamState, CyclicLr};
use crate::storage;
use rayon::prelude::*;
use std::path::PathBuf;
use std::time::Instant;

/// Number of fixed probe tuples used for the history's semigroup-residual
/// column. The same tuples are used for every method, so residual curves of
/// different runs on the same dataset/seed are directly comparable.
pub const RESIDUAL_PROBES: usize = 32;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossSpec,
    pub lr: CyclicLr,
    /// Fraction of bursts withheld for validation each epoch.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Resample the validation membership every epoch (on) or fix it once and
    /// only reshuffle the training order (off).
    #[serde(default = "default_true")]
    pub dynamic_validation: bool,
    pub split_seed: u64,
    pub tuple_seed: u64,
    /// Evaluate validation (and consider snapshotting) every k mini-batches.
    #[serde(default = "default_one")]
    pub val_check_every: usize,
    /// History recording interval in epochs.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Where to persist the best snapshot once training finishes.
    #[serde(default)]
    pub checkpoint_path: Option<PathBuf>,
}

fn default_validation_fraction() -> f64 {
    0.10
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

fn default_record_every() -> usize {
    50
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("mini-batch size must be positive".into()));
        }
        if self.val_check_every == 0 {
            return Err(Error::Config("validation check interval must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("history recording interval must be positive".into()));
        }
        self.loss.validate()?;
        self.lr.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean semigroup defect on the fixed probe tuples (always the squared-L2
    /// metric, whatever the training objective).
    pub sg_residual: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation loss seen after any mini-batch.
    pub best_net: OsgNet,
    pub best_val: f64,
    pub history: Vec<HistoryRow>,
    pub seconds_per_epoch: f64,
}

pub fn write_history_csv(path: impl AsRef<std::path::Path>, history: &[HistoryRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.sg_residual.to_string(),
                r.lr.to_string(),
            ]
        })
        .collect();
    storage::write_csv(path, &["epoch", "train_loss", "val_loss", "sg_residual", "lr"], &rows)
}

/// Training views a normalized dataset as bursts whose states stay in network
/// coordinates while lags are physical (the lag feature map handles scaling).
fn working_bursts(ds: &BurstDataset, norm: &NormStats) -> Vec<Burst> {
    ds.bursts
        .iter()
        .map(|b| Burst {
            u0: b.u0.clone(),
            u1: b.u1.clone(),
            u2: b.u2.clone(),
            delta1: norm.denormalize_delta(b.delta1),
            delta2: norm.denormalize_delta(b.delta2),
        })
        .collect()
}

/// Fixed probe tuples for the residual column: states uniform over the
/// normalized image of the sampling box, lags uniform over the physical lag
/// range. The stream index u64::MAX cannot collide with any epoch stream.
pub fn residual_probes(ds: &BurstDataset, tuple_seed: u64) -> Result<Vec<SgTuple>> {
    let norm = require_norm(ds)?;
    let bounds = norm.normalized_bounds(&ds.domain_bounds)?;
    let mut rng = stream_rng(tuple_seed, u64::MAX, 0);
    loss::sample_sg_tuples(loss::box_sampler(&bounds), ds.delta_range, RESIDUAL_PROBES, &mut rng)
}

fn require_norm(ds: &BurstDataset) -> Result<&NormStats> {
    if !ds.normalized {
        return Err(Error::Config("trainer requires a normalized dataset".into()));
    }
    ds.norm
        .as_ref()
        .ok_or_else(|| Error::Format("normalized dataset lacks its statistics".into()))
}

/// Loss value + parameter gradients for one burst under the configured
/// objective. `tuples` is consulted only by the semigroup-regularized loss.
fn burst_loss_and_grads(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    burst: &Burst,
    spec: &LossSpec,
    tuples: &[SgTuple],
) -> Result<(f64, Vec<MlpParams>)> {
    match spec {
        LossSpec::Baseline { metric } => loss::baseline_loss(net, fmap, burst, *metric),
        LossSpec::Lisg { metric } => loss::lisg_loss(net, fmap, burst, *metric),
        LossSpec::Gdsg { metric, lambda, .. } => {
            loss::gdsg_loss(net, fmap, burst, tuples, *lambda, *metric)
        }
    }
}

/// Per-burst monitoring value: the objective itself, except that the
/// semigroup-regularized method is judged by its data term alone so that
/// validation numbers (and the snapshot criterion) are method-agnostic.
fn burst_monitor_value(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    burst: &Burst,
    spec: &LossSpec,
) -> Result<f64> {
    match spec {
        LossSpec::Baseline { metric } | LossSpec::Gdsg { metric, .. } => {
            loss::data_loss_value(net, fmap, burst, *metric)
        }
        LossSpec::Lisg { metric } => loss::lisg_loss_value(net, fmap, burst, *metric),
    }
}

/// Mean monitoring loss over a subset of bursts (training states, physical
/// lags). Used for validation; exposed so reports can recompute split losses.
pub fn subset_loss(
    net: &OsgNet,
    fmap: &DeltaFeatureMap,
    bursts: &[Burst],
    subset: &[usize],
    spec: &LossSpec,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Empty("loss over an empty burst subset".into()));
    }
    let mut total = 0.0;
    for &j in subset {
        let burst = bursts
            .get(j)
            .ok_or_else(|| Error::Shape(format!("burst index {j} out of range")))?;
        total += burst_monitor_value(net, fmap, burst, spec)?;
    }
    Ok(total / subset.len() as f64)
}

fn locate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(msg) => {
            Error::NonFinite(format!("epoch {epoch}, mini-batch {batch}: {msg}"))
        }
        other => other,
    }
}

/// Runs the full loop and returns the best validation-gated snapshot, never
/// the final parameters.
pub fn train(net: OsgNet, ds: &BurstDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let norm = require_norm(ds)?;
    let n_state = ds.state_dim()?;
    if n_state != net.state_dim() {
        return Err(Error::Shape(format!(
            "network has state dimension {}, dataset {}",
            net.state_dim(),
            n_state
        )));
    }
    let fmap = norm.delta_feature_map();
    let bursts = working_bursts(ds, norm);
    let probes = residual_probes(ds, cfg.tuple_seed)?;
    let tuple_bounds = norm.normalized_bounds(&ds.domain_bounds)?;
    let n = bursts.len();

    let (train0, val0) =
        split_indices(n, cfg.validation_fraction, cfg.split_seed, 0, cfg.dynamic_validation)?;
    if val0.is_empty() {
        return Err(Error::Config(
            "validation split is empty; raise validation_fraction or add bursts".into(),
        ));
    }
    if cfg.batch_size > train0.len() {
        return Err(Error::Config(format!(
            "mini-batch size {} exceeds the {}-burst training split",
            cfg.batch_size,
            train0.len()
        )));
    }

    let mut net = net;
    let mut adam = AdamState::new(net.stored_blocks(), AdamHyper::default());
    let mut best = net.clone();
    let mut best_val = subset_loss(&net, &fmap, &bursts, &val0, &cfg.loss)?;
    let mut history = Vec::new();
    let q = match cfg.loss {
        LossSpec::Gdsg { q, .. } => q,
        _ => 0,
    };
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        let (train_idx, val_idx) = split_indices(
            n,
            cfg.validation_fraction,
            cfg.split_seed,
            epoch as u64,
            cfg.dynamic_validation,
        )?;
        let mut epoch_loss_sum = 0.0;
        for (b, chunk) in train_idx.chunks(cfg.batch_size).enumerate() {
            let member_results: Vec<Result<(f64, Vec<MlpParams>)>> = chunk
                .par_iter()
                .map(|&j| {
                    let tuples = if q > 0 {
                        let mut rng = stream_rng(cfg.tuple_seed, epoch as u64, j as u64);
                        loss::sample_sg_tuples(
                            loss::box_sampler(&tuple_bounds),
                            ds.delta_range,
                            q,
                            &mut rng,
                        )?
                    } else {
                        Vec::new()
                    };
                    burst_loss_and_grads(&net, &fmap, &bursts[j], &cfg.loss, &tuples)
                })
                .collect();

            let mut value = 0.0;
            let mut grads: Option<Vec<MlpParams>> = None;
            for r in member_results {
                let (v, g) = r.map_err(|e| locate(e, epoch, b))?;
                value += v;
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, gi) in acc.iter_mut().zip(&g) {
                            a.add_scaled(1.0, gi)?;
                        }
                    }
                }
            }
            let m = chunk.len() as f64;
            value /= m;
            let mut grads = grads.expect("chunks are never empty");
            for g in &mut grads {
                g.scale(1.0 / m);
            }
            let lr = cfg.lr.lr_at(adam.steps_taken());
            adam.step(net.stored_blocks_mut(), &grads, lr)
                .map_err(|e| locate(e, epoch, b))?;
            epoch_loss_sum += value * m;

            // Count mini-batches globally: short epochs must not skip the
            // periodic check just because they hold fewer batches than the
            // period.
            if adam.steps_taken() % cfg.val_check_every as u64 == 0 {
                let val = subset_loss(&net, &fmap, &bursts, &val_idx, &cfg.loss)?;
                if val < best_val {
                    best_val = val;
                    best = net.clone();
                }
            }
        }

        if epoch % cfg.record_every == 0 || epoch + 1 == cfg.epochs {
            let train_loss = epoch_loss_sum / train_idx.len() as f64;
            let val_loss = subset_loss(&net, &fmap, &bursts, &val_idx, &cfg.loss)?;
            let sg_residual =
                loss::semigroup_defect_value(&net, &fmap, &probes, MetricKind::L2Squared)?;
            history.push(HistoryRow {
                epoch,
                train_loss,
                val_loss,
                sg_residual,
                lr: cfg.lr.lr_at(adam.steps_taken().saturating_sub(1)),
            });
        }
    }

    let seconds_per_epoch = start.elapsed().as_secs_f64() / cfg.epochs as f64;
    if let Some(path) = &cfg.checkpoint_path {
        storage::write_net(path, &best)?;
    }
    Ok(TrainOutcome { best_net: best, best_val, history, seconds_per_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_bursts, normalize_dataset, ChannelStats, DeltaRepr, DeltaSampling, Integrator};
    use crate::net::{BlockVariant, Sharing};
    use crate::systems;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn linear_dataset(count: usize, seed: u64) -> BurstDataset {
        let sys = systems::linear();
        let mut ds = make_bursts(
            &sys,
            &Integrator::Rk4 { dt: 1e-3 },
            &DeltaSampling::Uniform { min: 0.05, max: 0.15 },
            count,
            seed,
        )
        .unwrap();
        normalize_dataset(&mut ds).unwrap();
        ds
    }

    fn small_net(state_dim: usize, seed: u64) -> OsgNet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        OsgNet::new(state_dim, &[24], 1, BlockVariant::Standard, Sharing::Recursive, &mut rng)
            .unwrap()
    }

    fn base_config(loss: LossSpec) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 5,
            loss,
            lr: CyclicLr::default(),
            validation_fraction: 0.10,
            dynamic_validation: true,
            split_seed: 11,
            tuple_seed: 13,
            val_check_every: 1,
            record_every: 1,
            checkpoint_path: None,
        }
    }

    fn net_bytes(net: &OsgNet) -> Vec<u8> {
        let mut buf = Vec::new();
        storage::write_net_to(&mut buf, net).unwrap();
        buf
    }

    #[test]
    fn reruns_are_bit_identical() {
        let ds = linear_dataset(20, 7);
        let net = small_net(2, 3);
        let cfg = base_config(LossSpec::Gdsg { metric: MetricKind::L2Squared, lambda: 1.0, q: 2 });
        let a = train(net.clone(), &ds, &cfg).unwrap();
        let b = train(net, &ds, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best_val.to_bits(), b.best_val.to_bits());
        assert_eq!(net_bytes(&a.best_net), net_bytes(&b.best_net));
    }

    /// Identical constant-trajectory bursts with a zero network: predictions
    /// are exact from the start, so the initial snapshot is never displaced.
    #[test]
    fn perfect_start_keeps_initial_snapshot() {
        let n = 12;
        let bursts: Vec<Burst> = (0..n)
            .map(|i| {
                let d = 0.05 + 0.01 * i as f64;
                Burst { u0: vec![0.0, 0.0], u1: vec![0.0, 0.0], u2: vec![0.0, 0.0], delta1: d, delta2: d }
            })
            .collect();
        let ds = BurstDataset {
            system: "constant".into(),
            bursts,
            domain_bounds: vec![[3.0, 3.0], [-1.0, -1.0]],
            delta_range: [0.05, 0.16],
            delta_repr: DeltaRepr::Identity,
            seed: 0,
            eta: 0.0,
            normalized: true,
            norm: Some(crate::dynamics::NormStats {
                state: vec![
                    ChannelStats { min: 3.0, max: 3.0, degenerate: true },
                    ChannelStats { min: -1.0, max: -1.0, degenerate: true },
                ],
                delta: ChannelStats { min: 0.05, max: 0.16, degenerate: false },
                repr: DeltaRepr::Identity,
            }),
        };
        let zero = OsgNet::from_blocks(
            2,
            vec![MlpParams::zeros(&[3, 4, 2]).unwrap()],
            1,
            BlockVariant::Standard,
            Sharing::Recursive,
        )
        .unwrap();
        let cfg = TrainConfig { epochs: 2, batch_size: 3, ..base_config(LossSpec::Baseline { metric: MetricKind::L2Squared }) };
        let out = train(zero.clone(), &ds, &cfg).unwrap();
        assert_eq!(out.best_val, 0.0);
        assert_eq!(net_bytes(&out.best_net), net_bytes(&zero));
        for row in &out.history {
            assert_eq!(row.train_loss, 0.0);
            assert_eq!(row.val_loss, 0.0);
        }
    }

    /// The first recorded training loss is the exact mean of the single-burst
    /// losses of the initial network over the epoch-0 training split.
    #[test]
    fn first_epoch_loss_is_mean_of_members() {
        let ds = linear_dataset(6, 21);
        let net = small_net(2, 9);
        let spec = LossSpec::Baseline { metric: MetricKind::L2Squared };
        let mut cfg = base_config(spec);
        cfg.epochs = 1;
        cfg.validation_fraction = 0.34;
        let (train_idx, _) =
            split_indices(6, cfg.validation_fraction, cfg.split_seed, 0, true).unwrap();
        cfg.batch_size = train_idx.len();

        let norm = ds.norm.as_ref().unwrap();
        let fmap = norm.delta_feature_map();
        let bursts = working_bursts(&ds, norm);
        let mut expected = 0.0;
        for &j in &train_idx {
            expected += loss::baseline_loss(&net, &fmap, &bursts[j], MetricKind::L2Squared)
                .unwrap()
                .0;
        }
        expected /= train_idx.len() as f64;

        let out = train(net, &ds, &cfg).unwrap();
        assert_eq!(out.history[0].train_loss, expected);
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let mut ds = linear_dataset(12, 3);
        let cfg = base_config(LossSpec::Baseline { metric: MetricKind::L2Squared });
        // Poison the whole epoch-0 training split (validation stays clean, so
        // the pre-training validation pass succeeds and the failure lands in
        // mini-batch 0 regardless of the shuffle).
        let (train_idx, _) =
            split_indices(12, cfg.validation_fraction, cfg.split_seed, 0, true).unwrap();
        for &j in &train_idx {
            ds.bursts[j].u0[0] = 1e308;
            ds.bursts[j].u1[0] = -1e308;
        }
        let net = small_net(2, 3);
        let err = train(net, &ds, &cfg).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::NonFinite(_)), "{msg}");
        assert!(msg.contains("epoch 0") && msg.contains("mini-batch 0"), "{msg}");
    }

    #[test]
    fn regularized_validation_is_the_data_term() {
        let ds = linear_dataset(10, 5);
        let net = small_net(2, 1);
        let norm = ds.norm.as_ref().unwrap();
        let fmap = norm.delta_feature_map();
        let bursts = working_bursts(&ds, norm);
        let subset = [1usize, 4, 7];
        let gdsg = LossSpec::Gdsg { metric: MetricKind::L2Squared, lambda: 50.0, q: 3 };
        let got = subset_loss(&net, &fmap, &bursts, &subset, &gdsg).unwrap();
        let mut expected = 0.0;
        for &j in &subset {
            expected +=
                loss::data_loss_value(&net, &fmap, &bursts[j], MetricKind::L2Squared).unwrap();
        }
        expected /= subset.len() as f64;
        assert_eq!(got, expected);
        assert!(subset_loss(&net, &fmap, &bursts, &[], &gdsg).is_err());
    }

    #[test]
    fn best_value_never_exceeds_recorded_validation() {
        let ds = linear_dataset(20, 17);
        let net = small_net(2, 4);
        let mut cfg = base_config(LossSpec::Lisg { metric: MetricKind::L2Squared });
        cfg.epochs = 10;
        let out = train(net, &ds, &cfg).unwrap();
        for row in &out.history {
            assert!(out.best_val <= row.val_loss + 1e-15, "best {} vs row {}", out.best_val, row.val_loss);
        }
    }

    /// The periodic validation check counts mini-batches across epochs, so a
    /// check period longer than one epoch still snapshots improvements.
    #[test]
    fn sparse_validation_checks_still_snapshot_improvements() {
        let ds = linear_dataset(10, 23);
        let mut cfg = base_config(LossSpec::Baseline { metric: MetricKind::L2Squared });
        cfg.epochs = 120;
        cfg.batch_size = 9; // one mini-batch per epoch
        cfg.val_check_every = 7; // longer than an epoch
        cfg.dynamic_validation = false;
        let initial = {
            let norm = ds.norm.as_ref().unwrap();
            let fmap = norm.delta_feature_map();
            let bursts = working_bursts(&ds, norm);
            let (_, val) = split_indices(10, 0.10, cfg.split_seed, 0, false).unwrap();
            subset_loss(&small_net(2, 6), &fmap, &bursts, &val, &cfg.loss).unwrap()
        };
        let out = train(small_net(2, 6), &ds, &cfg).unwrap();
        assert!(
            out.best_val < initial,
            "sparse checks never snapshotted: best {} vs initial {initial}",
            out.best_val
        );
    }

    #[test]
    fn static_split_training_trends_downward() {
        let ds = linear_dataset(20, 29);
        let net = small_net(2, 8);
        let mut cfg = base_config(LossSpec::Baseline { metric: MetricKind::L2Squared });
        cfg.epochs = 200;
        cfg.dynamic_validation = false;
        cfg.val_check_every = 10;
        let out = train(net, &ds, &cfg).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|r| r.train_loss).collect();
        assert_eq!(losses.len(), 200);
        let mut diffs: Vec<f64> = losses.windows(2).map(|w| w[1] - w[0]).collect();
        diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = diffs[diffs.len() / 2];
        assert!(median <= 0.0, "median consecutive change {median}");
        // The loop must also have actually learned something.
        assert!(losses.last().unwrap() < &losses[0]);
    }

    /// Grid samples of a PDE semi-discretization are just another state
    /// vector: the same trainer runs unchanged on a 16-point heat rod.
    #[test]
    fn nodal_grid_states_train_unchanged() {
        let sys = systems::heat_rod_16();
        let mut ds = make_bursts(
            &sys,
            &Integrator::Rk4 { dt: 1e-3 },
            &DeltaSampling::Uniform { min: 0.05, max: 0.15 },
            12,
            3,
        )
        .unwrap();
        normalize_dataset(&mut ds).unwrap();
        let net = small_net(16, 2);
        let mut cfg = base_config(LossSpec::Baseline { metric: MetricKind::L2Squared });
        cfg.epochs = 150;
        cfg.batch_size = 4;
        cfg.dynamic_validation = false;
        cfg.val_check_every = 10;
        cfg.record_every = 149;
        cfg.lr = CyclicLr { base: 1e-3, max: 5e-3, cycle_steps: 300 };
        let out = train(net, &ds, &cfg).unwrap();
        let first = out.history.first().unwrap().train_loss;
        let last = out.history.last().unwrap().train_loss;
        assert!(last < first, "no progress on nodal data: {first} -> {last}");
    }

    #[test]
    fn checkpoint_is_written_and_reloadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best.osgnet");
        let ds = linear_dataset(10, 2);
        let net = small_net(2, 5);
        let mut cfg = base_config(LossSpec::Baseline { metric: MetricKind::L2Squared });
        cfg.checkpoint_path = Some(path.clone());
        let out = train(net, &ds, &cfg).unwrap();
        let reloaded = storage::read_net(&path).unwrap();
        assert_eq!(net_bytes(&reloaded), net_bytes(&out.best_net));
    }

    #[test]
    fn config_validation_rejects_bad_knobs() {
        let ds = linear_dataset(10, 2);
        let net = small_net(2, 5);
        let good = base_config(LossSpec::Baseline { metric: MetricKind::L2Squared });

        let mut zero_epochs = good.clone();
        zero_epochs.epochs = 0;
        assert!(train(net.clone(), &ds, &zero_epochs).is_err());

        let mut big_batch = good.clone();
        big_batch.batch_size = 100;
        assert!(train(net.clone(), &ds, &big_batch).is_err());

        let mut no_val = good.clone();
        no_val.validation_fraction = 0.0;
        assert!(train(net.clone(), &ds, &no_val).is_err());

        let mut bad_q = good;
        bad_q.loss = LossSpec::Gdsg { metric: MetricKind::L2Squared, lambda: 1.0, q: 0 };
        assert!(train(net.clone(), &ds, &bad_q).is_err());

        let mut raw = linear_dataset(10, 2);
        crate::dynamics::denormalize_dataset(&mut raw).unwrap();
        let plain = base_config(LossSpec::Baseline { metric: MetricKind::L2Squared });
        assert!(train(net, &raw, &plain).is_err());
    }
}
