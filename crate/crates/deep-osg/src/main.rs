//! Command-line pipeline around the library: generate burst data, train the
//! three objectives, evaluate rollouts, compare methods, and numerically
//! verify the analytical guarantees. Every command is deterministic under
//! fixed seeds; CSV and binary artifacts are byte-stable across reruns.

use clap::{Args, Parser, Subcommand};
use deep_osg::config::{resolve_system, ExperimentConfig, BUNDLED_NAMES, METHODS};
use deep_osg::dynamics::{stream_rng, BurstDataset, ChannelStats, DeltaRepr, NormStats};
use deep_osg::error::{Error, Result};
use deep_osg::eval::{
    self, estimate_sup_error, lemma1_check, make_test_set, mean_rel_error, net_stepper,
    oracle_stepper, partition_std, predict_with, sample_partitions, semigroup_residual,
    theorem1_bound, theorem2_check, TestSet, TheoremContext,
};
use deep_osg::systems::{pendulum_lipschitz, LINEAR_LIPSCHITZ};
use deep_osg::{linalg, plot, storage, systems, train};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn preset_help() -> String {
    format!("Bundled presets for --config:\n  {}", BUNDLED_NAMES.join(", "))
}

#[derive(Parser)]
#[command(
    name = "deep-osg",
    version,
    about = "Learn evolution operators of unknown ODE/PDE systems from burst data",
    after_help = preset_help()
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a burst dataset for the configured system.
    Generate(CommonArgs),
    /// Train one objective on the generated dataset.
    Train(TrainArgs),
    /// Evaluate a trained model (or the reference integrator) on rollouts.
    Evaluate(EvalArgs),
    /// Compare the three objectives side by side, or sweep the defect weight.
    Compare(CommonArgs),
    /// Numerically check the analytical guarantees.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Bundled preset name or path to a TOML config file.
    #[arg(long)]
    config: String,
    /// Output directory (default: runs/<config name>).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Replace all five named seeds with values derived from this one.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Objective: baseline, lisg, or gdsg (default: the config's method).
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model to evaluate (default: the config's method).
    #[arg(long)]
    method: Option<String>,
    /// Use the reference integrator in place of a trained model.
    #[arg(long)]
    oracle: bool,
    /// Also write SVG plots of the error curve and one rollout.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Config naming the system whose domain the checks sample
    /// (default: linear).
    #[arg(long)]
    config: Option<String>,
    /// Output directory (default: runs/<config name>).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also check a trained model file against the generated dataset.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Seed for probe and pair sampling.
    #[arg(long, default_value_t = 71)]
    seed: u64,
}

fn main() {
    // Restore default SIGPIPE behavior so `deep-osg train | head` exits
    // quietly instead of panicking when the downstream reader closes.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate(args) => {
            let cfg = load_config(&args)?;
            cmd_generate(&cfg, &out_dir(&cfg, &args.out_dir))
        }
        Cmd::Train(args) => {
            let cfg = load_config(&args.common)?;
            let method = args.method.unwrap_or_else(|| cfg.train.method.clone());
            cmd_train(&cfg, &out_dir(&cfg, &args.common.out_dir), &method)
        }
        Cmd::Evaluate(args) => {
            let cfg = load_config(&args.common)?;
            let method = args.method.clone().unwrap_or_else(|| cfg.train.method.clone());
            cmd_evaluate(
                &cfg,
                &out_dir(&cfg, &args.common.out_dir),
                &method,
                args.oracle,
                args.plots,
            )
        }
        Cmd::Compare(args) => {
            let cfg = load_config(&args)?;
            cmd_compare(&cfg, &out_dir(&cfg, &args.out_dir))
        }
        Cmd::Verify(args) => cmd_verify(&args),
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.override_seeds(seed);
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

fn dataset_path(dir: &Path) -> PathBuf {
    dir.join("dataset.osgdat")
}

fn model_path(dir: &Path, method: &str) -> PathBuf {
    dir.join(format!("model-{method}.osgnet"))
}

/// Exclusive marker for writers; concurrent invocations must not share an
/// output directory. Removed on drop, including on error paths.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Config(format!(
                    "output directory {} is locked by another invocation; remove {} if stale",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn cmd_generate(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let _lock = DirLock::acquire(dir)?;
    let ds = cfg.build_dataset()?;
    let path = dataset_path(dir);
    storage::write_dataset(&path, &ds)?;

    let mut sidecar = String::new();
    let _ = writeln!(sidecar, "experiment = \"{}\"", cfg.name);
    let _ = writeln!(sidecar, "state_dim = {}", ds.state_dim()?);
    let _ = writeln!(sidecar, "lag_range = [{:e}, {:e}]", ds.delta_range[0], ds.delta_range[1]);
    let _ = writeln!(sidecar, "normalized = {}", ds.normalized);
    sidecar.push('\n');
    sidecar.push_str(&toml::to_string_pretty(&cfg.dataset).map_err(|e| {
        Error::Config(format!("config serialize error: {e}"))
    })?);
    std::fs::write(dir.join("dataset.meta.txt"), sidecar)?;

    println!(
        "wrote {} bursts of {} (state dim {}) to {}",
        ds.bursts.len(),
        cfg.dataset.system,
        ds.state_dim()?,
        path.display()
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, dir: &Path, method: &str) -> Result<()> {
    let _lock = DirLock::acquire(dir)?;
    cfg.loss_spec(method)?;
    let ds_path = dataset_path(dir);
    if !ds_path.exists() {
        return Err(Error::Config(format!(
            "dataset not found at {}; run generate first",
            ds_path.display()
        )));
    }
    let ds = storage::read_dataset(&ds_path)?;
    let net = cfg.build_net(ds.state_dim()?)?;
    let model = model_path(dir, method);
    let tc = cfg.train_config(method, Some(model.clone()))?;
    let out = train::train(net, &ds, &tc)?;

    let history = dir.join(format!("history-{method}.csv"));
    train::write_history_csv(&history, &out.history)?;
    let meta = format!(
        "method = {method}\nbest_val = {:e}\nseconds_per_epoch = {:.6}\nepochs = {}\n",
        out.best_val, out.seconds_per_epoch, cfg.train.epochs
    );
    std::fs::write(dir.join(format!("train-{method}.txt")), meta)?;

    println!(
        "trained {method}: best validation {:.3e}, {:.4} s/epoch",
        out.best_val, out.seconds_per_epoch
    );
    println!("model: {}", model.display());
    println!("history: {}", history.display());
    Ok(())
}

/// Evaluation inputs shared by evaluate and compare: a physical test set,
/// lag partitions of the horizon, and the true end states they anchor to.
struct EvalContext {
    ds: BurstDataset,
    norm: NormStats,
    test: TestSet,
    partitions: Vec<eval::Partition>,
    reference_ends: Vec<Vec<f64>>,
}

fn eval_context(cfg: &ExperimentConfig, dir: &Path) -> Result<EvalContext> {
    let ds_path = dataset_path(dir);
    if !ds_path.exists() {
        return Err(Error::Config(format!(
            "dataset not found at {}; run generate first",
            ds_path.display()
        )));
    }
    let ds = storage::read_dataset(&ds_path)?;
    let norm = ds
        .norm
        .clone()
        .ok_or_else(|| Error::Config("dataset carries no normalization statistics".into()))?;
    let kind = resolve_system(&cfg.dataset.system)?;
    let integ = cfg.dataset.integrator;
    let flow = |u: &[f64], t: f64| kind.flow(&integ, u, t);

    let e = &cfg.evaluation;
    let mut ic_rng = stream_rng(e.seed, 0, 5);
    let ics: Vec<Vec<f64>> = (0..e.trajectories)
        .map(|_| kind.sample_ic(&mut ic_rng))
        .collect::<Result<_>>()?;
    let test = make_test_set(&flow, ics, e.steps, cfg.eval_delta())?;

    let mut part_rng = stream_rng(e.seed, 1, 5);
    let partitions = sample_partitions(e.horizon, ds.delta_range, e.partitions, &mut part_rng)?;
    // The uniform grid ends exactly at the horizon, so the last reference
    // state anchors the partition study as well.
    let reference_ends: Vec<Vec<f64>> =
        test.reference.iter().map(|traj| traj.last().unwrap().clone()).collect();
    Ok(EvalContext { ds, norm, test, partitions, reference_ends })
}

struct EvalNumbers {
    curve: Vec<f64>,
    mean: f64,
    sigma: f64,
    divergent: usize,
}

fn run_eval<F>(ctx: &EvalContext, step: &F) -> Result<EvalNumbers>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    let (curve, mean) = mean_rel_error(step, &ctx.norm, &ctx.test)?;
    let spread = partition_std(
        step,
        &ctx.norm,
        &ctx.test.initial_states,
        &ctx.reference_ends,
        &ctx.partitions,
    )?;
    Ok(EvalNumbers { curve, mean, sigma: spread.sigma, divergent: spread.divergent })
}

fn summary_text(cfg: &ExperimentConfig, tag: &str, nums: &EvalNumbers) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", cfg.name);
    let _ = writeln!(s, "model: {tag}");
    let _ = writeln!(
        s,
        "trajectories: {}, steps: {}, step size: {}, horizon: {}",
        cfg.evaluation.trajectories,
        cfg.evaluation.steps,
        cfg.eval_delta(),
        cfg.evaluation.horizon
    );
    let _ = writeln!(s, "partitions: {}", cfg.evaluation.partitions);
    let _ = writeln!(s);
    let _ = writeln!(s, "Prediction error      {:.3e}", nums.mean);
    let _ = writeln!(s, "Standard deviation    {:.3e}", nums.sigma);
    if nums.divergent > 0 {
        let _ = writeln!(s, "divergent rollouts: {}", nums.divergent);
    }
    s
}

fn write_plots<F>(
    cfg: &ExperimentConfig,
    dir: &Path,
    tag: &str,
    ctx: &EvalContext,
    step: &F,
    nums: &EvalNumbers,
) -> Result<()>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    let delta = cfg.eval_delta();
    let pts: Vec<(f64, f64)> = nums
        .curve
        .iter()
        .enumerate()
        .map(|(i, &e)| ((i + 1) as f64 * delta, e))
        .collect();
    let log_y = pts.iter().all(|&(_, y)| y > 0.0);
    plot::line_plot(
        &dir.join(format!("curve-{tag}.svg")),
        &format!("{}: mean relative error", cfg.name),
        "time",
        "relative l2 error",
        &[plot::Series { label: tag.to_string(), points: pts }],
        log_y,
    )?;

    // One rollout, first test trajectory: reference against prediction.
    let u0 = &ctx.test.initial_states[0];
    let deltas = vec![delta; cfg.evaluation.steps];
    let rollout = predict_with(step, &ctx.norm, u0, &deltas)?;
    let reference: Vec<Vec<f64>> = std::iter::once(u0.clone())
        .chain(ctx.test.reference[0].iter().cloned())
        .collect();
    let dim = u0.len();
    let (title, x_label, y_label, to_point): (
        String,
        &str,
        &str,
        Box<dyn Fn(f64, &[f64]) -> (f64, f64)>,
    ) = if dim == 2 {
        (
            format!("{}: phase plane rollout", cfg.name),
            "u1",
            "u2",
            Box::new(|_t, u: &[f64]| (u[0], u[1])),
        )
    } else {
        (
            format!("{}: first-coordinate rollout", cfg.name),
            "time",
            "u1",
            Box::new(|t, u: &[f64]| (t, u[0])),
        )
    };
    let ref_pts: Vec<(f64, f64)> = reference
        .iter()
        .enumerate()
        .map(|(i, u)| to_point(i as f64 * delta, u))
        .collect();
    let pre_pts: Vec<(f64, f64)> = rollout
        .states
        .iter()
        .zip(&rollout.times)
        .map(|(u, &t)| to_point(t, u))
        .collect();
    plot::line_plot(
        &dir.join(format!("rollout-{tag}.svg")),
        &title,
        x_label,
        y_label,
        &[
            plot::Series { label: "reference".into(), points: ref_pts },
            plot::Series { label: format!("{tag} prediction"), points: pre_pts },
        ],
        false,
    )?;
    Ok(())
}

fn cmd_evaluate(
    cfg: &ExperimentConfig,
    dir: &Path,
    method: &str,
    oracle: bool,
    plots: bool,
) -> Result<()> {
    let _lock = DirLock::acquire(dir)?;
    let ctx = eval_context(cfg, dir)?;

    let tag;
    let nums;
    if oracle {
        tag = "oracle".to_string();
        let kind = resolve_system(&cfg.dataset.system)?;
        let integ = cfg.dataset.integrator;
        let flow = |u: &[f64], t: f64| kind.flow(&integ, u, t);
        let step = oracle_stepper(&flow, &ctx.norm);
        nums = run_eval(&ctx, &step)?;
        if plots {
            write_plots(cfg, dir, &tag, &ctx, &step, &nums)?;
        }
    } else {
        cfg.loss_spec(method)?;
        tag = method.to_string();
        let path = model_path(dir, method);
        if !path.exists() {
            return Err(Error::Config(format!(
                "model not found at {}; run train --method {method} first",
                path.display()
            )));
        }
        let net = storage::read_net(&path)?;
        let dim = ctx.ds.state_dim()?;
        if net.state_dim() != dim {
            return Err(Error::Config(format!(
                "model state dimension {} does not match dataset dimension {dim}",
                net.state_dim()
            )));
        }
        let step = net_stepper(&net, &ctx.norm);
        nums = run_eval(&ctx, &step)?;
        if plots {
            write_plots(cfg, dir, &tag, &ctx, &step, &nums)?;
        }
    }

    eval::write_curve_csv(dir.join(format!("curve-{tag}.csv")), cfg.eval_delta(), &nums.curve)?;
    let summary = summary_text(cfg, &tag, &nums);
    std::fs::write(dir.join(format!("summary-{tag}.txt")), &summary)?;
    print!("{summary}");
    Ok(())
}

/// seconds_per_epoch recorded by a train run, if its meta file is present.
fn read_seconds(dir: &Path, method: &str) -> Option<f64> {
    let text = std::fs::read_to_string(dir.join(format!("train-{method}.txt"))).ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("seconds_per_epoch = "))
        .and_then(|v| v.trim().parse().ok())
}

fn cmd_compare(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let _lock = DirLock::acquire(dir)?;
    let ctx = eval_context(cfg, dir)?;

    if let Some(sweep) = &cfg.sweep {
        let dim = ctx.ds.state_dim()?;
        let mut rows = Vec::new();
        println!("defect-weight sweep over {} values", sweep.lambdas.len());
        for &lambda in &sweep.lambdas {
            let mut swept = cfg.clone();
            swept.train.lambda = lambda;
            let net = swept.build_net(dim)?;
            let out = train::train(net, &ctx.ds, &swept.train_config("gdsg", None)?)?;
            let step = net_stepper(&out.best_net, &ctx.norm);
            let (_, mean) = mean_rel_error(&step, &ctx.norm, &ctx.test)?;
            println!("lambda {lambda}: mean relative error {mean:.3e}");
            rows.push(vec![lambda.to_string(), mean.to_string()]);
        }
        let path = dir.join("sweep.csv");
        storage::write_csv(&path, &["lambda", "mean_rel_error"], &rows)?;
        println!("sweep table: {}", path.display());
        return Ok(());
    }

    let missing: Vec<&str> =
        METHODS.into_iter().filter(|m| !model_path(dir, m).exists()).collect();
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<10}  {:>16}  {:>20}  {:>14}",
        "method", "Prediction error", "Standard deviation", "seconds/epoch"
    );
    let mut results: Vec<(&str, EvalNumbers)> = Vec::new();
    for m in METHODS {
        if missing.contains(&m) {
            let _ = writeln!(table, "{m:<10}  {:>16}  {:>20}  {:>14}", "absent", "absent", "-");
            continue;
        }
        let net = storage::read_net(model_path(dir, m))?;
        let step = net_stepper(&net, &ctx.norm);
        let nums = run_eval(&ctx, &step)?;
        results.push((m, nums));
    }
    let best_mean = results
        .iter()
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .map(|(m, _)| *m);
    let best_sigma = results
        .iter()
        .min_by(|a, b| a.1.sigma.total_cmp(&b.1.sigma))
        .map(|(m, _)| *m);
    let mut rows = Vec::new();
    for (m, nums) in &results {
        let mean_mark = if best_mean == Some(m) { " *" } else { "" };
        let sigma_mark = if best_sigma == Some(m) { " *" } else { "" };
        let secs = read_seconds(dir, m)
            .map(|s| format!("{s:.4}"))
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            table,
            "{m:<10}  {:>16}  {:>20}  {secs:>14}",
            format!("{:.3e}{mean_mark}", nums.mean),
            format!("{:.3e}{sigma_mark}", nums.sigma),
        );
        rows.push(vec![m.to_string(), nums.mean.to_string(), nums.sigma.to_string()]);
    }
    print!("{table}");
    std::fs::write(dir.join("compare.txt"), &table)?;
    storage::write_csv(
        dir.join("compare.csv"),
        &["method", "mean_rel_error", "partition_std"],
        &rows,
    )?;
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing models for: {}; run train --method <name> first",
            missing.join(", ")
        )));
    }
    println!("best prediction error and spread marked with *");
    Ok(())
}

/// Identity normalization: physical and normalized coordinates coincide.
fn identity_norm(dim: usize) -> NormStats {
    let unit = ChannelStats { min: -1.0, max: 1.0, degenerate: false };
    NormStats { state: vec![unit; dim], delta: unit, repr: DeltaRepr::Identity }
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let spec = args.config.clone().unwrap_or_else(|| "linear".to_string());
    let cfg = ExperimentConfig::load(&spec)?;
    let dir = out_dir(&cfg, &args.out_dir);
    let _lock = DirLock::acquire(&dir)?;
    let mut report = String::new();
    let mut all_pass = true;

    // Growth-rate guarantee of the averaged velocity field: relative
    // violations of the exact-flow Lipschitz estimate stay at solver noise.
    for (name, lipschitz) in [("linear", LINEAR_LIPSCHITZ), ("damped_pendulum", pendulum_lipschitz())]
    {
        let sys = systems::by_name(name)?;
        let integ = deep_osg::dynamics::Integrator::Rk4 { dt: 1e-4 };
        let flow = |u: &[f64], t: f64| deep_osg::dynamics::evolve(&sys, u, t, &integ);
        let worst = lemma1_check(&flow, lipschitz, sys.domain.bounds(), 0.1, 10_000, args.seed)?;
        let pass = worst <= 1e-8;
        all_pass &= pass;
        let _ = writeln!(
            report,
            "lag-averaged growth bound ({name}): max relative violation {worst:.2e} over 10000 \
             pairs -> {}",
            verdict(pass)
        );
    }

    // Spread-vs-residual inequality on a freshly initialized network: holds
    // for any network, trained or not.
    let kind = resolve_system(&cfg.dataset.system)?;
    let dim = kind.dim();
    let net = cfg.build_net(dim)?;
    let norm = identity_norm(dim);
    let mut rng = stream_rng(args.seed, 2, 5);
    let probes: Vec<Vec<f64>> =
        (0..20).map(|_| kind.sample_ic(&mut rng)).collect::<Result<_>>()?;
    let delta_range = cfg.dataset.delta.range();
    let horizon = 2.0;
    let partitions = sample_partitions(horizon, delta_range, 10, &mut rng)?;
    let integ = cfg.dataset.integrator;
    let anchors: Vec<Vec<f64>> = probes
        .iter()
        .map(|u| kind.flow(&integ, u, horizon))
        .collect::<Result<_>>()?;
    let step = net_stepper(&net, &norm);
    let rep = theorem2_check(&step, &norm, &probes, &anchors, &partitions)?;
    all_pass &= rep.holds;
    let _ = writeln!(
        report,
        "prediction-spread bound (fresh init, {}): sigma_max {:.3e} <= bound {:.3e}, min slack \
         {:.1e}, divergent {} -> {}",
        cfg.dataset.system,
        rep.sigma_max,
        rep.bound,
        rep.min_slack,
        rep.divergent,
        verdict(rep.holds)
    );

    // The same inequality on a trained model, in its own normalized
    // coordinates, plus the a-priori error bound against observed errors.
    if let Some(model) = &args.model {
        let ds = storage::read_dataset(dataset_path(&dir)).map_err(|_| {
            Error::Config(format!(
                "verify --model needs the dataset at {}; run generate first",
                dataset_path(&dir).display()
            ))
        })?;
        let dnorm = ds
            .norm
            .clone()
            .ok_or_else(|| Error::Config("dataset carries no normalization statistics".into()))?;
        let net = storage::read_net(model)?;
        if net.state_dim() != ds.state_dim()? {
            return Err(Error::Config(format!(
                "model state dimension {} does not match dataset dimension {}",
                net.state_dim(),
                ds.state_dim()?
            )));
        }
        let step = net_stepper(&net, &dnorm);
        let mut rng = stream_rng(args.seed, 3, 5);
        let partitions = sample_partitions(horizon, ds.delta_range, 10, &mut rng)?;
        let anchors: Vec<Vec<f64>> = probes
            .iter()
            .map(|u| kind.flow(&integ, u, horizon))
            .collect::<Result<_>>()?;
        let rep = theorem2_check(&step, &dnorm, &probes, &anchors, &partitions)?;
        all_pass &= rep.holds;
        let _ = writeln!(
            report,
            "prediction-spread bound (trained model): sigma_max {:.3e} <= bound {:.3e}, min \
             slack {:.1e}, divergent {} -> {}",
            rep.sigma_max,
            rep.bound,
            rep.min_slack,
            rep.divergent,
            verdict(rep.holds)
        );

        let lipschitz = match cfg.dataset.system.as_str() {
            "linear" => Some(LINEAR_LIPSCHITZ),
            "damped_pendulum" => Some(pendulum_lipschitz()),
            _ => None,
        };
        match lipschitz {
            Some(lip) => {
                let flow = |u: &[f64], t: f64| kind.flow(&integ, u, t);
                let sup = estimate_sup_error(
                    &step,
                    &flow,
                    &dnorm,
                    &kind.bounds(),
                    ds.delta_range,
                    2_000,
                    args.seed,
                )?;
                let ctxt = TheoremContext {
                    lipschitz: lip,
                    sup_error: sup,
                    domain: cfg.dataset.system.clone(),
                };
                let delta = cfg.eval_delta();
                let steps = cfg.evaluation.steps;
                let mut rng = stream_rng(args.seed, 4, 5);
                let ics: Vec<Vec<f64>> =
                    (0..20).map(|_| kind.sample_ic(&mut rng)).collect::<Result<_>>()?;
                let test = make_test_set(&flow, ics, steps, delta)?;
                let mut dominated = 0usize;
                let mut total = 0usize;
                let mut max_ratio = 0f64;
                for (u0, traj) in test.initial_states.iter().zip(&test.reference) {
                    let rollout = predict_with(&step, &dnorm, u0, &vec![delta; steps])?;
                    for (j, reference) in traj.iter().enumerate() {
                        if j + 1 >= rollout.states.len() {
                            break;
                        }
                        let err =
                            linalg::norm2(&linalg::sub(&rollout.states[j + 1], reference));
                        let bound = theorem1_bound(&ctxt, delta, j + 1)?;
                        total += 1;
                        if err <= bound {
                            dominated += 1;
                        }
                        max_ratio = max_ratio.max(err / bound);
                    }
                }
                let pass = dominated == total;
                all_pass &= pass;
                let _ = writeln!(
                    report,
                    "a-priori error bound (sampled-domain estimate, not a guarantee): deviation \
                     estimate {sup:.3e}, dominated {dominated}/{total} checkpoints, worst \
                     error/bound {max_ratio:.3} -> {}",
                    verdict(pass)
                );
            }
            None => {
                let _ = writeln!(
                    report,
                    "a-priori error bound: skipped (no reference growth constant for system \
                     '{}'; available for linear and damped_pendulum)",
                    cfg.dataset.system
                );
            }
        }

        let mut rng = stream_rng(args.seed, 5, 5);
        let probe_states: Vec<Vec<f64>> =
            (0..20).map(|_| kind.sample_ic(&mut rng)).collect::<Result<_>>()?;
        let partitions = sample_partitions(horizon, ds.delta_range, 10, &mut rng)?;
        let res = semigroup_residual(&step, &dnorm, &probe_states, &partitions)?;
        let _ = writeln!(
            report,
            "composition residual (trained model, informational): max pairwise end-state gap \
             {:.3e}, divergent {}",
            res.epsilon, res.divergent
        );
    }

    print!("{report}");
    std::fs::write(dir.join("verify.txt"), &report)?;
    if all_pass {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Error::Numeric("verification found violations; see report above".into()))
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
