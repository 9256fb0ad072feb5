//! Batch front end over the estimation library: synthetic data
//! generation, fitting, evaluation, prediction, hyperparameter search,
//! and the two-arc demonstration. All emitted tables are comma-separated
//! UTF-8; every run writes a reproducibility manifest next to its
//! outputs.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tripfit::choice::ChoiceParams;
use tripfit::data::{simulate_trips, split, strip_paths, ObservationSet, SimulationSpec};
use tripfit::estimator::{
    fit, naive_alternating_fit, random_search, EstimatorConfig, EstimatorKind, FitResult,
    NaiveVariant, TwoArcInstance,
};
use tripfit::inference::{evaluate, write_report, Prediction};
use tripfit::mixture::{Model, TimeDensity};
use tripfit::network::{
    project_turns, synthetic_grid, travel_time_bounds, Network, NodeId, N_FEATURES,
};

const FEATURE_NAMES: [&str; N_FEATURES] = ["tt_nonres", "tt_res", "control", "left", "uturn"];

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
fn run<I>(argv: I) -> u8
where
    I: IntoIterator<Item = OsString>,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads.or_else(threads_from_env) {
        tripfit::parallel::configure_threads(n);
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var("TRIPFIT_THREADS").ok()?.parse().ok()
}

#[derive(Parser)]
#[command(name = "tripfit", version, about = "Joint travel-time and route-choice estimation")]
struct Cli {
    /// Worker threads (default: TRIPFIT_THREADS or all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a synthetic grid with ground truth and simulated trip sets
    Generate(GenerateArgs),
    /// Fit travel times and choice weights to observations
    Estimate(EstimateArgs),
    /// Score a fit's predictions against held-out observations
    Evaluate(EvaluateArgs),
    /// Predict travel times for explicit OD pairs
    Predict(PredictArgs),
    /// Random hyperparameter search scored by validation RMSLE
    Search(SearchArgs),
    /// Emit the two-arc pitfall traces as plot data
    TwoArcDemo(TwoArcArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Grid dimensions, rows x cols
    #[arg(long, default_value = "10x10")]
    grid: String,
    /// Node spacing, meters
    #[arg(long, default_value_t = 600.0)]
    spacing: f64,
    /// Total simulated trips (OD pairs drawn uniformly)
    #[arg(long, default_value_t = 12_500)]
    trips: usize,
    /// Trips drawn per sampled OD pair
    #[arg(long, default_value_t = 5)]
    trips_per_od: usize,
    /// Mean of the underlying normal in the log-normal time noise
    #[arg(long, default_value_t = 0.1)]
    noise_mu: f64,
    /// Scale of the underlying normal; 0 disables noise
    #[arg(long, default_value_t = 0.316_227_766_016_837_94)]
    noise_sigma: f64,
    /// Dataset fractions, comma-separated; three parts become
    /// train/val/test
    #[arg(long, default_value = "0.8,0.1,0.1")]
    split: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

/// Fit settings shared by estimate and search.
#[derive(Args)]
struct FitOpts {
    /// Step size
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Pace-regularization strength
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Sharpness of the observation-time density
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Sampled routes per pathless observation
    #[arg(long, value_name = "K", default_value_t = 100)]
    samples: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 1024)]
    batch: usize,
    #[arg(long, default_value_t = 400)]
    max_iters: usize,
    /// Plateau window of the stopping rule, iterations
    #[arg(long, default_value_t = 50)]
    stop_window: usize,
    /// Smoothed-objective improvement threshold of the stopping rule
    #[arg(long, default_value_t = 0.01)]
    stop_delta: f64,
    /// Initial value of the unfrozen choice weights
    #[arg(long, default_value_t = -2.0)]
    b0: f64,
    /// Gradient estimator for pathless observations
    #[arg(long, value_enum, default_value_t = EstimatorArg::Online)]
    estimator: EstimatorArg,
    /// Drop recorded routes before fitting
    #[arg(long, conflicts_with = "with_paths")]
    no_paths: bool,
    /// Keep recorded routes (the default)
    #[arg(long)]
    with_paths: bool,
    /// Slowest admissible arc speed, m/s; sets the upper time bound
    #[arg(long, default_value_t = 1.0)]
    floor_speed: f64,
    /// City-wide speed cap, m/s; sets the lower time bound
    /// (default: the network's top posted speed)
    #[arg(long)]
    city_speed: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Online,
    Offline,
}

impl FitOpts {
    fn config(&self, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            eta: self.eta,
            lambda: self.lambda,
            gamma: self.gamma,
            samples: self.samples,
            batch_size: self.batch,
            stop_window: self.stop_window,
            stop_delta: self.stop_delta,
            max_iters: self.max_iters,
            seed,
            b0: self.b0,
            kind: match self.estimator {
                EstimatorArg::Online => EstimatorKind::Online,
                EstimatorArg::Offline => EstimatorKind::Offline,
            },
        }
    }

    fn manifest(&self, entries: &mut Vec<(&'static str, String)>) {
        entries.push(("eta", self.eta.to_string()));
        entries.push(("lambda", self.lambda.to_string()));
        entries.push(("gamma", self.gamma.to_string()));
        entries.push(("samples", self.samples.to_string()));
        entries.push(("batch", self.batch.to_string()));
        entries.push(("max_iters", self.max_iters.to_string()));
        entries.push(("stop_window", self.stop_window.to_string()));
        entries.push(("stop_delta", self.stop_delta.to_string()));
        entries.push(("b0", self.b0.to_string()));
        entries.push((
            "estimator",
            match self.estimator {
                EstimatorArg::Online => "online".to_string(),
                EstimatorArg::Offline => "offline".to_string(),
            },
        ));
        entries.push(("paths", (!self.no_paths).to_string()));
        entries.push(("floor_speed", self.floor_speed.to_string()));
        if let Some(v) = self.city_speed {
            entries.push(("city_speed", v.to_string()));
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    network: PathBuf,
    /// Training observations
    #[arg(long)]
    obs: PathBuf,
    /// Validation observations scored along the trace
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    fit: FitOpts,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    network: PathBuf,
    /// Held-out observations to score
    #[arg(long)]
    obs: PathBuf,
    /// Fit output directory holding params.csv and t_hat.csv
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Sampled routes per OD pair when enumeration is infeasible
    #[arg(long, value_name = "K", default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    network: PathBuf,
    /// Fit output directory holding params.csv and t_hat.csv
    #[arg(long)]
    fit: PathBuf,
    /// OD pair as o:d; repeatable
    #[arg(long = "od", value_name = "O:D")]
    od: Vec<String>,
    /// File of comma-separated o,d lines
    #[arg(long)]
    od_file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Sampled routes per OD pair when enumeration is infeasible
    #[arg(long, value_name = "K", default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    network: PathBuf,
    /// Training observations
    #[arg(long)]
    obs: PathBuf,
    /// Validation observations the search minimizes RMSLE on
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Configurations to try; the first is the base config itself
    #[arg(long, default_value_t = 20)]
    budget: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    fit: FitOpts,
}

#[derive(Args)]
struct TwoArcArgs {
    #[arg(long)]
    out: PathBuf,
    /// Iterations of each naive alternating trace
    #[arg(long, default_value_t = 12)]
    iters: usize,
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Estimate(args) => estimate(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Predict(args) => predict_cmd(args),
        Command::Search(args) => search_cmd(args),
        Command::TwoArcDemo(args) => two_arc_demo(args),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let (rows, cols) = parse_grid(&args.grid)?;
    let fractions = parse_fractions(&args.split)?;
    let out = prepare_out(&args.out)?;
    let (net, t_true) = synthetic_grid(rows, cols, args.spacing)?;
    let spec = SimulationSpec {
        trips_per_od: args.trips_per_od,
        total_trips: Some(args.trips),
        noise_mu: args.noise_mu,
        noise_sigma: args.noise_sigma,
        seed: args.seed,
        ..SimulationSpec::default()
    };
    let set = simulate_trips(&net, &t_true, &spec)?;
    let parts = split(&set, &fractions, args.seed)?;
    let mut file = create(&out.join("network.txt"))?;
    net.save(&mut file)?;
    write_times(&out.join("t_true.csv"), &t_true)?;
    let names: Vec<String> = if parts.len() == 3 {
        vec!["train".into(), "val".into(), "test".into()]
    } else {
        (1..=parts.len()).map(|i| format!("part{i}")).collect()
    };
    let mut entries = vec![
        ("command", "generate".to_string()),
        ("grid", format!("{rows}x{cols}")),
        ("spacing", args.spacing.to_string()),
        ("trips", args.trips.to_string()),
        ("trips_per_od", args.trips_per_od.to_string()),
        ("noise_mu", args.noise_mu.to_string()),
        ("noise_sigma", args.noise_sigma.to_string()),
        ("split", args.split.clone()),
        ("seed", args.seed.to_string()),
        ("nodes", net.n_nodes().to_string()),
        ("arcs", net.n_arcs().to_string()),
    ];
    for (name, part) in names.iter().zip(&parts) {
        let mut file = create(&out.join(format!("{name}.trips")))?;
        part.save(&mut file)?;
        eprintln!("{name}: {} observations", part.len());
    }
    entries.extend(
        names
            .iter()
            .zip(&parts)
            .map(|(name, part)| (leak(name), part.len().to_string())),
    );
    write_manifest(&out, &entries)
}

// Manifest keys are 'static; dataset names are few and live to exit.
fn leak(s: &str) -> &'static str {
    Box::leak(s.to_string().into_boxed_str())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let out = prepare_out(&args.out)?;
    let net = load_network(&args.network)?;
    let mut set = load_observations(&args.obs, &net)?;
    if args.fit.no_paths {
        set = strip_paths(&set);
    }
    let validation = args
        .val
        .as_ref()
        .map(|p| load_observations(p, &net))
        .transpose()?;
    let bounds = travel_time_bounds(
        &net,
        args.fit.city_speed.unwrap_or_else(|| net.max_speed()),
        args.fit.floor_speed,
    )?;
    let config = args.fit.config(args.seed);
    let result = fit(
        &net,
        &set.observations,
        &bounds,
        &config,
        validation.as_ref().map(|v| v.observations.as_slice()),
    )?;
    report_fit(&result);
    write_fit(&out, &result, config.gamma)?;
    let mut entries = vec![
        ("command", "estimate".to_string()),
        ("network", args.network.display().to_string()),
        ("obs", args.obs.display().to_string()),
        ("observations", set.len().to_string()),
        ("seed", args.seed.to_string()),
    ];
    if let Some(p) = &args.val {
        entries.push(("val", p.display().to_string()));
    }
    args.fit.manifest(&mut entries);
    write_manifest(&out, &entries)
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let out = prepare_out(&args.out)?;
    let net = load_network(&args.network)?;
    let set = load_observations(&args.obs, &net)?;
    let (params, gamma) = read_params(&args.fit.join("params.csv"))?;
    let t_hat = read_times(&args.fit.join("t_hat.csv"), net.n_arcs())?;
    let graph = project_turns(&net);
    let dests: Vec<NodeId> = {
        let mut d: Vec<NodeId> = set
            .observations
            .iter()
            .filter_map(|o| o.effective_dest())
            .collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    let model = Model::build(&graph, t_hat, params, TimeDensity::smsle(gamma)?, &dests)?;
    let report = evaluate(&model, &set.observations, args.samples, args.seed)?;
    let mut file = create(&out.join("report.csv"))?;
    write_report(&report, &mut file)?;
    eprintln!(
        "rmsle over {} observations: geomean {:.4}, mean {:.4}, mode {:.4}",
        report.n_observations, report.rmsle_geomean, report.rmsle_mean, report.rmsle_mode
    );
    let entries = vec![
        ("command", "evaluate".to_string()),
        ("network", args.network.display().to_string()),
        ("obs", args.obs.display().to_string()),
        ("fit", args.fit.display().to_string()),
        ("samples", args.samples.to_string()),
        ("seed", args.seed.to_string()),
        ("rmsle_geomean", report.rmsle_geomean.to_string()),
        ("rmsle_mean", report.rmsle_mean.to_string()),
        ("rmsle_mode", report.rmsle_mode.to_string()),
    ];
    write_manifest(&out, &entries)
}

fn predict_cmd(args: PredictArgs) -> Result<()> {
    let out = prepare_out(&args.out)?;
    let net = load_network(&args.network)?;
    let (params, gamma) = read_params(&args.fit.join("params.csv"))?;
    let t_hat = read_times(&args.fit.join("t_hat.csv"), net.n_arcs())?;
    let pairs = collect_od_pairs(&args, net.n_nodes())?;
    let graph = project_turns(&net);
    let dests: Vec<NodeId> = {
        let mut d: Vec<NodeId> = pairs.iter().map(|&(_, d)| d).collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    let density = TimeDensity::smsle(gamma)?;
    let model = Model::build(&graph, t_hat, params, density, &dests)?;
    let predictions: Vec<tripfit::Result<Prediction>> =
        tripfit::parallel::indexed_map(&pairs, |i, &(o, d)| {
            use rand_chacha::rand_core::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(args.seed);
            rng.set_stream(i as u64);
            tripfit::inference::predict(&model, o, d, args.samples, &mut rng)
        });
    let mut file = create(&out.join("predictions.csv"))?;
    writeln!(file, "o,d,geomean,mean,mode,samples,exact")?;
    for (result, &(o, d)) in predictions.into_iter().zip(&pairs) {
        let p = result.with_context(|| format!("predicting o={o}, d={d}"))?;
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            p.o, p.d, p.geomean, p.mean, p.mode, p.samples, p.exact
        )?;
    }
    let entries = vec![
        ("command", "predict".to_string()),
        ("network", args.network.display().to_string()),
        ("fit", args.fit.display().to_string()),
        ("pairs", pairs.len().to_string()),
        ("samples", args.samples.to_string()),
        ("seed", args.seed.to_string()),
    ];
    write_manifest(&out, &entries)
}

fn search_cmd(args: SearchArgs) -> Result<()> {
    let out = prepare_out(&args.out)?;
    let net = load_network(&args.network)?;
    let mut train = load_observations(&args.obs, &net)?;
    if args.fit.no_paths {
        train = strip_paths(&train);
    }
    let validation = load_observations(&args.val, &net)?;
    let bounds = travel_time_bounds(
        &net,
        args.fit.city_speed.unwrap_or_else(|| net.max_speed()),
        args.fit.floor_speed,
    )?;
    let base = args.fit.config(args.seed);
    let result = random_search(
        &net,
        &train.observations,
        &validation.observations,
        &bounds,
        &base,
        args.budget,
        args.seed,
    )?;
    let mut ranked: Vec<_> = result.leaderboard.iter().collect();
    ranked.sort_by(|a, b| a.val_rmsle.total_cmp(&b.val_rmsle));
    let mut file = create(&out.join("leaderboard.csv"))?;
    writeln!(file, "rank,eta,gamma,lambda,val_rmsle")?;
    for (rank, c) in ranked.iter().enumerate() {
        writeln!(
            file,
            "{},{},{},{},{}",
            rank + 1,
            c.eta,
            c.gamma,
            c.lambda,
            c.val_rmsle
        )?;
    }
    let mut file = create(&out.join("best_config.txt"))?;
    writeln!(file, "eta={}", result.best.eta)?;
    writeln!(file, "gamma={}", result.best.gamma)?;
    writeln!(file, "lambda={}", result.best.lambda)?;
    writeln!(file, "samples={}", result.best.samples)?;
    writeln!(file, "batch={}", result.best.batch_size)?;
    writeln!(file, "max_iters={}", result.best.max_iters)?;
    drop(file);
    report_fit(&result.best_fit);
    write_fit(&out, &result.best_fit, result.best.gamma)?;
    eprintln!(
        "best of {}: eta {}, gamma {}, lambda {}",
        args.budget, result.best.eta, result.best.gamma, result.best.lambda
    );
    let mut entries = vec![
        ("command", "search".to_string()),
        ("network", args.network.display().to_string()),
        ("obs", args.obs.display().to_string()),
        ("val", args.val.display().to_string()),
        ("budget", args.budget.to_string()),
        ("seed", args.seed.to_string()),
    ];
    args.fit.manifest(&mut entries);
    write_manifest(&out, &entries)
}

fn two_arc_demo(args: TwoArcArgs) -> Result<()> {
    let out = prepare_out(&args.out)?;
    let instance = TwoArcInstance::default();
    let time_trace = naive_alternating_fit(&instance, NaiveVariant::ExpectedTime, args.iters);
    let loss_trace = naive_alternating_fit(&instance, NaiveVariant::ExpectedLoss, args.iters);
    let mut file = create(&out.join("naive_traces.csv"))?;
    writeln!(file, "iteration,expected_time,expected_loss")?;
    for i in 0..time_trace.len().max(loss_trace.len()) {
        let cell = |t: &[f64]| t.get(i).map(|v| v.to_string()).unwrap_or_default();
        writeln!(file, "{i},{},{}", cell(&time_trace), cell(&loss_trace))?;
    }
    drop(file);
    let mut file = create(&out.join("msle_curve.csv"))?;
    writeln!(file, "x,expected_msle")?;
    for i in 0..=400 {
        let x = 0.5 + 2.5 * i as f64 / 400.0;
        writeln!(file, "{x},{}", instance.expected_msle(x))?;
    }
    drop(file);
    let (x_star, at_min) = instance.joint_minimum();
    let fixed = *loss_trace.last().unwrap();
    eprintln!(
        "alternating fixed point x={fixed} with loss {}; joint minimum x={x_star} with loss {at_min}",
        instance.expected_msle(fixed)
    );
    let entries = vec![
        ("command", "two-arc-demo".to_string()),
        ("iters", args.iters.to_string()),
        ("fixed_point", fixed.to_string()),
        ("fixed_point_loss", instance.expected_msle(fixed).to_string()),
        ("joint_minimizer", x_star.to_string()),
        ("joint_minimum", at_min.to_string()),
    ];
    write_manifest(&out, &entries)
}

fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let (r, c) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("grid must look like 10x10, got '{text}'"))?;
    Ok((
        r.parse().with_context(|| format!("bad row count '{r}'"))?,
        c.parse().with_context(|| format!("bad column count '{c}'"))?,
    ))
}

fn parse_fractions(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.parse()
                .with_context(|| format!("bad fraction '{v}' in '{text}'"))
        })
        .collect()
}

fn collect_od_pairs(args: &PredictArgs, n_nodes: usize) -> Result<Vec<(NodeId, NodeId)>> {
    let mut pairs = Vec::new();
    for text in &args.od {
        let (o, d) = text
            .split_once(':')
            .ok_or_else(|| anyhow!("OD pair must look like 3:7, got '{text}'"))?;
        pairs.push((
            o.parse().with_context(|| format!("bad origin '{o}'"))?,
            d.parse().with_context(|| format!("bad destination '{d}'"))?,
        ));
    }
    if let Some(path) = &args.od_file {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading OD list {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (o, d) = line
                .split_once(',')
                .ok_or_else(|| anyhow!("{}:{}: expected o,d", path.display(), i + 1))?;
            pairs.push((
                o.trim().parse().with_context(|| format!("bad origin '{o}'"))?,
                d.trim()
                    .parse()
                    .with_context(|| format!("bad destination '{d}'"))?,
            ));
        }
    }
    if pairs.is_empty() {
        bail!("no OD pairs given; use --od or --od-file");
    }
    for &(o, d) in &pairs {
        if o >= n_nodes || d >= n_nodes {
            bail!("OD pair {o}:{d} is outside the network's {n_nodes} nodes");
        }
    }
    Ok(pairs)
}

fn prepare_out(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("creating {}", path.display())
    })?))
}

fn load_network(path: &Path) -> Result<Network> {
    let file = File::open(path).with_context(|| format!("opening network {}", path.display()))?;
    Network::load(BufReader::new(file))
        .with_context(|| format!("parsing network {}", path.display()))
}

fn load_observations(path: &Path, net: &Network) -> Result<ObservationSet> {
    let file =
        File::open(path).with_context(|| format!("opening observations {}", path.display()))?;
    let set = ObservationSet::load(BufReader::new(file))
        .with_context(|| format!("parsing observations {}", path.display()))?;
    for (i, obs) in set.observations.iter().enumerate() {
        obs.validate(net.n_nodes())
            .with_context(|| format!("{}: record {}", path.display(), i + 1))?;
    }
    Ok(set)
}

fn report_fit(result: &FitResult) {
    let d = &result.diagnostics;
    eprintln!(
        "fit: best objective {:.4}, {} iterations, {:.1}s, stop {:?}",
        result.best_objective,
        result.trace.len(),
        result.wall_s,
        result.stop
    );
    eprintln!(
        "diagnostics: factorizations {}, clamped {}, negated {}, rejected walks {}",
        d.factorizations, d.clamped, d.negated, d.rejected_walks
    );
}

fn write_fit(out: &Path, result: &FitResult, gamma: f64) -> Result<()> {
    let mut file = create(&out.join("params.csv"))?;
    writeln!(file, "feature,weight")?;
    for (name, w) in FEATURE_NAMES.iter().zip(&result.params.weights) {
        writeln!(file, "{name},{w}")?;
    }
    writeln!(file, "gamma,{gamma}")?;
    drop(file);
    write_times(&out.join("t_hat.csv"), &result.t)?;
    let mut file = create(&out.join("trace.csv"))?;
    writeln!(file, "iteration,objective,val_rmsle,wall_s")?;
    for p in &result.trace {
        let val = p.val_rmsle.map(|v| v.to_string()).unwrap_or_default();
        writeln!(file, "{},{},{val},{}", p.iter, p.objective, p.wall_s)?;
    }
    drop(file);
    let mut file = create(&out.join("diagnostics.txt"))?;
    let d = &result.diagnostics;
    writeln!(file, "stop={:?}", result.stop)?;
    writeln!(file, "best_objective={}", result.best_objective)?;
    writeln!(file, "iterations={}", result.trace.len())?;
    writeln!(file, "factorizations={}", d.factorizations)?;
    writeln!(file, "clamped={}", d.clamped)?;
    writeln!(file, "negated={}", d.negated)?;
    writeln!(file, "rejected_walks={}", d.rejected_walks)?;
    Ok(())
}

fn write_times(path: &Path, t: &[f64]) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "arc,minutes")?;
    for (i, v) in t.iter().enumerate() {
        writeln!(file, "{i},{v}")?;
    }
    Ok(())
}

fn read_params(path: &Path) -> Result<(ChoiceParams, f64)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading params {}", path.display()))?;
    let mut weights = [f64::NAN; N_FEATURES];
    let mut gamma = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        let (name, value) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("{}:{}: expected name,value", path.display(), i + 1))?;
        let value: f64 = value
            .parse()
            .with_context(|| format!("{}:{}: bad value '{value}'", path.display(), i + 1))?;
        if name == "gamma" {
            gamma = Some(value);
        } else if let Some(pos) = FEATURE_NAMES.iter().position(|&n| n == name) {
            weights[pos] = value;
        } else {
            bail!("{}:{}: unknown feature '{name}'", path.display(), i + 1);
        }
    }
    if weights.iter().any(|w| w.is_nan()) {
        bail!("{}: missing feature weights", path.display());
    }
    let gamma = gamma.ok_or_else(|| anyhow!("{}: missing gamma", path.display()))?;
    Ok((ChoiceParams::new(weights), gamma))
}

fn read_times(path: &Path, n_arcs: usize) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading times {}", path.display()))?;
    let mut t = Vec::with_capacity(n_arcs);
    for (i, line) in text.lines().enumerate().skip(1) {
        let (arc, value) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("{}:{}: expected arc,minutes", path.display(), i + 1))?;
        let arc: usize = arc
            .parse()
            .with_context(|| format!("{}:{}: bad arc id '{arc}'", path.display(), i + 1))?;
        if arc != t.len() {
            bail!(
                "{}:{}: arc ids must be dense and ordered, found {arc}",
                path.display(),
                i + 1
            );
        }
        t.push(
            value
                .parse()
                .with_context(|| format!("{}:{}: bad time '{value}'", path.display(), i + 1))?,
        );
    }
    if t.len() != n_arcs {
        bail!(
            "{}: {} times for a network of {} arcs",
            path.display(),
            t.len(),
            n_arcs
        );
    }
    Ok(t)
}

fn write_manifest(dir: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut file = create(&dir.join("manifest.txt"))?;
    writeln!(file, "version={}", env!("CARGO_PKG_VERSION"))?;
    for (k, v) in entries {
        writeln!(file, "{k}={v}")?;
    }
    Ok(())
}
