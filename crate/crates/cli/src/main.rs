use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use vismix::attack::{attack_sweep, min_vfe_attack, SearchSpaceEstimate};
use vismix::calibration::{self, Alpha0Method, CalibrationParams, KernelModel, WindowBounds};
use vismix::config::ConfigFile;
use vismix::image::{load_image, save_image, LoadOptions};
use vismix::mixer::{self, DatasetConfig, ShuffleMode, ShufflePlan};
use vismix::optim::{self, Objective, Optimizer, StAdamParams, StopRule};
use vismix::vfe::{vfe_report, VfeConfig};

/// Keyed pixel shuffling for visual privacy.
#[derive(Parser, Debug)]
#[command(name = "vismix", version, arg_required_else_help = true)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for dataset processing [default: 1].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on stderr (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// key = value file; explicit flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-region and image-level VFE of one image.
    Vfe(VfeArgs),
    /// Derive the window-size bounds.
    Calibrate(CalibrateArgs),
    /// Enumerate the sign-pattern / subset frequency table.
    Table1,
    /// Shuffle every image under a directory and write a key file.
    Obfuscate(ObfuscateArgs),
    /// Undo a shuffle given its plan file.
    Invert(InvertArgs),
    /// Run an optimizer on a test objective and print its trajectory.
    OptimBench(OptimArgs),
    /// Keyless min-energy reassembly attack.
    Attack(AttackArgs),
}

#[derive(Args, Debug)]
struct VfeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Region size [default: 8].
    #[arg(long)]
    ws: Option<usize>,
    /// Scale factor F [default: 1].
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct CalibrationFlags {
    /// Target image VFE for the lower bound [default: 24].
    #[arg(long)]
    target_vfe: Option<f64>,
    /// Confidence over the whole feature map [default: 0.5].
    #[arg(long)]
    alpha: Option<f64>,
    /// Allowed feature deviation [default: 0.5].
    #[arg(long)]
    d: Option<f64>,
    /// Quantile for the lower bound [default: 0.5].
    #[arg(long)]
    q: Option<f64>,
    /// Reference width for the lower bound [default: 224].
    #[arg(long)]
    width: Option<usize>,
    /// Reference height for the lower bound [default: 224].
    #[arg(long)]
    height: Option<usize>,
    /// Monte Carlo samples for alpha0 [default: 1000000].
    #[arg(long)]
    samples: Option<usize>,
    /// Base window for the upper bound [default: 3].
    #[arg(long)]
    ws0: Option<usize>,
    /// Kernel weight mean [default: 0].
    #[arg(long)]
    mu_w: Option<f64>,
    /// Kernel weight standard deviation [default: 0.1].
    #[arg(long)]
    sigma_w: Option<f64>,
    /// alpha0 estimator.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    cal: CalibrationFlags,
}

#[derive(Args, Debug)]
struct ObfuscateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write one plan per image here (needed for `invert`).
    #[arg(long)]
    plans: Option<PathBuf>,
    /// 64 hex digits; overrides --seed as the master key.
    #[arg(long)]
    master_seed: Option<String>,
    /// Skip calibration and use this lower bound.
    #[arg(long)]
    ws_lower: Option<usize>,
    /// Skip calibration and use this upper bound.
    #[arg(long)]
    ws_upper: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Refuse images with an alpha channel instead of dropping it.
    #[arg(long)]
    reject_alpha: bool,
    #[command(flatten)]
    cal: CalibrationFlags,
}

#[derive(Args, Debug)]
struct InvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OptimArgs {
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Maximum number of updates.
    #[arg(long)]
    steps: Option<usize>,
    /// Print the ST-Adam vs Adam comparison instead of a trajectory
    /// (oscillation profile only).
    #[arg(long)]
    compare: bool,
}

#[derive(Args, Debug)]
struct AttackArgs {
    /// Shuffled image to attack.
    #[arg(long = "in", conflicts_with = "corpus")]
    input: Option<PathBuf>,
    /// Original image, used only to score the result.
    #[arg(long, requires = "input")]
    truth: Option<PathBuf>,
    /// Write the reassembled image here.
    #[arg(long, requires = "input")]
    out: Option<PathBuf>,
    /// Shuffle and attack every PNG under this directory instead.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Window sizes (comma separated for --corpus) [default: 2].
    #[arg(long, value_delimiter = ',')]
    ws: Vec<usize>,
    #[arg(long)]
    channel: Option<usize>,
    /// Also report the keyless search space of this plan.
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Extremal,
    TableWeighted,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    PerChannel,
    SharedChannelSwap,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    StAdam,
    Adam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Quadratic,
    Rosenbrock,
    Oscillation,
}

/// A bad flag value or combination; reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Explicit flag, then config file, then default.
struct Settings {
    file: ConfigFile,
}

impl Settings {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get::<T>(key) {
            Ok(v) => Ok(v.unwrap_or(default)),
            Err(e) => Err(usage(e.to_string())),
        }
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file.get::<T>(key).map_err(|e| usage(e.to_string()))
    }

    fn pick_enum<T: ValueEnum>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.raw(key) {
            Some(raw) => T::from_str(raw, true).map_err(|_| usage(format!("bad value for {key}: {raw:?}"))),
            None => Ok(default),
        }
    }
}

fn calibration_params(s: &Settings, f: &CalibrationFlags, seed: Option<u64>) -> anyhow::Result<CalibrationParams> {
    let d = CalibrationParams::default();
    let method = match s.pick_enum(f.method, "method", MethodArg::Extremal)? {
        MethodArg::Extremal => Alpha0Method::ExtremalBound,
        MethodArg::TableWeighted => Alpha0Method::TableWeighted,
    };
    let kernel = KernelModel::new(
        s.pick(f.mu_w, "mu-w", d.kernel.mu_w)?,
        s.pick(f.sigma_w, "sigma-w", d.kernel.sigma_w)?,
    )
    .map_err(|e| usage(e.to_string()))?;
    Ok(CalibrationParams {
        target_vfe: s.pick(f.target_vfe, "target-vfe", d.target_vfe)?,
        width: s.pick(f.width, "width", d.width)?,
        height: s.pick(f.height, "height", d.height)?,
        q: s.pick(f.q, "q", d.q)?,
        d: s.pick(f.d, "d", d.d)?,
        alpha: s.pick(f.alpha, "alpha", d.alpha)?,
        kernel,
        samples: s.pick(f.samples, "samples", d.samples)?,
        seed: seed.unwrap_or(d.seed),
        ws0: s.pick(f.ws0, "ws0", d.ws0)?,
        method,
    })
}

fn write_stdout(text: &str) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_vfe(s: &Settings, a: &VfeArgs) -> anyhow::Result<u8> {
    let ws = s.pick(a.ws, "ws", 8)?;
    if ws == 0 {
        return Err(usage("--ws must be at least 1"));
    }
    let cfg = VfeConfig::new(s.pick(a.scale, "scale", 1.0)?).map_err(|e| usage(e.to_string()))?;
    let t = load_image(&a.input)?;
    let report = vfe_report(&t, ws, &cfg);
    report.write_text(io::stdout().lock())?;
    Ok(0)
}

fn cmd_calibrate(s: &Settings, a: &CalibrateArgs, seed: Option<u64>) -> anyhow::Result<u8> {
    let params = calibration_params(s, &a.cal, seed)?;
    let result = calibration::calibrate(&params)?;
    result.write_text(io::stdout().lock())?;
    if !result.feasible() {
        log::error!(
            "infeasible: lower bound {} exceeds upper bound {}",
            result.ws_lower,
            result.ws_upper
        );
        return Ok(1);
    }
    Ok(0)
}

fn cmd_table1() -> anyhow::Result<u8> {
    calibration::enumerate_induction_table().write_text(io::stdout().lock())?;
    Ok(0)
}

fn cmd_obfuscate(s: &Settings, a: &ObfuscateArgs, seed: Option<u64>, threads: usize) -> anyhow::Result<u8> {
    let lower = s.pick_opt(a.ws_lower, "ws-lower")?;
    let upper = s.pick_opt(a.ws_upper, "ws-upper")?;
    let mode = match s.pick_enum(a.mode, "mode", ModeArg::PerChannel)? {
        ModeArg::PerChannel => ShuffleMode::PerChannel,
        ModeArg::SharedChannelSwap => ShuffleMode::SharedWithChannelSwap,
    };
    let master_seed = match (s.pick_opt(a.master_seed.clone(), "master-seed")?, seed) {
        (Some(hex), _) => mixer::parse_master_seed(&hex).map_err(|e| usage(e.to_string()))?,
        (None, Some(seed)) => mixer::master_seed_from_u64(seed),
        (None, None) => {
            log::warn!("no --seed or --master-seed given; using a random key (recorded in the key file)");
            rand::random()
        }
    };
    let bounds = match (lower, upper) {
        (Some(l), Some(u)) => WindowBounds::new(l, u).map_err(|e| usage(e.to_string()))?,
        (None, None) => {
            let params = calibration_params(s, &a.cal, seed)?;
            let result = calibration::calibrate(&params)?;
            log::info!("calibrated bounds lower={} upper={}", result.ws_lower, result.ws_upper);
            if !result.feasible() {
                bail!(
                    "calibration is infeasible: lower bound {} exceeds upper bound {}",
                    result.ws_lower,
                    result.ws_upper
                );
            }
            result.bounds()
        }
        _ => return Err(usage("--ws-lower and --ws-upper must be given together")),
    };
    let mut cfg = DatasetConfig::new(master_seed, bounds);
    cfg.threads = threads;
    cfg.plans_dir = a.plans.clone();
    cfg.mode = mode;
    cfg.load = LoadOptions {
        drop_alpha: !a.reject_alpha,
    };
    let report = mixer::obfuscate_dataset(&a.input, &a.out, &cfg)?;
    write_stdout(&format!("{}\n", report.summary_line()))?;
    Ok(if report.failures.is_empty() { 0 } else { 1 })
}

fn cmd_invert(a: &InvertArgs) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let plan = ShufflePlan::from_text(&text)?;
    let t = load_image(&a.input)?;
    save_image(&mixer::invert_image(&t, &plan)?, &a.out)?;
    Ok(0)
}

fn cmd_optim(s: &Settings, a: &OptimArgs, seed: Option<u64>) -> anyhow::Result<u8> {
    let profile = s.pick_enum(a.profile, "profile", ProfileArg::Quadratic)?;
    let optimizer = match s.pick_enum(a.optimizer, "optimizer", OptimizerArg::StAdam)? {
        OptimizerArg::StAdam => Optimizer::StAdam,
        OptimizerArg::Adam => Optimizer::Adam,
    };
    let osc = optim::OscillationProfile::default();
    let default_eta = match profile {
        ProfileArg::Oscillation => osc.eta,
        _ => 0.01,
    };
    let params = StAdamParams {
        eta: s.pick(a.eta, "eta", default_eta)?,
        beta: s.pick(a.beta, "beta", 0.9)?,
        gamma: s.pick(a.gamma, "gamma", 0.999)?,
        epsilon: s.pick(a.eps, "eps", 1e-8)?,
        weight_decay: s.pick(a.weight_decay, "weight-decay", 0.0)?,
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let seed = seed.unwrap_or(42);
    let default_steps = match profile {
        ProfileArg::Quadratic => 5_000,
        ProfileArg::Rosenbrock => 50_000,
        ProfileArg::Oscillation => osc.steps,
    };
    let steps = s.pick(a.steps, "steps", default_steps)?;

    if a.compare {
        if !matches!(profile, ProfileArg::Oscillation) {
            return Err(usage("--compare needs --profile oscillation"));
        }
        let prof = optim::OscillationProfile {
            eta: params.eta,
            steps,
            ..osc
        };
        write_stdout(&optim::oscillation_benchmark_with(seed, prof)?.to_text())?;
        return Ok(0);
    }
    let (mut objective, w0, tol): (Box<dyn Objective>, Vec<f64>, f64) = match profile {
        ProfileArg::Quadratic => (Box::new(optim::Quadratic::isotropic(2)), vec![5.0, 5.0], 1e-3),
        ProfileArg::Rosenbrock => (Box::new(optim::Rosenbrock), vec![-1.2, 1.0], 0.0),
        ProfileArg::Oscillation => (Box::new(osc.objective(seed)?), vec![osc.start; osc.dim], 0.0),
    };
    let trajectory = optim::optimize(objective.as_mut(), &w0, optimizer, &params, StopRule { max_iters: steps, tol })?;
    write_stdout(&trajectory.to_csv())?;
    Ok(0)
}

fn cmd_attack(s: &Settings, a: &AttackArgs, seed: Option<u64>, threads: usize) -> anyhow::Result<u8> {
    let channel = s.pick(a.channel, "channel", 0)?;
    let ws_list = if a.ws.is_empty() { vec![2] } else { a.ws.clone() };
    if ws_list.iter().any(|&w| w == 0 || w > vismix::attack::MAX_ATTACK_WS) {
        return Err(usage(format!(
            "--ws must be between 1 and {}",
            vismix::attack::MAX_ATTACK_WS
        )));
    }
    if threads > 1 {
        log::debug!("attack runs single-threaded; --threads ignored");
    }
    let mut code = 0;
    if let Some(plan_path) = &a.plan {
        let plan = ShufflePlan::from_text(&std::fs::read_to_string(plan_path)?)?;
        write_stdout(&format!("{}\n", SearchSpaceEstimate::for_plan(&plan).to_text()))?;
    }
    match (&a.input, &a.corpus) {
        (Some(input), None) => {
            if ws_list.len() != 1 {
                return Err(usage("--in takes a single --ws"));
            }
            let shuffled = load_image(input)?;
            let truth = a.truth.as_deref().map(load_image).transpose()?;
            let (candidate, report) = min_vfe_attack(&shuffled, ws_list[0], channel, truth.as_ref())?;
            if let Some(out) = &a.out {
                save_image(&candidate, out)?;
            }
            write_stdout(&format!("{}\n", report.to_text()))?;
        }
        (None, Some(corpus)) => {
            let sweep = attack_sweep(corpus, &ws_list, channel, seed.unwrap_or(0))?;
            write_stdout(&sweep.to_text())?;
            for (path, err) in &sweep.failures {
                log::error!("{}: {err}", path.display());
            }
            if !sweep.failures.is_empty() {
                code = 1;
            }
        }
        (None, None) if a.plan.is_some() => {}
        _ => return Err(usage("attack needs --in, --corpus or --plan")),
    }
    Ok(code)
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let settings = Settings { file };
    let seed = settings.pick_opt(cli.seed, "seed")?;
    let threads = settings.pick(cli.threads, "threads", 1)?;
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    match &cli.command {
        Command::Vfe(a) => cmd_vfe(&settings, a),
        Command::Calibrate(a) => cmd_calibrate(&settings, a, seed),
        Command::Table1 => cmd_table1(),
        Command::Obfuscate(a) => cmd_obfuscate(&settings, a, seed, threads),
        Command::Invert(a) => cmd_invert(a),
        Command::OptimBench(a) => cmd_optim(&settings, a, seed),
        Command::Attack(a) => cmd_attack(&settings, a, seed, threads),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
