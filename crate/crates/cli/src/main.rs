//! `crowdnav` command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failure or replay divergence,
//! 2 on configuration errors (including a missing checkpoint).

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crowdnav::config::{resume_snapshot, EgoKind, RunConfig};
use crowdnav::evalbench::{
    compute_metrics, density_sweep, raw_csv, run_episode, summary_csv, EgoPolicy, MetricsRow,
};
use crowdnav::learn::{Checkpoint, TrainLogRow, Trainer};
use crowdnav::trace::{replay, ReplayReport, Trace};
use crowdnav::world::sample_episode;
use crowdnav::write_atomic;

#[derive(Parser)]
#[command(name = "crowdnav", version, about = "Crowd-navigation simulator, trainer and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file of `section.key = value` settings layered over the defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set shaping.mode=pss_only`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// checkpoint, orca, sfm or random (default: run.ego).
        #[arg(long)]
        ego: Option<EgoKind>,
        /// Pedestrian count (default: run.n).
        #[arg(long)]
        n: Option<usize>,
        /// Episode seed (default: run.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint for `--ego checkpoint` (default: <output.dir>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Trace path (default: <output.dir>/trace_<ego>_n<N>_s<seed>.jsonl).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train a policy, writing checkpoints and the training log.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Continue from this checkpoint; its config must match apart from
        /// train.total_steps and output.dir.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate an ego policy over the density sweep.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// checkpoint, orca, sfm or random.
        #[arg(long)]
        ego: EgoKind,
        /// Evaluate a single density instead of sweep.densities.
        #[arg(long)]
        n: Option<usize>,
        /// Checkpoint for `--ego checkpoint` (default: <output.dir>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Re-simulate a trace and check every state bit for bit.
    Replay {
        /// Trace file written by `run`.
        trace: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn config(e: impl Display) -> Self {
        Failure::Config(e.to_string())
    }

    fn runtime(e: impl Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(args: &ConfigArgs, extra: Vec<String>) -> Result<RunConfig, Failure> {
    let mut overrides = args.overrides.clone();
    overrides.extend(extra);
    RunConfig::load(args.config.as_deref(), &overrides).map_err(Failure::config)
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    }
    write_atomic(path, bytes).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    if !path.exists() {
        return Err(Failure::Config(format!("checkpoint {} not found", path.display())));
    }
    Checkpoint::load(path).map_err(Failure::config)
}

fn ego_policy(kind: EgoKind, cfg: &RunConfig, checkpoint: Option<PathBuf>) -> Result<EgoPolicy, Failure> {
    Ok(match kind {
        EgoKind::Orca => EgoPolicy::Orca(cfg.orca),
        EgoKind::Sfm => EgoPolicy::Sfm(cfg.sfm),
        EgoKind::Random => EgoPolicy::Random,
        EgoKind::Checkpoint => {
            let path = checkpoint.unwrap_or_else(|| Path::new(&cfg.output.dir).join("checkpoint.json"));
            let ck = load_checkpoint(&path)?;
            let expected = cfg.encoder.observation_len();
            if ck.state.params.obs_dim() != expected {
                return Err(Failure::Config(format!(
                    "checkpoint expects observations of length {}, config produces {expected}",
                    ck.state.params.obs_dim()
                )));
            }
            EgoPolicy::Learned(ck.policy())
        }
    })
}

fn cmd_run(
    args: ConfigArgs,
    ego: Option<EgoKind>,
    n: Option<usize>,
    seed: Option<u64>,
    checkpoint: Option<PathBuf>,
    trace_path: Option<PathBuf>,
) -> CmdResult {
    let mut extra = Vec::new();
    if let Some(e) = ego {
        extra.push(format!("run.ego=\"{}\"", ego_name(e)));
    }
    if let Some(n) = n {
        extra.push(format!("run.n={n}"));
    }
    if let Some(s) = seed {
        extra.push(format!("run.seed={s}"));
    }
    let cfg = load_config(&args, extra)?;
    let policy = ego_policy(cfg.run.ego, &cfg, checkpoint)?;
    let mut env = cfg.env_config();
    env.scenario.n_min = cfg.run.n;
    env.scenario.n_max = cfg.run.n;
    let seed = cfg.run.seed;
    let world = sample_episode(&env.scenario, seed).map_err(Failure::runtime)?;
    let record = run_episode(&policy, world, &env, seed, true).map_err(Failure::runtime)?;
    let trace = Trace::new(&cfg, seed, &record).map_err(Failure::config)?;
    let path = trace_path.unwrap_or_else(|| {
        Path::new(&cfg.output.dir).join(format!("trace_{}_n{}_s{}.jsonl", record.method, record.n, seed))
    });
    write_file(&path, trace.to_jsonl().as_bytes())?;
    println!(
        "outcome={} steps={} collision_steps={} freeze_fraction={} final_goal_distance={:.4} ext_return={:.4} trace={}",
        record.outcome.as_str(),
        record.steps_taken,
        record.collision_steps,
        record.freeze_fraction,
        record.final_goal_distance,
        record.ext_return,
        path.display()
    );
    Ok(())
}

fn ego_name(e: EgoKind) -> &'static str {
    match e {
        EgoKind::Checkpoint => "checkpoint",
        EgoKind::Orca => "orca",
        EgoKind::Sfm => "sfm",
        EgoKind::Random => "random",
    }
}

fn cmd_train(args: ConfigArgs, resume: Option<PathBuf>) -> CmdResult {
    let cfg = load_config(&args, Vec::new())?;
    let flat = cfg.to_flat_string().map_err(Failure::config)?;
    let out = PathBuf::from(&cfg.output.dir);
    let ck_path = out.join("checkpoint.json");
    let log_path = out.join("train_log.csv");

    let mut log = String::new();
    let mut trainer = match resume {
        Some(path) => {
            let ck = load_checkpoint(&path)?;
            let (was, now) = (resume_snapshot(&ck.config), resume_snapshot(&flat));
            if was != now {
                let diff: Vec<&str> = now.lines().filter(|l| !was.lines().any(|w| w == *l)).collect();
                return Err(Failure::Config(format!(
                    "config differs from the checkpoint's snapshot: {}",
                    diff.join("; ")
                )));
            }
            // Rows written after the checkpoint are redone.
            let kept = ck.state.step;
            log = fs::read_to_string(&log_path)
                .unwrap_or_default()
                .lines()
                .filter(|l| l.split(',').next().and_then(|s| s.parse::<u64>().ok()).map_or(true, |s| s <= kept))
                .map(|l| format!("{l}\n"))
                .collect();
            Trainer::resume(cfg.env_config(), cfg.train, ck.state).map_err(Failure::config)?
        }
        None => Trainer::new(cfg.env_config(), cfg.train).map_err(Failure::config)?,
    };
    if log.is_empty() {
        log = format!("{}\n", TrainLogRow::CSV_HEADER);
    }

    write_file(&out.join("config.toml"), flat.as_bytes())?;
    let save = |trainer: &Trainer| -> CmdResult {
        Checkpoint::new(flat.clone(), trainer.state.clone())
            .save(&ck_path)
            .map_err(Failure::runtime)
    };
    while !trainer.is_finished() {
        let row = trainer.run_iteration().map_err(Failure::runtime)?;
        log.push_str(&row.csv_line());
        log.push('\n');
        write_file(&log_path, log.as_bytes())?;
        eprintln!(
            "step {:>8}  ext {:>8.3}  total {:>8.3}  safe {:.2}  goal {:.2}  beta {:.3}",
            row.step, row.mean_ext_return, row.mean_total_return, row.safe_success_rate, row.goal_rate, row.beta
        );
        let every = cfg.train.checkpoint_every;
        if every > 0 && row.iteration % every == 0 {
            save(&trainer)?;
        }
    }
    save(&trainer)?;
    println!(
        "trained to step {} ({} iterations); checkpoint={} log={}",
        trainer.state.step,
        trainer.state.iteration,
        ck_path.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_sweep(args: ConfigArgs, ego: EgoKind, n: Option<usize>, checkpoint: Option<PathBuf>) -> CmdResult {
    let extra = n.map(|n| vec![format!("sweep.densities=[{n}]")]).unwrap_or_default();
    let cfg = load_config(&args, extra)?;
    let policy = ego_policy(ego, &cfg, checkpoint)?;
    let records = density_sweep(&policy, &cfg.env_config(), &cfg.sweep).map_err(Failure::runtime)?;
    let rows = compute_metrics(&records).map_err(Failure::runtime)?;
    let out = PathBuf::from(&cfg.output.dir);
    let name = ego_name(ego);
    let raw_path = out.join(format!("sweep_{name}_raw.csv"));
    let summary_path = out.join(format!("sweep_{name}_summary.csv"));
    write_file(&raw_path, &raw_csv(&records).map_err(Failure::runtime)?)?;
    write_file(&summary_path, &summary_csv(&rows).map_err(Failure::runtime)?)?;
    print_summary(&rows);
    println!("raw={} summary={}", raw_path.display(), summary_path.display());
    Ok(())
}

fn print_summary(rows: &[MetricsRow]) {
    println!(
        "{:<10} {:>3} {:>14} {:>10} {:>9} {:>8} {:>6}",
        "method", "N", "safe_success", "coll/ep", "freezing", "timeout", "eps"
    );
    for r in rows {
        println!(
            "{:<10} {:>3} {:>6.3} ± {:<5.3} {:>10.3} {:>9.3} {:>8.3} {:>6}",
            r.method,
            r.n,
            r.safe_success_mean,
            r.safe_success_std,
            r.collisions_per_ep_mean,
            r.freezing_rate_mean,
            r.timeout_rate,
            r.n_episodes
        );
    }
}

fn cmd_replay(path: PathBuf) -> CmdResult {
    let text = fs::read_to_string(&path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    let trace = Trace::parse(&text).map_err(Failure::runtime)?;
    match replay(&trace).map_err(Failure::runtime)? {
        ReplayReport::Match { steps } => {
            println!("replay ok: {steps} states match bit-exactly");
            Ok(())
        }
        ReplayReport::Diverged(d) => Err(Failure::Runtime(format!(
            "replay diverged at step {}\n  recorded:   {}\n  recomputed: {}",
            d.step, d.recorded, d.recomputed
        ))),
    }
}

fn configure_threads() -> CmdResult {
    let Ok(value) = std::env::var("CROWDNAV_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("CROWDNAV_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::runtime)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run {
            cfg,
            ego,
            n,
            seed,
            checkpoint,
            trace,
        } => cmd_run(cfg, ego, n, seed, checkpoint, trace),
        Command::Train { cfg, resume } => cmd_train(cfg, resume),
        Command::Sweep { cfg, ego, n, checkpoint } => cmd_sweep(cfg, ego, n, checkpoint),
        Command::Replay { trace } => cmd_replay(trace),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}
