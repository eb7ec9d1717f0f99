use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use leader_harness::eval::{run_evaluation, EvalSettings, Policy};
use leader_harness::export::{export_attention_snapshot, write_snapshot};
use leader_harness::logs::{load_logs, write_logs};
use leader_harness::metrics::{compute_metrics, write_reports};
use leader_harness::RunConfig;
use leader_neural::Checkpoint;
use leader_train::{train, CurveRecord, TrainError, TrainSink};

#[derive(Parser)]
#[command(name = "leader", about = "Importance-sampling planning with learned attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Leader,
    Uniform,
    Ttc,
}

#[derive(Subcommand)]
enum Command {
    /// Train the attention generator and critic.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides [training] output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a policy on every configured world.
    Eval {
        config: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        /// Episodes per world.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides [evaluation] checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides [evaluation] output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from an episode log.
    Replay { log: PathBuf },
    /// Write belief/attention plot data for one step of a logged episode.
    ExportAttention {
        log: PathBuf,
        #[arg(long)]
        step: usize,
        /// Index of the episode within the log.
        #[arg(long, default_value_t = 0)]
        episode: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct FileSink {
    curve: csv::Writer<File>,
    dir: PathBuf,
}

impl TrainSink for FileSink {
    fn record(&mut self, record: &CurveRecord) -> Result<(), TrainError> {
        self.curve.serialize(record).map_err(|e| TrainError::Sink(e.to_string()))?;
        self.curve.flush().map_err(|e| TrainError::Sink(e.to_string()))
    }

    fn checkpoint(&mut self, step: usize, checkpoint: &Checkpoint) -> Result<(), TrainError> {
        checkpoint
            .save(&self.dir.join(format!("checkpoint_{step:08}.ckpt")))
            .map_err(|e| TrainError::Sink(e.to_string()))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run_train(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mut train_cfg = cfg.training.config.clone();
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    let dir = out.unwrap_or_else(|| cfg.resolve(&cfg.training.output_dir));
    create_dir(&dir)?;
    let worlds = cfg.worlds()?;
    let curve_path = dir.join("learning_curve.csv");
    let mut sink = FileSink {
        curve: csv::Writer::from_path(&curve_path).with_context(|| format!("creating {}", curve_path.display()))?,
        dir: dir.clone(),
    };
    let output = train(&worlds, &train_cfg, cfg.networks, &mut sink)?;
    let final_path = dir.join("final.ckpt");
    output.checkpoint(train_cfg.seed).save(&final_path)?;
    println!(
        "trained {} steps over {} episodes ({} critic, {} generator updates); wrote {} and {}",
        output.steps,
        output.episodes,
        output.learner.critic_steps(),
        output.learner.generator_steps(),
        curve_path.display(),
        final_path.display()
    );
    Ok(())
}

fn run_eval(
    config: &Path,
    policy: PolicyArg,
    episodes: Option<usize>,
    seed: Option<u64>,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let policy = match policy {
        PolicyArg::Uniform => Policy::Uniform,
        PolicyArg::Ttc => Policy::Ttc,
        PolicyArg::Leader => {
            let path = checkpoint
                .or_else(|| cfg.evaluation.checkpoint.as_ref().map(|p| cfg.resolve(p)))
                .context("the leader policy needs a checkpoint (--checkpoint or [evaluation] checkpoint)")?;
            let ckpt = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            Policy::Leader(Box::new(ckpt))
        }
    };
    let settings = EvalSettings {
        episodes: episodes.unwrap_or(cfg.evaluation.episodes),
        seed: seed.unwrap_or(cfg.evaluation.seed),
        max_episode_steps: cfg.evaluation.max_episode_steps,
        planner: cfg.planner,
        workers: cfg.evaluation.workers,
    };
    let dir = out.unwrap_or_else(|| cfg.resolve(&cfg.evaluation.output_dir));
    create_dir(&dir)?;
    let worlds = cfg.worlds()?;
    let result = run_evaluation(&worlds, &policy, &settings)?;
    let name = policy.name();
    let metrics_path = dir.join(format!("{name}_metrics.csv"));
    let log_path = dir.join(format!("{name}_episodes.jsonl"));
    write_reports(File::create(&metrics_path)?, &result.reports)?;
    let mut w = BufWriter::new(File::create(&log_path)?);
    write_logs(&mut w, &result.logs)?;
    w.flush()?;
    write_reports(std::io::stdout().lock(), &result.reports)?;
    eprintln!("wrote {} and {}", metrics_path.display(), log_path.display());
    Ok(())
}

fn run_replay(log: &Path) -> Result<()> {
    let logs = load_logs(log)?;
    if logs.is_empty() {
        bail!("{} holds no episodes", log.display());
    }
    let policy = logs[0].header.policy.clone();
    let mut maps: Vec<String> = logs.iter().map(|l| l.header.map.clone()).collect();
    maps.dedup();
    let mut reports = Vec::new();
    for m in &maps {
        let mine: Vec<_> = logs.iter().filter(|l| &l.header.map == m).cloned().collect();
        reports.push(compute_metrics(&mine, m, &policy)?);
    }
    reports.push(compute_metrics(&logs, "all", &policy)?);
    write_reports(std::io::stdout().lock(), &reports)?;
    Ok(())
}

fn run_export(log: &Path, step: usize, episode: usize, out: Option<PathBuf>) -> Result<()> {
    let logs = load_logs(log)?;
    let Some(ep) = logs.get(episode) else {
        bail!("episode {episode} is outside the log ({} episodes)", logs.len());
    };
    let records = export_attention_snapshot(ep, step)?;
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(&path)?);
            write_snapshot(&mut w, &records)?;
            w.flush()?;
        }
        None => write_snapshot(std::io::stdout().lock(), &records)?,
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, seed, out } => run_train(&config, seed, out),
        Command::Eval {
            config,
            policy,
            episodes,
            seed,
            checkpoint,
            out,
        } => run_eval(&config, policy, episodes, seed, checkpoint, out),
        Command::Replay { log } => run_replay(&log),
        Command::ExportAttention { log, step, episode, out } => run_export(&log, step, episode, out),
    }
}
