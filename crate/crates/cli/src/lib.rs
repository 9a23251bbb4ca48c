//! The `cari` command line: training, evaluation, sweeps, archetype
//! comparison, replay verification and curve export over one experiment
//! manifest.
//!
//! Every command is a pure function of its inputs and seed: rerunning it
//! reproduces its output files byte for byte.

use anyhow::Context;
use cari_core::config::{ExperimentConfig, ExperimentError};
use cari_core::env::{Replay, Scenario};
use cari_core::eval::{
    binned_curve, compare_archetypes, continuum_sweep, episode_replay, evaluate, write_curve_json, write_records_csv,
    write_report_csv, write_sweep_csv, Agent, ArchetypeAgents, EvalError, EvalSetup, MetricsRecord, SweepMetric, SweepRow,
};
use cari_core::learner::{train, TrainError, TrainLogWriter, TrainMode, TrainRun};
use cari_core::nn::{Checkpoint, CheckpointError};
use cari_core::reward::{archetype_config, ArchetypeName, Coefficient, RewardConfig};
use clap::{Args, Parser, Subcommand};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CARI_OUT";
const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "cari", version, about = "Train and evaluate reward-conditioned play-style agents")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment manifest (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the command's section.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `$CARI_OUT/<command>` or `runs/<command>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for training rounds and evaluation games.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a reward-conditioned model, or a baseline with --archetype.
    Train {
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        archetype: Option<ArchetypeName>,
        /// Episodes between intermediate checkpoints.
        #[arg(long, default_value_t = 500)]
        checkpoint_every: u64,
    },
    /// Evaluate a checkpoint (or the Contact heuristic) on fresh games.
    Eval {
        /// Model to evaluate; the Contact heuristic when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Reward coefficients given to the agent.
        #[arg(long)]
        archetype: Option<ArchetypeName>,
        #[arg(long)]
        games: Option<usize>,
        /// Also write one replay file per game.
        #[arg(long)]
        replays: bool,
    },
    /// Play games with freshly drawn coefficients and record per-game metrics.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        games: Option<usize>,
        #[arg(long)]
        widen: Option<f64>,
    },
    /// Evaluate every archetype preset on one model or a set of baselines.
    Compare {
        /// Reward-conditioned model queried with each preset.
        #[arg(long, conflicts_with = "baselines", required_unless_present = "baselines")]
        checkpoint: Option<PathBuf>,
        /// Directory holding one `<Archetype>.ckpt` per preset.
        #[arg(long)]
        baselines: Option<PathBuf>,
        #[arg(long)]
        games: Option<usize>,
    },
    /// Re-execute a replay file and verify its final-state digest.
    Replay { file: PathBuf },
    /// Bin sweep rows into per-coefficient curves.
    ExportCurves {
        /// `sweep.jsonl` written by the sweep command.
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Compare { .. } => "compare",
            Command::Replay { .. } => "replay",
            Command::ExportCurves { .. } => "export-curves",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Divergence(String),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io { .. } => CliError::Other(e.into()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Checkpoint(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Shape { .. } => CliError::Checkpoint(e.to_string()),
            EvalError::NoGames | EvalError::Scenario(_) => CliError::Validation(e.to_string()),
            _ => CliError::Other(e.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Files written by a command.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub out_dir: Option<PathBuf>,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let mut cfg = match &cli.common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(w) = cli.common.workers {
        if w == 0 {
            return Err(CliError::Validation("--workers must be at least 1".into()));
        }
        cfg.training.workers = w;
    }
    let threads = cli.common.workers.unwrap_or(cfg.training.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building the worker pool")?;
    let out_dir = || -> PathBuf {
        cli.common.out.clone().unwrap_or_else(|| {
            let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_OUT_ROOT.into());
            root.join(cli.command.name())
        })
    };
    pool.install(|| match &cli.command {
        Command::Train {
            episodes,
            archetype,
            checkpoint_every,
        } => {
            if let Some(s) = cli.common.seed {
                cfg.training.seed = s;
            }
            if let Some(e) = episodes {
                cfg.training.episodes = *e;
            }
            cfg.validate()?;
            cmd_train(&cfg, *archetype, *checkpoint_every, &out_dir())
        }
        Command::Eval {
            checkpoint,
            archetype,
            games,
            replays,
        } => {
            apply_eval_overrides(&mut cfg, cli.common.seed, *games)?;
            cmd_eval(&cfg, checkpoint.as_deref(), *archetype, *replays, &out_dir())
        }
        Command::Sweep {
            checkpoint,
            games,
            widen,
        } => {
            if let Some(g) = games {
                cfg.evaluation.sweep_games = *g;
            }
            if let Some(w) = widen {
                cfg.evaluation.widen = *w;
            }
            apply_eval_overrides(&mut cfg, cli.common.seed, None)?;
            cmd_sweep(&cfg, checkpoint, &out_dir())
        }
        Command::Compare {
            checkpoint,
            baselines,
            games,
        } => {
            apply_eval_overrides(&mut cfg, cli.common.seed, *games)?;
            cmd_compare(&cfg, checkpoint.as_deref(), baselines.as_deref(), &out_dir())
        }
        Command::Replay { file } => cmd_replay(file),
        Command::ExportCurves { sweep, bins } => {
            if let Some(b) = bins {
                cfg.evaluation.bins = *b;
            }
            cfg.validate()?;
            cmd_export_curves(&cfg, sweep, &out_dir())
        }
    })
}

fn apply_eval_overrides(cfg: &mut ExperimentConfig, seed: Option<u64>, games: Option<usize>) -> CliResult<()> {
    if let Some(s) = seed {
        cfg.evaluation.seed = s;
    }
    if let Some(g) = games {
        cfg.evaluation.games = g;
    }
    cfg.validate()?;
    Ok(())
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> CliResult<PathBuf> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(path.to_path_buf())
}

fn cmd_train(cfg: &ExperimentConfig, archetype: Option<ArchetypeName>, every: u64, out: &Path) -> CliResult<Outcome> {
    create_out(out)?;
    let run = TrainRun {
        scenario: Arc::new(cfg.scenario.clone()),
        reward_space: cfg.reward.clone(),
        mode: archetype.map_or(TrainMode::Cari, TrainMode::Archetype),
        config: cfg.training.clone(),
    };
    let mut files = vec![write_file(&out.join("config.toml"), |w| {
        Ok(w.write_all(cfg.to_toml_string().as_bytes())?)
    })?];
    let log_path = out.join("train_log.csv");
    let mut log = TrainLogWriter::create(&log_path).context("creating the training log")?;
    let ckpt_path = out.join("checkpoint.ckpt");
    let mut io_error: Option<anyhow::Error> = None;
    let mut next_ckpt = every.max(1);
    let result = train(&run, |p| {
        if io_error.is_some() {
            return;
        }
        if let Err(e) = log.append(p.round_logs) {
            io_error = Some(e.into());
            return;
        }
        if p.episodes_done >= next_ckpt {
            next_ckpt += every.max(1);
            let partial = Checkpoint {
                model: p.model.clone(),
                meta: interim_meta(&run, p.episodes_done),
            };
            if let Err(e) = partial.save(&ckpt_path) {
                io_error = Some(e.into());
            }
            log::info!("episode {} update {}: checkpoint written", p.episodes_done, p.updates);
        }
    });
    if let Some(e) = io_error {
        return Err(CliError::Other(e));
    }
    let result = result.map_err(|e| match e {
        TrainError::Divergence { .. } => CliError::Divergence(e.to_string()),
        TrainError::Config(_) | TrainError::Scenario(_) | TrainError::Replay(_) => CliError::Validation(e.to_string()),
        TrainError::Workers(_) => CliError::Other(e.into()),
    })?;
    files.push(log_path);
    let model_path = out.join("model.ckpt");
    result.checkpoint(&run).save(&model_path)?;
    files.push(model_path);
    let wins = result.logs.iter().filter(|l| l.outcome == "win").count();
    Ok(Outcome {
        out_dir: Some(out.to_path_buf()),
        files,
        summary: format!(
            "trained {} ({} episodes, {} updates, {} env steps, training win rate {:.3}, {} failed episodes)",
            run.mode.label(),
            result.logs.len(),
            result.updates,
            result.env_steps,
            wins as f64 / result.logs.len().max(1) as f64,
            result.worker_failures
        ),
    })
}

fn interim_meta(run: &TrainRun, episodes: u64) -> cari_core::nn::CheckpointMeta {
    cari_core::nn::CheckpointMeta {
        label: run.mode.label(),
        conditioned: run.mode.conditioned(),
        reward_space: run.reward_space.clone(),
        reward_config: match run.mode {
            TrainMode::Cari => None,
            TrainMode::Archetype(a) => Some(archetype_config(a, &run.reward_space)),
        },
        roster_hash: run.scenario.roster_hash(),
        seed: run.config.seed,
        episodes,
        env_steps: 0,
    }
}

/// Loads a checkpoint and checks it against the experiment's scenario.
pub fn load_checkpoint(path: &Path, scenario: &Scenario) -> CliResult<Checkpoint> {
    let ckpt = Checkpoint::load(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let roster = scenario.roster_hash();
    if ckpt.meta.roster_hash != roster {
        return Err(CliError::Checkpoint(format!(
            "{} was trained on roster {}, the configuration uses {}",
            path.display(),
            ckpt.meta.roster_hash,
            roster
        )));
    }
    Ok(ckpt)
}

fn model_setup(cfg: &ExperimentConfig, ckpt: &Checkpoint) -> EvalSetup {
    if ckpt.meta.reward_space != cfg.reward {
        log::warn!("using the reward intervals stored in the checkpoint, not those of the configuration");
    }
    EvalSetup {
        scenario: Arc::new(cfg.scenario.clone()),
        reward_space: ckpt.meta.reward_space.clone(),
    }
}

fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    archetype: Option<ArchetypeName>,
    replays: bool,
    out: &Path,
) -> CliResult<Outcome> {
    let ckpt = checkpoint.map(|p| load_checkpoint(p, &cfg.scenario)).transpose()?;
    let (setup, agent, label) = match &ckpt {
        Some(c) => (
            model_setup(cfg, c),
            Agent::Model {
                model: &c.model,
                conditioned: c.meta.conditioned,
            },
            c.meta.label.clone(),
        ),
        None => (
            EvalSetup {
                scenario: Arc::new(cfg.scenario.clone()),
                reward_space: cfg.reward.clone(),
            },
            Agent::Heuristic,
            "heuristic".to_string(),
        ),
    };
    let config: RewardConfig = match (archetype, ckpt.as_ref().and_then(|c| c.meta.reward_config)) {
        (Some(a), _) => archetype_config(a, &setup.reward_space),
        (None, Some(fixed)) => fixed,
        (None, None) => archetype_config(ArchetypeName::WinOnly, &setup.reward_space),
    };
    let games = cfg.evaluation.games;
    let seed = cfg.evaluation.seed;
    let result = evaluate(&setup, agent, config, games, seed)?;
    create_out(out)?;
    let mut files = vec![write_file(&out.join("records.csv"), |w| {
        Ok(write_records_csv(w, &result.records, &result.aggregate)?)
    })?];
    files.push(write_file(&out.join("summary.json"), |w| {
        let summary = serde_json::json!({
            "agent": label,
            "reward_config": config,
            "games": games,
            "seed": seed,
            "aggregate": result.aggregate,
        });
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        Ok(writeln!(w)?)
    })?);
    if replays {
        let dir = out.join("replays");
        create_out(&dir)?;
        for i in 0..games as u64 {
            let ep = setup
                .play(agent, config, EvalSetup::game_seed(seed, i))
                .map_err(|e| CliError::Other(e.into()))?;
            let path = dir.join(format!("game_{i:05}.json"));
            episode_replay(&ep, Some(config))
                .save(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            files.push(path);
        }
    }
    let a = &result.aggregate;
    Ok(Outcome {
        out_dir: Some(out.to_path_buf()),
        files,
        summary: format!(
            "{label}: {games} games, stabs {:.2}, shots {:.2}, win rate {:.3}, loss rate {:.3}",
            a.stabs, a.shots, a.win_rate, a.loss_rate
        ),
    })
}

fn conditioned_checkpoint(cfg: &ExperimentConfig, path: &Path) -> CliResult<Checkpoint> {
    let ckpt = load_checkpoint(path, &cfg.scenario)?;
    if !ckpt.meta.conditioned {
        return Err(CliError::Checkpoint(format!(
            "{} holds the fixed-reward model `{}`; a reward-conditioned model is required",
            path.display(),
            ckpt.meta.label
        )));
    }
    Ok(ckpt)
}

fn cmd_sweep(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> CliResult<Outcome> {
    let ckpt = conditioned_checkpoint(cfg, checkpoint)?;
    let setup = model_setup(cfg, &ckpt);
    let e = &cfg.evaluation;
    let rows = continuum_sweep(&setup, &ckpt.model, e.sweep_games, e.seed, e.widen)?;
    create_out(out)?;
    let files = vec![
        write_file(&out.join("sweep.csv"), |w| Ok(write_sweep_csv(w, &rows)?))?,
        write_file(&out.join("sweep.jsonl"), |w| {
            for r in &rows {
                serde_json::to_writer(&mut *w, r)?;
                writeln!(w)?;
            }
            Ok(())
        })?,
    ];
    Ok(Outcome {
        out_dir: Some(out.to_path_buf()),
        files,
        summary: format!("{} sweep games (widen {})", rows.len(), e.widen),
    })
}

fn cmd_compare(cfg: &ExperimentConfig, checkpoint: Option<&Path>, baselines: Option<&Path>, out: &Path) -> CliResult<Outcome> {
    let e = &cfg.evaluation;
    let report = match (checkpoint, baselines) {
        (Some(p), _) => {
            let ckpt = conditioned_checkpoint(cfg, p)?;
            let setup = model_setup(cfg, &ckpt);
            compare_archetypes(&setup, &ArchetypeAgents::Cari(&ckpt.model), e.games, e.seed)?
        }
        (None, Some(dir)) => {
            let mut ckpts = Vec::new();
            for name in ArchetypeName::ALL {
                let ckpt = load_checkpoint(&dir.join(format!("{name}.ckpt")), &cfg.scenario)?;
                if ckpt.meta.conditioned {
                    log::warn!("baseline {name} is a reward-conditioned model; its reward slot stays empty");
                }
                ckpts.push((name, ckpt));
            }
            let setup = EvalSetup {
                scenario: Arc::new(cfg.scenario.clone()),
                reward_space: cfg.reward.clone(),
            };
            let models = ckpts.iter().map(|(n, c)| (*n, &c.model)).collect();
            compare_archetypes(&setup, &ArchetypeAgents::Baselines(models), e.games, e.seed)?
        }
        (None, None) => return Err(CliError::Validation("compare needs --checkpoint or --baselines".into())),
    };
    create_out(out)?;
    let files = vec![
        write_file(&out.join("report.csv"), |w| Ok(write_report_csv(w, &report)?))?,
        write_file(&out.join("report.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &report)?;
            Ok(writeln!(w)?)
        })?,
    ];
    let wins: Vec<String> = report
        .columns
        .iter()
        .map(|c| format!("{} {:.2}", c.archetype, c.aggregate.win_rate))
        .collect();
    Ok(Outcome {
        out_dir: Some(out.to_path_buf()),
        files,
        summary: format!("{}: {} games per archetype; win rates: {}", report.agent, report.games, wins.join(", ")),
    })
}

fn cmd_replay(file: &Path) -> CliResult<Outcome> {
    let replay = Replay::load(file).map_err(|e| CliError::Other(anyhow::anyhow!("{}: {e}", file.display())))?;
    let run = replay
        .verify()
        .map_err(|e| CliError::Other(anyhow::anyhow!("{}: {e}", file.display())))?;
    let log: Vec<_> = run.steps.iter().flat_map(|(_, o)| o.log.iter().cloned()).collect();
    let m = MetricsRecord::from_game(0, &run.initial, &log, &run.final_state);
    Ok(Outcome {
        out_dir: None,
        files: Vec::new(),
        summary: format!(
            "replay verified: seed {}, {} actions, {} turns, outcome {}, stabs {}, shots {}, digest {}",
            replay.header.seed,
            replay.actions.len(),
            m.turns,
            m.outcome.as_str(),
            m.stabs,
            m.shots,
            replay.final_digest
        ),
    })
}

/// Reads rows written by the sweep command.
pub fn read_sweep_rows(path: &Path) -> CliResult<Vec<SweepRow>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_export_curves(cfg: &ExperimentConfig, sweep: &Path, out: &Path) -> CliResult<Outcome> {
    let rows = read_sweep_rows(sweep)?;
    if rows.is_empty() {
        return Err(CliError::Validation(format!("{} holds no sweep rows", sweep.display())));
    }
    let mut curves = Vec::new();
    let mut lines = Vec::new();
    for c in Coefficient::ALL {
        let metric = SweepMetric::paired_with(c);
        let l = cfg.reward.interval(c);
        let curve = binned_curve(&rows, c, metric, cfg.evaluation.bins, (l.min(), l.max()))
            .map_err(|e| CliError::Validation(e.to_string()))?;
        lines.push(match curve.spearman() {
            Some(rho) => format!("{c} vs {metric}: spearman {rho:.3}"),
            None => format!("{c} vs {metric}: spearman undefined"),
        });
        curves.push(curve);
    }
    create_out(out)?;
    let files = vec![write_file(&out.join("curves.json"), |w| Ok(write_curve_json(w, &curves)?))?];
    Ok(Outcome {
        out_dir: Some(out.to_path_buf()),
        files,
        summary: lines.join("\n"),
    })
}
