use anyhow::{bail, Context};
use cari_core::config::ExperimentConfig;
use cari_core::nn::Checkpoint;
use cari_explorer::{router, AppState, ServiceConfig, DEFAULT_REPLAY_CAPACITY, DEFAULT_SWEEP_CAP};
use clap::Parser;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(name = "cari-explorer", version, about = "Serve trained checkpoints over HTTP")]
struct Args {
    /// Checkpoint to serve, as `ID=PATH` or `PATH` (the id is the file stem). Repeatable.
    #[arg(long = "model", required = true)]
    models: Vec<String>,
    /// Experiment manifest supplying the scenario and reward intervals.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long, default_value_t = DEFAULT_REPLAY_CAPACITY)]
    replay_capacity: usize,
    #[arg(long, default_value_t = DEFAULT_SWEEP_CAP)]
    sweep_cap: usize,
}

fn parse_model(spec: &str) -> anyhow::Result<(String, PathBuf)> {
    let (id, path) = match spec.split_once('=') {
        Some((id, path)) => (id.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(spec);
            let stem = path.file_stem().context("model path has no file name")?.to_string_lossy().into_owned();
            (stem, path)
        }
    };
    if id.is_empty() {
        bail!("empty model id in `{spec}`");
    }
    Ok((id, path))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let experiment = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut models = Vec::new();
    for spec in &args.models {
        let (id, path) = parse_model(spec)?;
        let ckpt = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
        models.push((id, ckpt));
    }
    let state = AppState::new(
        ServiceConfig {
            scenario: Arc::new(experiment.scenario),
            reward_space: experiment.reward,
            replay_capacity: args.replay_capacity,
            sweep_cap: args.sweep_cap,
        },
        models,
    )?;
    let listener = tokio::net::TcpListener::bind(&args.bind)
        .await
        .with_context(|| format!("binding {}", args.bind))?;
    log::info!("serving {} model(s) on http://{}", state.models().count(), listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
