//! HTTP service over trained checkpoints: run episodes with any reward
//! coefficients, page or stream their frames, run small sweeps and fetch the
//! archetype presets.
//!
//! Models are shared read-only; every episode owns its game state, and the
//! replay store is the only shared mutable structure.

pub mod frames;
pub mod openapi;
pub mod store;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cari_core::env::{GameState, Scenario};
use cari_core::eval::{binned_curve, continuum_sweep, episode_replay, Agent, BinnedCurve, EvalSetup, MetricsRecord, SweepMetric};
use cari_core::nn::{ActMode, Checkpoint};
use cari_core::reward::{archetype_config, ArchetypeName, Coefficient, RewardConfig, RewardFunction, RewardSpace};
use cari_core::rollout::{derive_seed, play_episode, streams, Controller};
use frames::{build_frames, ReplayFrame};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use store::{ReplayStore, StoredReplay};

pub const DEFAULT_REPLAY_CAPACITY: usize = 256;
pub const DEFAULT_SWEEP_CAP: usize = 2000;
pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;
const MAX_BINS: usize = 200;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub scenario: Arc<Scenario>,
    /// Intervals behind `/presets` and `/intervals`.
    pub reward_space: RewardSpace,
    pub replay_capacity: usize,
    /// Largest sweep a single request may ask for.
    pub sweep_cap: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            scenario: Arc::new(Scenario::default()),
            reward_space: RewardSpace::default(),
            replay_capacity: DEFAULT_REPLAY_CAPACITY,
            sweep_cap: DEFAULT_SWEEP_CAP,
        }
    }
}

#[derive(Debug)]
pub struct LoadedModel {
    pub id: String,
    pub checkpoint: Checkpoint,
    pub param_hash: String,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("duplicate model id `{0}`")]
    Duplicate(String),
    #[error("model `{id}` was trained on roster {model}, the service runs {service}")]
    Roster { id: String, model: String, service: String },
    #[error("model `{id}` expects input length {expected}, the scenario produces {actual}")]
    Shape { id: String, expected: usize, actual: usize },
}

struct Inner {
    config: ServiceConfig,
    models: BTreeMap<String, Arc<LoadedModel>>,
    store: Mutex<ReplayStore>,
    next_seed: AtomicU64,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig, models: Vec<(String, Checkpoint)>) -> Result<AppState, LoadError> {
        let mut map = BTreeMap::new();
        let roster = config.scenario.roster_hash();
        let setup = EvalSetup {
            scenario: config.scenario.clone(),
            reward_space: config.reward_space.clone(),
        };
        for (id, checkpoint) in models {
            if checkpoint.meta.roster_hash != roster {
                return Err(LoadError::Roster {
                    id,
                    model: checkpoint.meta.roster_hash.clone(),
                    service: roster,
                });
            }
            let agent = Agent::Model {
                model: &checkpoint.model,
                conditioned: checkpoint.meta.conditioned,
            };
            if let Err(cari_core::eval::EvalError::Shape { expected, actual }) = setup.check_agent(agent) {
                return Err(LoadError::Shape { id, expected, actual });
            }
            let param_hash = checkpoint.model.param_hash();
            let loaded = Arc::new(LoadedModel {
                id: id.clone(),
                checkpoint,
                param_hash,
            });
            if map.insert(id.clone(), loaded).is_some() {
                return Err(LoadError::Duplicate(id));
            }
        }
        Ok(AppState(Arc::new(Inner {
            store: Mutex::new(ReplayStore::new(config.replay_capacity)),
            config,
            models: map,
            next_seed: AtomicU64::new(0),
        })))
    }

    pub fn models(&self) -> impl Iterator<Item = &Arc<LoadedModel>> {
        self.0.models.values()
    }

    fn model(&self, id: &str) -> Result<Arc<LoadedModel>, ApiError> {
        self.0
            .models
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown model `{id}`")))
    }

    fn replay(&self, id: &str) -> Result<Arc<StoredReplay>, ApiError> {
        self.0
            .store
            .lock()
            .expect("replay store lock")
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown replay `{id}`")))
    }

    pub fn stored_replays(&self) -> usize {
        self.0.store.lock().expect("replay store lock").len()
    }
}

/// JSON error body: a message plus the offending request fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub fields: Vec<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>, fields: Vec<String>) -> ApiError {
        ApiError {
            status,
            body: ErrorBody {
                error: error.into(),
                fields,
            },
        }
    }

    fn not_found(error: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, error, Vec::new())
    }

    fn invalid(error: impl Into<String>, fields: &[&str]) -> ApiError {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            error,
            fields.iter().map(|f| f.to_string()).collect(),
        )
    }

    fn internal(error: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, error, Vec::new())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Parses a JSON body; serde's message names the offending field, which is
/// also extracted into `fields`.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        let fields = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .map(|f| vec![f.to_string()])
            .unwrap_or_default();
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed request: {msg}"), fields)
    })
}

/// Reads the seven coefficients from a JSON object, naming every missing,
/// unknown, non-numeric or non-finite entry.
pub fn parse_config(value: &serde_json::Value) -> Result<RewardConfig, ApiError> {
    let Some(map) = value.as_object() else {
        return Err(ApiError::invalid("config must be an object of the seven coefficients", &["config"]));
    };
    let mut bad: Vec<String> = map
        .keys()
        .filter(|k| !Coefficient::ALL.iter().any(|c| c.name() == k.as_str()))
        .cloned()
        .collect();
    let mut config = RewardConfig::default();
    for c in Coefficient::ALL {
        match map.get(c.name()).and_then(|v| v.as_f64()) {
            Some(v) if v.is_finite() => config.set(c, v),
            _ => bad.push(c.name().to_string()),
        }
    }
    if bad.is_empty() {
        Ok(config)
    } else {
        Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("invalid coefficients: {}", bad.join(", ")),
            bad,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub label: String,
    pub conditioned: bool,
    pub episodes: u64,
    pub env_steps: u64,
    pub n_params: usize,
    pub roster_hash: String,
    pub param_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: ArchetypeName,
    pub config: RewardConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalInfo {
    pub coefficient: Coefficient,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRequest {
    pub model: String,
    /// Checked by [`parse_config`].
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    #[serde(default = "default_true")]
    pub greedy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResponse {
    pub replay_id: String,
    pub model: String,
    pub seed: u64,
    pub greedy: bool,
    pub config: RewardConfig,
    pub frames: usize,
    pub outcome: String,
    pub total_reward: f64,
    pub summary: MetricsRecord,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FrameQuery {
    pub from: Option<usize>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePage {
    pub replay_id: String,
    pub total: usize,
    pub from: usize,
    pub frames: Vec<ReplayFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRequest {
    pub model: String,
    pub games: usize,
    #[serde(default)]
    pub seed: u64,
    pub widen: Option<f64>,
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub model: String,
    pub games: usize,
    pub seed: u64,
    pub widen: f64,
    pub curves: Vec<BinnedCurve>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/presets", get(presets))
        .route("/intervals", get(intervals))
        .route("/episodes", post(run_episode))
        .route("/replays/{id}", get(replay_file))
        .route("/replays/{id}/frames", get(replay_frames))
        .route("/replays/{id}/frames/stream", get(stream_frames))
        .route("/sweeps", post(run_sweep))
        .route("/openapi.json", get(openapi_doc))
        .with_state(state)
}

async fn list_models(State(state): State<AppState>) -> Json<Vec<ModelInfo>> {
    Json(
        state
            .models()
            .map(|m| ModelInfo {
                id: m.id.clone(),
                label: m.checkpoint.meta.label.clone(),
                conditioned: m.checkpoint.meta.conditioned,
                episodes: m.checkpoint.meta.episodes,
                env_steps: m.checkpoint.meta.env_steps,
                n_params: m.checkpoint.model.n_params(),
                roster_hash: m.checkpoint.meta.roster_hash.clone(),
                param_hash: m.checkpoint.model.param_hash(),
            })
            .collect(),
    )
}

async fn presets(State(state): State<AppState>) -> Json<Vec<Preset>> {
    let space = &state.0.config.reward_space;
    Json(
        ArchetypeName::ALL
            .into_iter()
            .map(|name| Preset {
                name,
                config: archetype_config(name, space),
            })
            .collect(),
    )
}

async fn intervals(State(state): State<AppState>) -> Json<Vec<IntervalInfo>> {
    let space = &state.0.config.reward_space;
    Json(
        Coefficient::ALL
            .into_iter()
            .map(|c| {
                let l = space.interval(c);
                IntervalInfo {
                    coefficient: c,
                    min: l.min(),
                    max: l.max(),
                    step: l.step(),
                }
            })
            .collect(),
    )
}

fn replay_id(model: &LoadedModel, config: &RewardConfig, seed: u64, greedy: bool) -> String {
    let mut h = Sha256::new();
    h.update(model.id.as_bytes());
    h.update(model.param_hash.as_bytes());
    for v in config.to_array() {
        h.update(v.to_le_bytes());
    }
    h.update(seed.to_le_bytes());
    h.update([greedy as u8]);
    hex::encode(&h.finalize()[..8])
}

/// Plays one episode and stores its frames.
pub fn play(state: &AppState, req: &EpisodeRequest) -> Result<EpisodeResponse, ApiError> {
    let model = state.model(&req.model)?;
    let config = parse_config(&req.config)?;
    let seed = req
        .seed
        .unwrap_or_else(|| derive_seed(0x5eed, streams::GAME, state.0.next_seed.fetch_add(1, Ordering::Relaxed)));
    let scenario = state.0.config.scenario.clone();
    let initial = GameState::new_game(seed, scenario).map_err(|e| ApiError::internal(e.to_string()))?;
    let meta = &model.checkpoint.meta;
    let reward = RewardFunction::new(meta.reward_space.clone(), config, initial.board_size());
    let controller = Controller::Model {
        model: &model.checkpoint.model,
        mode: if req.greedy { ActMode::Greedy } else { ActMode::Sample },
        conditioned: meta.conditioned,
    };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(derive_seed(seed, streams::ACT, 0));
    let ep = play_episode(initial, controller, &reward, false, &mut rng).map_err(|e| ApiError::internal(e.to_string()))?;
    let frames = build_frames(&ep.initial, &ep.actions, &reward).map_err(ApiError::internal)?;
    let summary = MetricsRecord::from_game(0, &ep.initial, &ep.log, &ep.final_state);
    let id = replay_id(&model, &config, seed, req.greedy);
    let response = EpisodeResponse {
        replay_id: id.clone(),
        model: model.id.clone(),
        seed,
        greedy: req.greedy,
        config,
        frames: frames.len(),
        outcome: ep.final_state.outcome().as_str().to_string(),
        total_reward: frames.last().map_or(0.0, |f| f.reward),
        summary,
    };
    let stored = Arc::new(StoredReplay {
        replay: episode_replay(&ep, Some(config)),
        frames,
    });
    state.0.store.lock().expect("replay store lock").insert(id, stored);
    Ok(response)
}

async fn run_episode(State(state): State<AppState>, body: Bytes) -> Result<Json<EpisodeResponse>, ApiError> {
    let req: EpisodeRequest = parse_body(&body)?;
    tokio::task::spawn_blocking(move || play(&state, &req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

async fn replay_file(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let stored = state.replay(&id)?;
    let disposition = format!("attachment; filename=\"{id}.json\"");
    Ok((
        [
            (header::CONTENT_TYPE, "application/json".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        stored.replay.to_json(),
    )
        .into_response())
}

async fn replay_frames(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FrameQuery>,
) -> Result<Json<FramePage>, ApiError> {
    let stored = state.replay(&id)?;
    let count = q.count.unwrap_or(DEFAULT_PAGE);
    if count == 0 || count > MAX_PAGE {
        return Err(ApiError::invalid(format!("count must lie in 1..={MAX_PAGE}"), &["count"]));
    }
    let total = stored.frames.len();
    let from = q.from.unwrap_or(0).min(total);
    let end = (from + count).min(total);
    Ok(Json(FramePage {
        replay_id: id,
        total,
        from,
        frames: stored.frames[from..end].to_vec(),
    }))
}

/// All frames as newline-delimited JSON, sent in chunks.
async fn stream_frames(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let stored = state.replay(&id)?;
    let lines = (0..stored.frames.len()).map(move |i| {
        let mut line = serde_json::to_vec(&stored.frames[i]).expect("frames serialize");
        line.push(b'\n');
        Ok::<_, std::convert::Infallible>(Bytes::from(line))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(futures::stream::iter(lines)),
    )
        .into_response())
}

/// Runs a capped continuum sweep and bins every coefficient against its metric.
pub fn sweep(state: &AppState, req: &SweepRequest) -> Result<SweepResponse, ApiError> {
    let model = state.model(&req.model)?;
    let cap = state.0.config.sweep_cap;
    if req.games == 0 || req.games > cap {
        return Err(ApiError::invalid(format!("games must lie in 1..={cap} (limit {cap})"), &["games"]));
    }
    let widen = req.widen.unwrap_or(cari_core::eval::DEFAULT_WIDEN);
    if !(widen.is_finite() && widen > 0.0) {
        return Err(ApiError::invalid("widen must be positive", &["widen"]));
    }
    let bins = req.bins.unwrap_or(cari_core::eval::DEFAULT_BINS);
    if bins == 0 || bins > MAX_BINS {
        return Err(ApiError::invalid(format!("bins must lie in 1..={MAX_BINS}"), &["bins"]));
    }
    let meta = &model.checkpoint.meta;
    if !meta.conditioned {
        return Err(ApiError::invalid(
            format!("model `{}` was trained on one fixed reward and cannot be swept", model.id),
            &["model"],
        ));
    }
    let setup = EvalSetup {
        scenario: state.0.config.scenario.clone(),
        reward_space: meta.reward_space.clone(),
    };
    let rows = continuum_sweep(&setup, &model.checkpoint.model, req.games, req.seed, widen)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let curves = Coefficient::ALL
        .into_iter()
        .map(|c| {
            let l = meta.reward_space.interval(c);
            binned_curve(&rows, c, SweepMetric::paired_with(c), bins, (l.min(), l.max()))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(SweepResponse {
        model: model.id.clone(),
        games: rows.len(),
        seed: req.seed,
        widen,
        curves,
    })
}

async fn run_sweep(State(state): State<AppState>, body: Bytes) -> Result<Json<SweepResponse>, ApiError> {
    let req: SweepRequest = parse_body(&body)?;
    tokio::task::spawn_blocking(move || sweep(&state, &req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

async fn openapi_doc() -> Json<serde_json::Value> {
    Json(openapi::document())
}
