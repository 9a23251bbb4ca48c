//! Training: stored sequences, the actor-critic update and the two drivers
//! (reward-conditioned training and fixed-reward baselines).
//!
//! A run proceeds in synchronous rounds. Each round plays
//! `round_episodes` games in parallel on a snapshot of the parameters, cuts
//! them into fixed-length sequences, trains on the fresh sequences and then on
//! sequences drawn from the prioritized buffer. Every random draw is seeded
//! from `(run seed, episode index)`, so the result does not depend on the
//! number of worker threads.

mod train_log;
mod replay_buffer;
mod vtrace;

pub use train_log::{EpisodeLog, TrainLogWriter};
pub use replay_buffer::{Draw, ReplayBuffer, ReplayBufferError};
pub use vtrace::{sequence_gradient, sequence_targets, LossWeights, SequenceStats, SequenceTargets, StepInput};

use crate::env::{encode_observation, ActionMask, GameState, ObservationLayout, Scenario, ScenarioError};
use crate::nn::{ActMode, Adam, Architecture, Checkpoint, CheckpointMeta, ConvSpec, PolicyModel};
use crate::reward::{archetype_config, ArchetypeName, RewardConfig, RewardFunction, RewardSpace};
use crate::rollout::{derive_seed, play_episode, streams, Controller, Episode, RolloutError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Episode budget.
    pub episodes: u64,
    /// Optional cap on gradient updates.
    pub max_updates: Option<u64>,
    pub seed: u64,
    /// Worker threads used to play episodes.
    pub workers: usize,
    /// Episodes played per synchronous round.
    pub round_episodes: usize,
    pub sequence_len: usize,
    pub batch_sequences: usize,
    /// Replay batches per fresh batch.
    pub replay_ratio: usize,
    pub replay_capacity: usize,
    pub priority_alpha: f64,
    pub priority_eps: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub lr: f64,
    pub lr_end: f64,
    pub clip_norm: f64,
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
    pub value_coef: f64,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub conv: Vec<ConvSpec>,
    pub hidden: Vec<usize>,
    pub reward_skip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = Architecture::for_layout(&ObservationLayout::for_board(20));
        TrainConfig {
            episodes: 3000,
            max_updates: None,
            seed: 0,
            workers: 3,
            round_episodes: 3,
            sequence_len: 50,
            batch_sequences: 4,
            replay_ratio: 1,
            replay_capacity: 2000,
            priority_alpha: 0.6,
            priority_eps: 1e-3,
            beta_start: 0.4,
            beta_end: 1.0,
            lr: 5e-4,
            lr_end: 1e-4,
            clip_norm: 5.0,
            gamma: 0.99,
            rho_bar: 1.0,
            c_bar: 1.0,
            value_coef: 0.5,
            entropy_start: 0.02,
            entropy_end: 0.002,
            conv: arch.conv,
            hidden: arch.hidden,
            reward_skip: arch.reward_skip,
        }
    }
}

/// A field-level configuration problem.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("training.{field}: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field, message: &str| {
            Err(ConfigError {
                field,
                message: message.to_string(),
            })
        };
        let positive = [
            ("episodes", self.episodes as f64),
            ("workers", self.workers as f64),
            ("round_episodes", self.round_episodes as f64),
            ("sequence_len", self.sequence_len as f64),
            ("batch_sequences", self.batch_sequences as f64),
            ("replay_capacity", self.replay_capacity as f64),
            ("lr", self.lr),
            ("clip_norm", self.clip_norm),
            ("rho_bar", self.rho_bar),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return err(field, "must be positive");
            }
        }
        if self.max_updates == Some(0) {
            return err("max_updates", "must be positive when set");
        }
        let non_negative = [
            ("lr_end", self.lr_end),
            ("priority_alpha", self.priority_alpha),
            ("priority_eps", self.priority_eps),
            ("c_bar", self.c_bar),
            ("value_coef", self.value_coef),
            ("entropy_start", self.entropy_start),
            ("entropy_end", self.entropy_end),
        ];
        for (field, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return err(field, "must be finite and non-negative");
            }
        }
        for (field, v) in [("gamma", self.gamma), ("beta_start", self.beta_start), ("beta_end", self.beta_end)] {
            if !(0.0..=1.0).contains(&v) {
                return err(field, "must lie in [0, 1]");
            }
        }
        if self.conv.iter().any(|c| c.out_channels == 0 || c.kernel == 0 || c.stride == 0) {
            return err("conv", "channels, kernel and stride must be positive");
        }
        if self.hidden.contains(&0) {
            return err("hidden", "layer sizes must be positive");
        }
        Ok(())
    }

    fn loss_weights(&self, progress: f64) -> LossWeights {
        LossWeights {
            gamma: self.gamma,
            rho_bar: self.rho_bar,
            c_bar: self.c_bar,
            policy_coef: 1.0,
            value_coef: self.value_coef,
            entropy_coef: lerp(self.entropy_start, self.entropy_end, progress),
        }
    }

    pub fn architecture(&self, layout: &ObservationLayout) -> Architecture {
        Architecture {
            conv: self.conv.clone(),
            hidden: self.hidden.clone(),
            reward_skip: self.reward_skip,
            ..Architecture::for_layout(layout)
        }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t.clamp(0.0, 1.0)
}

/// Reward-conditioned training, or a baseline fixed to one archetype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Cari,
    Archetype(ArchetypeName),
}

impl TrainMode {
    pub fn label(self) -> String {
        match self {
            TrainMode::Cari => "cari".to_string(),
            TrainMode::Archetype(a) => a.as_str().to_string(),
        }
    }

    /// Whether the model reads the reward coefficients from its input.
    pub fn conditioned(self) -> bool {
        matches!(self, TrainMode::Cari)
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub scenario: Arc<Scenario>,
    pub reward_space: RewardSpace,
    pub mode: TrainMode,
    pub config: TrainConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Replay(#[from] ReplayBufferError),
    #[error("training diverged at update {update} (episode {episode}): {detail}")]
    Divergence { update: u64, episode: u64, detail: String },
    #[error("every worker failed in one round; last error: {0}")]
    Workers(String),
}

/// Up to `sequence_len` consecutive steps of one episode. Steps past the end
/// of the episode are padding: they count toward the fixed length but carry
/// no loss.
#[derive(Debug, Clone)]
pub struct TransitionSequence {
    pub episode: u64,
    pub config: RewardConfig,
    pub states: Vec<GameState>,
    pub actions: Vec<u8>,
    pub behavior_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// State after the last step when the episode continues past it.
    pub bootstrap: Option<GameState>,
    pub padded_len: usize,
}

impl TransitionSequence {
    /// Number of real (non-padding) steps.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn padding(&self) -> usize {
        self.padded_len - self.len()
    }

    /// Learner view: encoded observations plus the bootstrap input.
    pub fn step_inputs(
        &self,
        space: &RewardSpace,
        conditioned: bool,
    ) -> (Vec<StepInput>, Option<(Vec<f64>, ActionMask)>) {
        let slot = conditioned.then_some((space, &self.config));
        let enc = |s: &GameState| encode_observation(s, slot).model_input();
        let steps = (0..self.len())
            .map(|t| StepInput {
                input: enc(&self.states[t]),
                mask: self.states[t].legal_actions(),
                action: self.actions[t],
                behavior_prob: self.behavior_probs[t],
                reward: self.rewards[t],
                done: self.dones[t],
            })
            .collect();
        let boot = self.bootstrap.as_ref().map(|s| (enc(s), s.legal_actions()));
        (steps, boot)
    }
}

/// Cuts an episode (recorded with `keep_states`) into sequences.
pub fn split_episode(ep: &Episode, episode: u64, config: RewardConfig, len: usize) -> Vec<TransitionSequence> {
    let n = ep.len();
    (0..n)
        .step_by(len)
        .map(|start| {
            let end = (start + len).min(n);
            TransitionSequence {
                episode,
                config,
                states: ep.states[start..end].to_vec(),
                actions: ep.actions[start..end].to_vec(),
                behavior_probs: ep.probs[start..end].to_vec(),
                rewards: ep.rewards[start..end].to_vec(),
                dones: (start..end).map(|t| t + 1 == n).collect(),
                bootstrap: (end < n).then(|| ep.states[end].clone()),
                padded_len: len,
            }
        })
        .collect()
}

/// Statistics of one gradient step, averaged per real step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub sequences: usize,
    pub steps: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub mean_abs_td: f64,
}

/// One gradient step on a batch of `(sequence, importance weight)` pairs.
/// Returns the statistics and each sequence's new priority (mean |TD|).
pub fn learner_update(
    model: &mut PolicyModel,
    opt: &mut Adam,
    batch: &[(&[StepInput], Option<(&[f64], ActionMask)>, f64)],
    weights: &LossWeights,
) -> Result<(UpdateStats, Vec<f64>), String> {
    let mut grad = vec![0.0; model.n_params()];
    let mut total = SequenceStats::default();
    let mut priorities = Vec::with_capacity(batch.len());
    for (steps, boot, w) in batch {
        let s = sequence_gradient(model, steps, *boot, *w, weights, &mut grad);
        priorities.push(s.mean_abs_td());
        total.add(&s);
    }
    let n = total.steps.max(1) as f64;
    for g in &mut grad {
        *g /= n;
    }
    let stats = UpdateStats {
        sequences: batch.len(),
        steps: total.steps,
        policy_loss: total.policy_loss / n,
        value_loss: total.value_loss / n,
        entropy: total.entropy / n,
        grad_norm: 0.0,
        mean_abs_td: total.abs_td / n,
    };
    if ![stats.policy_loss, stats.value_loss, stats.entropy].iter().all(|v| v.is_finite())
        || grad.iter().any(|g| !g.is_finite())
    {
        return Err(format!("non-finite loss or gradient: {stats:?}"));
    }
    let grad_norm = opt.step(model.params_mut(), &grad);
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(format!("non-finite parameters after update (gradient norm {grad_norm})"));
    }
    Ok((UpdateStats { grad_norm, ..stats }, priorities))
}

/// Progress report handed to the caller after every round.
pub struct Progress<'a> {
    pub episodes_done: u64,
    pub updates: u64,
    pub round_logs: &'a [EpisodeLog],
    pub model: &'a PolicyModel,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: PolicyModel,
    pub logs: Vec<EpisodeLog>,
    pub updates: u64,
    pub env_steps: u64,
    /// Episodes lost to a panicking worker.
    pub worker_failures: u64,
}

impl TrainResult {
    pub fn checkpoint(&self, run: &TrainRun) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            meta: CheckpointMeta {
                label: run.mode.label(),
                conditioned: run.mode.conditioned(),
                reward_space: run.reward_space.clone(),
                reward_config: match run.mode {
                    TrainMode::Cari => None,
                    TrainMode::Archetype(a) => Some(archetype_config(a, &run.reward_space)),
                },
                roster_hash: run.scenario.roster_hash(),
                seed: run.config.seed,
                episodes: self.logs.len() as u64,
                env_steps: self.env_steps,
            },
        }
    }
}

/// Reward coefficients used for episode `index` of a run.
pub fn episode_config(run: &TrainRun, index: u64) -> RewardConfig {
    match run.mode {
        TrainMode::Cari => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run.config.seed, streams::REWARD, index));
            run.reward_space.sample_config(&mut rng)
        }
        TrainMode::Archetype(a) => archetype_config(a, &run.reward_space),
    }
}

/// Game seed of episode `index`; shared by every mode for the same run seed.
pub fn episode_seed(run_seed: u64, index: u64) -> u64 {
    derive_seed(run_seed, streams::GAME, index)
}

fn play_training_episode(run: &TrainRun, model: &PolicyModel, index: u64) -> Result<(Episode, RewardConfig), RolloutError> {
    let config = episode_config(run, index);
    let state = GameState::new_game(episode_seed(run.config.seed, index), run.scenario.clone())
        .expect("scenario validated before training");
    let reward = RewardFunction::new(run.reward_space.clone(), config, run.scenario.board_size);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run.config.seed, streams::ACT, index));
    let controller = Controller::Model {
        model,
        mode: ActMode::Sample,
        conditioned: run.mode.conditioned(),
    };
    let ep = play_episode(state, controller, &reward, true, &mut rng)?;
    Ok((ep, config))
}

/// Runs training; `on_progress` is called after every round.
pub fn train(run: &TrainRun, mut on_progress: impl FnMut(&Progress<'_>)) -> Result<TrainResult, TrainError> {
    let cfg = &run.config;
    cfg.validate()?;
    run.scenario.validate()?;
    let layout = ObservationLayout::for_board(run.scenario.board_size);
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::INIT, 0));
    let mut model = PolicyModel::new(cfg.architecture(&layout), &mut init_rng);
    let mut opt = Adam::new(model.n_params(), cfg.lr).with_clip(cfg.clip_norm);
    let mut buffer: ReplayBuffer<TransitionSequence> =
        ReplayBuffer::new(cfg.replay_capacity, cfg.priority_alpha, cfg.priority_eps)?;
    let mut replay_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::REPLAY, 0));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| TrainError::Workers(e.to_string()))?;
    let conditioned = run.mode.conditioned();

    let mut result = TrainResult {
        model: model.clone(),
        logs: Vec::new(),
        updates: 0,
        env_steps: 0,
        worker_failures: 0,
    };
    let mut next_episode = 0u64;
    'rounds: while next_episode < cfg.episodes {
        let end = (next_episode + cfg.round_episodes as u64).min(cfg.episodes);
        let snapshot = &model;
        let played: Vec<(u64, Result<(Episode, RewardConfig), String>)> = pool.install(|| {
            (next_episode..end)
                .into_par_iter()
                .map(|i| {
                    let r = catch_unwind(AssertUnwindSafe(|| play_training_episode(run, snapshot, i)));
                    let r = match r {
                        Ok(Ok(x)) => Ok(x),
                        Ok(Err(e)) => Err(e.to_string()),
                        Err(_) => Err(format!("worker panicked on episode {i}")),
                    };
                    (i, r)
                })
                .collect()
        });
        next_episode = end;
        let progress = next_episode as f64 / cfg.episodes as f64;
        let weights = cfg.loss_weights(progress);
        let beta = lerp(cfg.beta_start, cfg.beta_end, progress);
        opt.lr = lerp(cfg.lr, cfg.lr_end, progress);

        let mut fresh = Vec::new();
        let mut round_logs = Vec::new();
        let mut last_err = None;
        for (i, r) in played {
            match r {
                Ok((ep, config)) => {
                    result.env_steps += ep.len() as u64;
                    round_logs.push(EpisodeLog::new(i, episode_seed(cfg.seed, i), &config, &ep));
                    for seq in split_episode(&ep, i, config, cfg.sequence_len) {
                        fresh.push(buffer.push(seq));
                    }
                }
                Err(e) => {
                    log::warn!("episode {i} failed and was skipped: {e}");
                    result.worker_failures += 1;
                    last_err = Some(e);
                }
            }
        }
        if round_logs.is_empty() {
            return Err(TrainError::Workers(last_err.unwrap_or_default()));
        }

        let mut last_stats = UpdateStats::default();
        for chunk in fresh.chunks(cfg.batch_sequences) {
            let draws: Vec<Draw> = chunk
                .iter()
                .map(|&slot| Draw {
                    slot,
                    probability: 1.0,
                    weight: 1.0,
                })
                .collect();
            let mut batches = vec![draws];
            for _ in 0..cfg.replay_ratio {
                batches.push(buffer.sample(cfg.batch_sequences, beta, &mut replay_rng));
            }
            for draws in batches {
                if cfg.max_updates.is_some_and(|m| result.updates >= m) {
                    break;
                }
                let inputs: Vec<_> = draws
                    .iter()
                    .map(|d| {
                        buffer
                            .get(d.slot)
                            .expect("drawn slots are filled")
                            .step_inputs(&run.reward_space, conditioned)
                    })
                    .collect();
                let batch: Vec<_> = inputs
                    .iter()
                    .zip(&draws)
                    .map(|((steps, boot), d)| {
                        (steps.as_slice(), boot.as_ref().map(|(x, m)| (x.as_slice(), *m)), d.weight)
                    })
                    .collect();
                let (stats, priorities) = learner_update(&mut model, &mut opt, &batch, &weights).map_err(|detail| {
                    TrainError::Divergence {
                        update: result.updates,
                        episode: next_episode,
                        detail,
                    }
                })?;
                for (d, p) in draws.iter().zip(priorities) {
                    buffer.update_priority(d.slot, p);
                }
                result.updates += 1;
                last_stats = stats;
            }
        }
        for l in &mut round_logs {
            l.set_losses(&last_stats);
        }
        on_progress(&Progress {
            episodes_done: next_episode,
            updates: result.updates,
            round_logs: &round_logs,
            model: &model,
        });
        result.logs.extend(round_logs);
        if cfg.max_updates.is_some_and(|m| result.updates >= m) {
            break 'rounds;
        }
    }
    result.model = model;
    Ok(result)
}

/// Reward-conditioned training: fresh coefficients every episode.
pub fn train_cari(
    scenario: Arc<Scenario>,
    reward_space: RewardSpace,
    config: TrainConfig,
    on_progress: impl FnMut(&Progress<'_>),
) -> Result<TrainResult, TrainError> {
    let run = TrainRun {
        scenario,
        reward_space,
        mode: TrainMode::Cari,
        config,
    };
    train(&run, on_progress)
}

/// Baseline training with the coefficients fixed to one archetype.
pub fn train_archetype(
    name: ArchetypeName,
    scenario: Arc<Scenario>,
    reward_space: RewardSpace,
    config: TrainConfig,
    on_progress: impl FnMut(&Progress<'_>),
) -> Result<TrainResult, TrainError> {
    let run = TrainRun {
        scenario,
        reward_space,
        mode: TrainMode::Archetype(name),
        config,
    };
    train(&run, on_progress)
}
