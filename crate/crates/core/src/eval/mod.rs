//! Evaluation: per-game metrics, fixed-configuration evaluation, the
//! continuum sweep with binned curves, and archetype comparison reports.

mod compare;
mod export;
mod metrics;
mod sweep;

pub use compare::{compare_archetypes, ArchetypeAgents, ArchetypeColumn, ArchetypeReport};
pub use export::{write_curve_json, write_records_csv, write_report_csv, write_sweep_csv};
pub use metrics::{metrics_from_replay, Aggregate, MetricsRecord};
pub use sweep::{
    binned_curve, continuum_sweep, spearman, sweep_config, Bin, BinnedCurve, CurveError, SweepMetric, SweepRow, DEFAULT_BINS,
    DEFAULT_WIDEN,
};

use crate::env::{GameState, ObservationLayout, Replay, Scenario, ScenarioError};
use crate::nn::{ActMode, PolicyModel};
use crate::reward::{RewardConfig, RewardFunction, RewardSpace};
use crate::rollout::{derive_seed, play_episode, streams, Controller, Episode, RolloutError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// The hero controller under evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Agent<'a> {
    Heuristic,
    /// `conditioned` models get the coefficients in their reward slot.
    Model { model: &'a PolicyModel, conditioned: bool },
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("model expects input length {expected}, the scenario produces {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("n_games must be at least 1")]
    NoGames,
    #[error("no baseline model for archetype {0}")]
    MissingArchetype(crate::reward::ArchetypeName),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("game {game}: {source}")]
    Rollout { game: u64, source: RolloutError },
}

/// Shared settings of an evaluation.
#[derive(Debug, Clone)]
pub struct EvalSetup {
    pub scenario: Arc<Scenario>,
    pub reward_space: RewardSpace,
}

impl Default for EvalSetup {
    fn default() -> Self {
        EvalSetup {
            scenario: Arc::new(Scenario::default()),
            reward_space: RewardSpace::default(),
        }
    }
}

impl EvalSetup {
    pub fn check_agent(&self, agent: Agent<'_>) -> Result<(), EvalError> {
        if let Agent::Model { model, .. } = agent {
            let actual = ObservationLayout::for_board(self.scenario.board_size).len(true);
            let expected = model.architecture().input_len();
            if actual != expected {
                return Err(EvalError::Shape { expected, actual });
            }
        }
        Ok(())
    }

    /// Seed of evaluation game `index`.
    pub fn game_seed(seed: u64, index: u64) -> u64 {
        derive_seed(seed, streams::GAME, index)
    }

    /// Plays one greedy game.
    pub fn play(&self, agent: Agent<'_>, config: RewardConfig, seed: u64) -> Result<Episode, RolloutError> {
        let state = GameState::new_game(seed, self.scenario.clone()).expect("scenario validated");
        let reward = RewardFunction::new(self.reward_space.clone(), config, self.scenario.board_size);
        let controller = match agent {
            Agent::Heuristic => Controller::Heuristic,
            Agent::Model { model, conditioned } => Controller::Model {
                model,
                mode: ActMode::Greedy,
                conditioned,
            },
        };
        // Greedy play draws no random numbers; the generator only satisfies the signature.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        play_episode(state, controller, &reward, false, &mut rng)
    }
}

/// Replay file of an evaluated game.
pub fn episode_replay(ep: &Episode, config: Option<RewardConfig>) -> Replay {
    Replay::new(&ep.initial, config, ep.actions.clone(), &ep.final_state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub records: Vec<MetricsRecord>,
    pub aggregate: Aggregate,
}

/// Plays `n_games` freshly seeded greedy games with one configuration.
pub fn evaluate(
    setup: &EvalSetup,
    agent: Agent<'_>,
    config: RewardConfig,
    n_games: usize,
    seed: u64,
) -> Result<EvalResult, EvalError> {
    if n_games == 0 {
        return Err(EvalError::NoGames);
    }
    setup.scenario.validate()?;
    setup.check_agent(agent)?;
    let records = (0..n_games as u64)
        .into_par_iter()
        .map(|i| {
            let ep = setup
                .play(agent, config, EvalSetup::game_seed(seed, i))
                .map_err(|source| EvalError::Rollout { game: i, source })?;
            Ok(MetricsRecord::from_game(i, &ep.initial, &ep.log, &ep.final_state))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let aggregate = Aggregate::from_records(&records);
    Ok(EvalResult { records, aggregate })
}
