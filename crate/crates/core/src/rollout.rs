//! Playing one episode with a learned policy or the scripted heuristic.

use crate::agents::contact_heuristic_action;
use crate::env::{encode_observation, Action, GameState, Occurrence, RuleViolation};
use crate::nn::{ActMode, ModelError, PolicyModel};
use crate::reward::{EventVector, RewardFunction};
use rand::Rng;

/// Derives an independent 64-bit seed for `(stream, index)` from a base seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Seed streams used by training and evaluation.
pub mod streams {
    pub const GAME: u64 = 1;
    pub const REWARD: u64 = 2;
    pub const ACT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const REPLAY: u64 = 5;
}

/// Who picks the hero actions.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    Model {
        model: &'a PolicyModel,
        mode: ActMode,
        /// Feed the reward coefficients to the model.
        conditioned: bool,
    },
    Heuristic,
}

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("controller chose an illegal action: {0}")]
    Illegal(#[from] RuleViolation),
}

/// Everything recorded while playing one episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub initial: GameState,
    /// The state before each step; only kept on request.
    pub states: Vec<GameState>,
    pub actions: Vec<u8>,
    /// Probability of each chosen action under the acting policy (1 for the heuristic).
    pub probs: Vec<f64>,
    pub events: Vec<EventVector>,
    pub rewards: Vec<f64>,
    pub log: Vec<Occurrence>,
    pub final_state: GameState,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn total_events(&self) -> EventVector {
        let mut total = EventVector::default();
        for e in &self.events {
            total += e;
        }
        total
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Plays `state` to the end.
pub fn play_episode<R: Rng + ?Sized>(
    mut state: GameState,
    controller: Controller<'_>,
    reward: &RewardFunction,
    keep_states: bool,
    rng: &mut R,
) -> Result<Episode, RolloutError> {
    let initial = state.clone();
    let mut ep = Episode {
        initial: initial.clone(),
        states: Vec::new(),
        actions: Vec::new(),
        probs: Vec::new(),
        events: Vec::new(),
        rewards: Vec::new(),
        log: Vec::new(),
        final_state: initial,
    };
    let slot = (&reward.space, &reward.config);
    while !state.outcome().is_over() {
        let (action, prob) = match controller {
            Controller::Heuristic => (contact_heuristic_action(&state), 1.0),
            Controller::Model {
                model,
                mode,
                conditioned,
            } => {
                let obs = encode_observation(&state, conditioned.then_some(slot));
                let (a, p) = model.act(&obs.model_input(), state.legal_actions(), mode, rng)?;
                (Action::from_index(a).expect("model emits indices below 61"), p)
            }
        };
        if keep_states {
            ep.states.push(state.clone());
        }
        let out = state.apply(action)?;
        let events = out.events;
        ep.rewards.push(reward.reward(&events));
        ep.events.push(events);
        ep.actions.push(action.index());
        ep.probs.push(prob);
        ep.log.extend(out.log);
    }
    ep.final_state = state;
    Ok(ep)
}
