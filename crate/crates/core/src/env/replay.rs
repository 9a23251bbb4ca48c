//! Replay files: a header (seed, roster hash, scenario, optional reward
//! configuration) and the ordered list of hero action indices. Re-running the
//! actions from the seeded initial state reproduces the game bit for bit.

use super::action::Action;
use super::scenario::{Scenario, ScenarioError};
use super::state::{GameState, RuleViolation, StepOutcome};
use crate::reward::RewardConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

pub const REPLAY_FORMAT: &str = "cari-replay";
pub const REPLAY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub roster_hash: String,
    pub scenario: Scenario,
    /// Reward configuration the acting policy was given, if any.
    pub reward_config: Option<RewardConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub header: ReplayHeader,
    pub actions: Vec<u8>,
    /// Digest of the final state.
    pub final_digest: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed replay: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported replay format {format} v{version}")]
    Format { format: String, version: u32 },
    #[error("roster hash mismatch: header {header}, scenario {actual}")]
    RosterHash { header: String, actual: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("action #{index} (index {action}) is not a valid action")]
    UnknownAction { index: usize, action: u8 },
    #[error("action #{index} rejected: {violation}")]
    Illegal { index: usize, violation: RuleViolation },
    #[error("final state digest {actual} differs from recorded {expected}")]
    DigestMismatch { expected: String, actual: String },
}

/// Result of re-executing a replay.
#[derive(Debug, Clone)]
pub struct ReplayRun {
    pub initial: GameState,
    pub steps: Vec<(Action, StepOutcome)>,
    pub final_state: GameState,
}

impl Replay {
    pub fn new(initial: &GameState, reward_config: Option<RewardConfig>, actions: Vec<u8>, final_state: &GameState) -> Replay {
        let scenario = (**initial.scenario()).clone();
        Replay {
            header: ReplayHeader {
                format: REPLAY_FORMAT.to_string(),
                version: REPLAY_VERSION,
                seed: initial.seed(),
                roster_hash: scenario.roster_hash(),
                scenario,
                reward_config,
            },
            actions,
            final_digest: final_state.digest(),
        }
    }

    /// Re-executes every action from the seeded initial state.
    pub fn run(&self) -> Result<ReplayRun, ReplayError> {
        let h = &self.header;
        if h.format != REPLAY_FORMAT || h.version != REPLAY_VERSION {
            return Err(ReplayError::Format {
                format: h.format.clone(),
                version: h.version,
            });
        }
        let actual = h.scenario.roster_hash();
        if actual != h.roster_hash {
            return Err(ReplayError::RosterHash {
                header: h.roster_hash.clone(),
                actual,
            });
        }
        let initial = GameState::new_game(h.seed, Arc::new(h.scenario.clone()))?;
        let mut state = initial.clone();
        let mut steps = Vec::with_capacity(self.actions.len());
        for (index, &a) in self.actions.iter().enumerate() {
            let action = Action::from_index(a).ok_or(ReplayError::UnknownAction { index, action: a })?;
            let out = state
                .apply(action)
                .map_err(|violation| ReplayError::Illegal { index, violation })?;
            steps.push((action, out));
        }
        Ok(ReplayRun {
            initial,
            steps,
            final_state: state,
        })
    }

    /// Runs the replay and checks the final digest.
    pub fn verify(&self) -> Result<ReplayRun, ReplayError> {
        let run = self.run()?;
        let actual = run.final_state.digest();
        if actual != self.final_digest {
            return Err(ReplayError::DigestMismatch {
                expected: self.final_digest.clone(),
                actual,
            });
        }
        Ok(run)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("replay serializes")
    }

    pub fn from_json(text: &str) -> Result<Replay, ReplayError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ReplayError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Replay, ReplayError> {
        Replay::from_json(&std::fs::read_to_string(path)?)
    }
}
