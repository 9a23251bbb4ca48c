//! The turn-based tactics game: 3 heroes against 5 scripted enemies on a
//! square board with static covers, for a bounded number of turns.

mod action;
mod geometry;
mod observation;
mod replay;
mod scenario;
mod state;

pub use action::{Action, ActionMask, Direction, SubAction, END_TURN_INDEX, NUM_ACTIONS, SUB_ACTIONS};
pub use geometry::{cells_between, Cell};
pub use observation::{encode_observation, Observation, ObservationLayout, BOARD_CHANNELS, COVER_CHANNEL};
pub use replay::{Replay, ReplayError, ReplayHeader, ReplayRun};
pub use scenario::{RuleParams, Scenario, ScenarioError, UnitKind, UnitStats, NUM_ENEMIES, NUM_HEROES, NUM_UNITS};
pub use state::{
    mean_pairwise_distance, AttackKind, CoverMap, GameState, Occurrence, Outcome, Phase, RuleViolation,
    StepOutcome, Team, Unit, SHIELD_COOLDOWN,
};
