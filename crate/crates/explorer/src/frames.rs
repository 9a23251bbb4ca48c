//! Frame-by-frame view of a finished episode.

use cari_core::env::{Action, GameState, Occurrence, Team, Unit, UnitKind};
use cari_core::reward::{EventVector, RewardFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSnapshot {
    /// `hero{i}` or `enemy{j}`, matching action names.
    pub id: String,
    pub team: Team,
    pub kind: UnitKind,
    pub x: i32,
    pub y: i32,
    pub health: u32,
    pub max_health: u32,
    pub alive: bool,
    pub shield_active: bool,
    pub shield_cooldown: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardSnapshot {
    pub size: u32,
    pub units: Vec<UnitSnapshot>,
    /// `[x, y]` cells.
    pub covers: Vec<[i32; 2]>,
}

/// Board after one hero action. Frame 0 is the initial board and has no action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFrame {
    pub index: usize,
    /// Acting hero; `None` for the initial frame and for end-turn.
    pub unit: Option<String>,
    pub action: Option<String>,
    pub action_index: Option<u8>,
    /// Turn in progress after the action (1-based).
    pub turn: u32,
    pub turns_played: u32,
    /// What the action caused, enemy phase included.
    pub occurrences: Vec<Occurrence>,
    pub board: BoardSnapshot,
    /// Cumulative events up to and including this frame.
    pub events: EventVector,
    /// Cumulative reward under the episode's coefficients.
    pub reward: f64,
    /// `ongoing`, `win`, `loss` or `draw`.
    pub outcome: String,
}

fn unit_name(u: &Unit, heroes: usize) -> String {
    match u.team {
        Team::Hero => format!("hero{}", u.id),
        Team::Enemy => format!("enemy{}", u.id as usize - heroes),
    }
}

fn snapshot(state: &GameState) -> BoardSnapshot {
    let heroes = state.heroes().len();
    BoardSnapshot {
        size: state.board_size(),
        units: state
            .heroes()
            .iter()
            .chain(state.enemies().iter())
            .map(|u| UnitSnapshot {
                id: unit_name(u, heroes),
                team: u.team,
                kind: u.kind,
                x: u.pos.x,
                y: u.pos.y,
                health: u.health,
                max_health: u.stats.max_health,
                alive: u.alive(),
                shield_active: u.shield_active,
                shield_cooldown: u.shield_cooldown,
            })
            .collect(),
        covers: state.covers().cells().iter().map(|c| [c.x, c.y]).collect(),
    }
}

fn frame(index: usize, action: Option<Action>, state: &GameState, occurrences: Vec<Occurrence>, events: EventVector, reward: f64) -> ReplayFrame {
    ReplayFrame {
        index,
        unit: match action {
            Some(Action::Hero { hero, .. }) => Some(format!("hero{hero}")),
            _ => None,
        },
        action: action.map(|a| a.to_string()),
        action_index: action.map(Action::index),
        turn: state.turn(),
        turns_played: state.turns_played(),
        occurrences,
        board: snapshot(state),
        events,
        reward,
        outcome: state.outcome().as_str().to_string(),
    }
}

/// Re-applies `actions` from `initial`, accumulating events and reward.
pub fn build_frames(initial: &GameState, actions: &[u8], reward: &RewardFunction) -> Result<Vec<ReplayFrame>, String> {
    let mut state = initial.clone();
    let mut total = EventVector::default();
    let mut cum_reward = 0.0;
    let mut frames = Vec::with_capacity(actions.len() + 1);
    frames.push(frame(0, None, &state, Vec::new(), total, 0.0));
    for (i, &a) in actions.iter().enumerate() {
        let action = Action::from_index(a).ok_or_else(|| format!("action #{i} has invalid index {a}"))?;
        let out = state.apply(action).map_err(|e| format!("action #{i} ({action}): {e}"))?;
        total += &out.events;
        cum_reward += reward.reward(&out.events);
        frames.push(frame(i + 1, Some(action), &state, out.log, total, cum_reward));
    }
    Ok(frames)
}
