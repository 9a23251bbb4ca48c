//! Fixed-length encoding of a [`GameState`] for the policy.
//!
//! Three parts: a one-hot board map (channels: heroes 0..3, enemies 3..8,
//! cover 8; channel-major), a flat `general` vector, and an optional reward
//! slot holding the normalized coefficients of the active reward function.

use super::action::NUM_ACTIONS;
use super::scenario::{NUM_ENEMIES, NUM_HEROES, NUM_UNITS};
use super::state::{GameState, Unit, SHIELD_COOLDOWN};
use crate::reward::{board_diagonal, RewardConfig, RewardSpace, NUM_COEFFICIENTS};
use serde::{Deserialize, Serialize};

pub const BOARD_CHANNELS: usize = NUM_UNITS + 1;
pub const COVER_CHANNEL: usize = NUM_UNITS;
pub const UNIT_FEATURES: usize = 14;
pub const PAIR_FEATURES: usize = 4;
/// Scale for hit-point and damage statistics.
const STAT_SCALE: f64 = 20.0;

/// Sizes of the three observation parts for one board size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub board_size: usize,
    pub channels: usize,
    pub general_len: usize,
    pub reward_len: usize,
}

impl ObservationLayout {
    pub fn for_board(board_size: u32) -> Self {
        ObservationLayout {
            board_size: board_size as usize,
            channels: BOARD_CHANNELS,
            general_len: 1 + NUM_UNITS * UNIT_FEATURES + NUM_HEROES * NUM_ENEMIES * PAIR_FEATURES + NUM_ACTIONS,
            reward_len: NUM_COEFFICIENTS,
        }
    }

    pub fn board_len(&self) -> usize {
        self.channels * self.board_size * self.board_size
    }

    /// Length of the observation with (`with_reward`) or without the reward slot.
    pub fn len(&self, with_reward: bool) -> usize {
        self.board_len() + self.general_len + if with_reward { self.reward_len } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub board: Vec<f64>,
    pub general: Vec<f64>,
    pub reward_slot: Option<[f64; NUM_COEFFICIENTS]>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.board.len() + self.general.len() + self.reward_slot.map_or(0, |r| r.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat vector as consumed by the model; a missing reward slot is zero-filled
    /// so that baseline and reward-conditioned agents share one input shape.
    pub fn model_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.board.len() + self.general.len() + NUM_COEFFICIENTS);
        v.extend_from_slice(&self.board);
        v.extend_from_slice(&self.general);
        v.extend_from_slice(&self.reward_slot.unwrap_or([0.0; NUM_COEFFICIENTS]));
        v
    }
}

fn unit_features(u: &Unit, n: f64, out: &mut Vec<f64>) {
    let alive = u.alive();
    let pos = |v: i32| if alive { 2.0 * v as f64 / (n - 1.0).max(1.0) - 1.0 } else { 0.0 };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let s = &u.stats;
    out.extend_from_slice(&[
        flag(alive),
        u.health as f64 / s.max_health as f64,
        s.max_health as f64 / STAT_SCALE,
        s.move_budget as f64 / 10.0,
        u.moves_left as f64 / s.move_budget as f64,
        flag(alive && u.attack_ready && !u.done),
        flag(u.done),
        s.shot_range as f64 / n,
        s.shot_damage as f64 / STAT_SCALE,
        s.stab_damage as f64 / STAT_SCALE,
        flag(u.shield_active),
        u.shield_cooldown as f64 / SHIELD_COOLDOWN as f64,
        pos(u.pos.x),
        pos(u.pos.y),
    ]);
}

/// Encodes `state`, filling the reward slot when a reward function is given.
pub fn encode_observation(state: &GameState, reward: Option<(&RewardSpace, &RewardConfig)>) -> Observation {
    let layout = ObservationLayout::for_board(state.board_size());
    let n = layout.board_size;
    let plane = n * n;
    let mut board = vec![0.0; layout.board_len()];
    for c in state.covers().cells() {
        board[COVER_CHANNEL * plane + c.y as usize * n + c.x as usize] = 1.0;
    }
    for (ch, u) in state.heroes().iter().chain(state.enemies().iter()).enumerate() {
        if u.alive() {
            board[ch * plane + u.pos.y as usize * n + u.pos.x as usize] = 1.0;
        }
    }

    let nf = n as f64;
    let mut general = Vec::with_capacity(layout.general_len);
    let limit = state.scenario().turn_limit as f64;
    general.push(((limit - state.turn() as f64 + 1.0) / limit).clamp(0.0, 1.0));
    for u in state.heroes().iter().chain(state.enemies().iter()) {
        unit_features(u, nf, &mut general);
    }
    let span = (nf - 1.0).max(1.0);
    let diag = board_diagonal(state.board_size());
    for h in state.heroes() {
        for e in state.enemies() {
            if h.alive() && e.alive() {
                let clear = state.blocking_cover(h.pos, e.pos).is_none();
                general.extend_from_slice(&[
                    (e.pos.x - h.pos.x) as f64 / span,
                    (e.pos.y - h.pos.y) as f64 / span,
                    h.pos.distance(e.pos) / diag,
                    if clear { 1.0 } else { 0.0 },
                ]);
            } else {
                general.extend_from_slice(&[0.0; PAIR_FEATURES]);
            }
        }
    }
    let mask = state.legal_actions();
    general.extend((0..NUM_ACTIONS as u8).map(|i| if mask.contains(i) { 1.0 } else { 0.0 }));
    for v in general.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    debug_assert_eq!(general.len(), layout.general_len);

    Observation {
        board,
        general,
        reward_slot: reward.map(|(space, cfg)| space.encode(cfg)),
    }
}
