//! Rewarded events and their detection from transition logs.

use crate::env::{Action, GameState, Occurrence, Outcome};
use serde::{Deserialize, Serialize};
use std::ops::AddAssign;

/// Per-transition counts of the seven rewarded events.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EventVector {
    pub stab: u32,
    pub cvr_shooting: u32,
    pub hero_shot: u32,
    pub useful_shld: u32,
    /// Enemy hits that removed hero health.
    pub nmy_damage: u32,
    /// Hero health removed by those hits.
    pub nmy_damage_hp: u32,
    /// Mean pairwise hero distance, emitted at the end of each turn.
    pub hero_distance: f64,
    /// +1 on the winning transition, -1 on the losing one.
    pub win_flag: i8,
}

impl EventVector {
    pub fn is_zero(&self) -> bool {
        *self == EventVector::default()
    }
}

impl AddAssign<&EventVector> for EventVector {
    fn add_assign(&mut self, o: &EventVector) {
        self.stab += o.stab;
        self.cvr_shooting += o.cvr_shooting;
        self.hero_shot += o.hero_shot;
        self.useful_shld += o.useful_shld;
        self.nmy_damage += o.nmy_damage;
        self.nmy_damage_hp += o.nmy_damage_hp;
        self.hero_distance += o.hero_distance;
        self.win_flag += o.win_flag;
    }
}

/// Folds a transition log into event counts.
pub fn events_from_log(log: &[Occurrence]) -> EventVector {
    let mut ev = EventVector::default();
    for o in log {
        match *o {
            Occurrence::HeroShot { blocked_by, .. } => {
                if blocked_by.is_some() {
                    ev.cvr_shooting += 1;
                } else {
                    ev.hero_shot += 1;
                }
            }
            Occurrence::HeroStabbed { .. } => ev.stab += 1,
            Occurrence::EnemyAttacked {
                absorbed, damage, ..
            } => {
                if absorbed {
                    ev.useful_shld += 1;
                } else if damage > 0 {
                    ev.nmy_damage += 1;
                    ev.nmy_damage_hp += damage;
                }
            }
            Occurrence::TurnEnded { hero_distance, .. } => ev.hero_distance += hero_distance,
            Occurrence::GameOver { outcome } => {
                ev.win_flag = match outcome {
                    Outcome::Win => 1,
                    Outcome::Loss => -1,
                    _ => 0,
                }
            }
            _ => {}
        }
    }
    ev
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EventError {
    #[error("action is illegal in the pre-state: {0}")]
    Illegal(#[from] crate::env::RuleViolation),
    #[error("post-state is not the result of applying the action to the pre-state")]
    Inconsistent,
}

/// Events of the transition `pre --action--> post`. The triple is checked by
/// re-running the rules; a post-state the engine would not produce is rejected.
pub fn detect_events(pre: &GameState, action: Action, post: &GameState) -> Result<EventVector, EventError> {
    let (expected, outcome) = pre.step(action)?;
    if &expected != post {
        return Err(EventError::Inconsistent);
    }
    Ok(outcome.events)
}
