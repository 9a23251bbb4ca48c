//! Roster and board parameters for a game.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Hero,
    Brute,
    Archer,
    Soldier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitStats {
    pub max_health: u32,
    pub move_budget: u32,
    pub shot_range: u32,
    pub shot_damage: u32,
    pub stab_damage: u32,
    #[serde(default)]
    pub has_shield: bool,
}

impl UnitStats {
    /// Enemy stats: one damage value shared by shots and stabs.
    pub const fn enemy(max_health: u32, move_budget: u32, shot_range: u32, damage: u32) -> Self {
        UnitStats {
            max_health,
            move_budget,
            shot_range,
            shot_damage: damage,
            stab_damage: damage,
            has_shield: false,
        }
    }
}

/// Parameters of the scripted behaviors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleParams {
    /// Archers retreat while the nearest hero is closer than this fraction of their shot range.
    pub archer_keep_distance: f64,
    /// The Contact heuristic only shoots at enemies within this fraction of its shot range.
    pub contact_shoot_fraction: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams {
            archer_keep_distance: 0.5,
            contact_shoot_fraction: 0.5,
        }
    }
}

pub const NUM_HEROES: usize = 3;
pub const NUM_ENEMIES: usize = 5;
pub const NUM_UNITS: usize = NUM_HEROES + NUM_ENEMIES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub board_size: u32,
    pub cover_count: u32,
    pub turn_limit: u32,
    pub hero: UnitStats,
    pub brute: UnitStats,
    pub archer: UnitStats,
    pub soldier: UnitStats,
    pub enemy_team: Vec<UnitKind>,
    pub rules: RuleParams,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            board_size: 20,
            cover_count: 40,
            turn_limit: 10,
            hero: UnitStats {
                max_health: 10,
                move_budget: 4,
                shot_range: 6,
                shot_damage: 3,
                stab_damage: 4,
                has_shield: true,
            },
            brute: UnitStats::enemy(12, 2, 2, 4),
            archer: UnitStats::enemy(5, 3, 8, 2),
            soldier: UnitStats::enemy(8, 3, 5, 3),
            enemy_team: vec![
                UnitKind::Brute,
                UnitKind::Archer,
                UnitKind::Archer,
                UnitKind::Soldier,
                UnitKind::Soldier,
            ],
            rules: RuleParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("scenario.{field}: {message}")]
pub struct ScenarioError {
    pub field: String,
    pub message: String,
}

fn err(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError {
        field: field.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn stats(&self, kind: UnitKind) -> &UnitStats {
        match kind {
            UnitKind::Hero => &self.hero,
            UnitKind::Brute => &self.brute,
            UnitKind::Archer => &self.archer,
            UnitKind::Soldier => &self.soldier,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.board_size < 2 || self.board_size > 64 {
            return Err(err("board_size", "must be between 2 and 64"));
        }
        let cells = self.board_size * self.board_size;
        if self.cover_count + NUM_UNITS as u32 > cells {
            return Err(err(
                "cover_count",
                format!("{} covers and {NUM_UNITS} units do not fit on {cells} cells", self.cover_count),
            ));
        }
        if self.turn_limit == 0 {
            return Err(err("turn_limit", "must be positive"));
        }
        for (name, kind) in [
            ("hero", UnitKind::Hero),
            ("brute", UnitKind::Brute),
            ("archer", UnitKind::Archer),
            ("soldier", UnitKind::Soldier),
        ] {
            let s = self.stats(kind);
            for (f, v) in [
                ("max_health", s.max_health),
                ("move_budget", s.move_budget),
                ("shot_range", s.shot_range),
                ("shot_damage", s.shot_damage),
                ("stab_damage", s.stab_damage),
            ] {
                if v == 0 {
                    return Err(err(format!("{name}.{f}"), "must be positive"));
                }
            }
            if s.has_shield != (kind == UnitKind::Hero) {
                return Err(err(format!("{name}.has_shield"), "only heroes carry a shield"));
            }
        }
        if self.enemy_team.len() != NUM_ENEMIES {
            return Err(err(
                "enemy_team",
                format!("expected {NUM_ENEMIES} enemies, got {}", self.enemy_team.len()),
            ));
        }
        if self.enemy_team.contains(&UnitKind::Hero) {
            return Err(err("enemy_team", "heroes cannot be enemies"));
        }
        for (f, v) in [
            ("rules.archer_keep_distance", self.rules.archer_keep_distance),
            ("rules.contact_shoot_fraction", self.rules.contact_shoot_fraction),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(err(f, "must be a non-negative number"));
            }
        }
        Ok(())
    }

    /// Stable digest of the roster, recorded in replay headers.
    pub fn roster_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
