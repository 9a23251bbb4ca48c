use crate::env::{GameState, Occurrence, Outcome, Replay, ReplayError};
use serde::{Deserialize, Serialize};

/// Key metrics of one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub game: u64,
    pub seed: u64,
    pub stabs: u32,
    /// Shoot actions, including those that hit a cover.
    pub shots: u32,
    pub cover_hits: u32,
    /// `cover_hits / shots`, 0 when no shot was fired.
    pub shots_at_cover_fraction: f64,
    /// Average of the end-of-turn mean pairwise hero distances.
    pub mean_hero_distance: f64,
    pub shields_used: u32,
    pub lost_hp_heroes_fraction: f64,
    pub lost_hp_enemies_fraction: f64,
    pub outcome: Outcome,
    pub turns: u32,
    pub steps: u32,
}

impl MetricsRecord {
    /// Computes the metrics of a finished game from its transition log.
    pub fn from_game(game: u64, initial: &GameState, log: &[Occurrence], final_state: &GameState) -> MetricsRecord {
        let mut stabs = 0;
        let mut shots = 0;
        let mut cover_hits = 0;
        let mut shields = 0;
        let mut distances = Vec::new();
        for o in log {
            match o {
                Occurrence::HeroStabbed { .. } => stabs += 1,
                Occurrence::HeroShot { blocked_by, .. } => {
                    shots += 1;
                    if blocked_by.is_some() {
                        cover_hits += 1;
                    }
                }
                Occurrence::ShieldRaised { .. } => shields += 1,
                Occurrence::TurnEnded { hero_distance, .. } => distances.push(*hero_distance),
                _ => {}
            }
        }
        let mean_hero_distance = if distances.is_empty() {
            final_state.hero_distance()
        } else {
            distances.iter().sum::<f64>() / distances.len() as f64
        };
        let lost = |units: &[crate::env::Unit]| {
            let max: u32 = units.iter().map(|u| u.stats.max_health).sum();
            let left: u32 = units.iter().map(|u| u.health).sum();
            (max - left) as f64 / max as f64
        };
        MetricsRecord {
            game,
            seed: initial.seed(),
            stabs,
            shots,
            cover_hits,
            shots_at_cover_fraction: if shots == 0 { 0.0 } else { cover_hits as f64 / shots as f64 },
            mean_hero_distance,
            shields_used: shields,
            lost_hp_heroes_fraction: lost(final_state.heroes()),
            lost_hp_enemies_fraction: lost(final_state.enemies()),
            outcome: final_state.outcome(),
            turns: final_state.turns_played(),
            steps: final_state.step_count(),
        }
    }
}

/// Re-executes a replay and computes its metrics.
pub fn metrics_from_replay(game: u64, replay: &Replay) -> Result<MetricsRecord, ReplayError> {
    let run = replay.verify()?;
    let log: Vec<Occurrence> = run.steps.iter().flat_map(|(_, o)| o.log.iter().copied()).collect();
    Ok(MetricsRecord::from_game(game, &run.initial, &log, &run.final_state))
}

/// Means over a set of games.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub games: usize,
    pub stabs: f64,
    pub shots: f64,
    /// Pooled: all cover hits over all shots.
    pub shots_at_cover_fraction: f64,
    pub mean_hero_distance: f64,
    pub shields_used: f64,
    pub lost_hp_heroes_fraction: f64,
    pub lost_hp_enemies_fraction: f64,
    pub win_rate: f64,
    pub loss_rate: f64,
    pub draw_rate: f64,
    pub turns: f64,
    pub steps: f64,
}

impl Aggregate {
    pub fn from_records(records: &[MetricsRecord]) -> Aggregate {
        let n = records.len();
        if n == 0 {
            return Aggregate::default();
        }
        let mean = |f: &dyn Fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n as f64;
        let rate = |o: Outcome| records.iter().filter(|r| r.outcome == o).count() as f64 / n as f64;
        let shots: u64 = records.iter().map(|r| r.shots as u64).sum();
        let covers: u64 = records.iter().map(|r| r.cover_hits as u64).sum();
        Aggregate {
            games: n,
            stabs: mean(&|r| r.stabs as f64),
            shots: mean(&|r| r.shots as f64),
            shots_at_cover_fraction: if shots == 0 { 0.0 } else { covers as f64 / shots as f64 },
            mean_hero_distance: mean(&|r| r.mean_hero_distance),
            shields_used: mean(&|r| r.shields_used as f64),
            lost_hp_heroes_fraction: mean(&|r| r.lost_hp_heroes_fraction),
            lost_hp_enemies_fraction: mean(&|r| r.lost_hp_enemies_fraction),
            win_rate: rate(Outcome::Win),
            loss_rate: rate(Outcome::Loss),
            draw_rate: rate(Outcome::Draw),
            turns: mean(&|r| r.turns as f64),
            steps: mean(&|r| r.steps as f64),
        }
    }

    /// `(name, value)` pairs in report order.
    pub fn rows(&self) -> [(&'static str, f64); 12] {
        [
            ("stabs", self.stabs),
            ("shots", self.shots),
            ("shots_at_cover_fraction", self.shots_at_cover_fraction),
            ("mean_hero_distance", self.mean_hero_distance),
            ("shields_used", self.shields_used),
            ("lost_hp_heroes_fraction", self.lost_hp_heroes_fraction),
            ("lost_hp_enemies_fraction", self.lost_hp_enemies_fraction),
            ("win_rate", self.win_rate),
            ("loss_rate", self.loss_rate),
            ("draw_rate", self.draw_rate),
            ("turns", self.turns),
            ("steps", self.steps),
        ]
    }
}
