use super::UpdateStats;
use crate::reward::RewardConfig;
use crate::rollout::Episode;
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::path::Path;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub seed: u64,
    #[serde(rename = "r_Stab")]
    pub r_stab: f64,
    #[serde(rename = "r_CvrShooting")]
    pub r_cvr_shooting: f64,
    #[serde(rename = "r_HeroShot")]
    pub r_hero_shot: f64,
    #[serde(rename = "r_UsefulShld")]
    pub r_useful_shld: f64,
    #[serde(rename = "r_NmyDamage")]
    pub r_nmy_damage: f64,
    #[serde(rename = "r_HeroDistance")]
    pub r_hero_distance: f64,
    #[serde(rename = "r_Win")]
    pub r_win: f64,
    #[serde(rename = "return")]
    pub total_reward: f64,
    pub outcome: String,
    pub steps: u64,
    pub turns: u32,
    pub stabs: u32,
    pub shots: u32,
    pub cover_hits: u32,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

impl EpisodeLog {
    pub fn new(episode: u64, seed: u64, config: &RewardConfig, ep: &Episode) -> EpisodeLog {
        let ev = ep.total_events();
        let [r_stab, r_cvr_shooting, r_hero_shot, r_useful_shld, r_nmy_damage, r_hero_distance, r_win] =
            config.to_array();
        EpisodeLog {
            episode,
            seed,
            r_stab,
            r_cvr_shooting,
            r_hero_shot,
            r_useful_shld,
            r_nmy_damage,
            r_hero_distance,
            r_win,
            total_reward: ep.total_reward(),
            outcome: ep.final_state.outcome().as_str().to_string(),
            steps: ep.len() as u64,
            turns: ep.final_state.turns_played(),
            stabs: ev.stab,
            shots: ev.hero_shot + ev.cvr_shooting,
            cover_hits: ev.cvr_shooting,
            policy_loss: f64::NAN,
            value_loss: f64::NAN,
            entropy: f64::NAN,
            grad_norm: f64::NAN,
        }
    }

    pub fn config(&self) -> RewardConfig {
        RewardConfig::from_array([
            self.r_stab,
            self.r_cvr_shooting,
            self.r_hero_shot,
            self.r_useful_shld,
            self.r_nmy_damage,
            self.r_hero_distance,
            self.r_win,
        ])
    }

    pub(super) fn set_losses(&mut self, s: &UpdateStats) {
        self.policy_loss = s.policy_loss;
        self.value_loss = s.value_loss;
        self.entropy = s.entropy;
        self.grad_norm = s.grad_norm;
    }
}

/// Append-only CSV training log.
pub struct TrainLogWriter {
    writer: csv::Writer<File>,
}

impl TrainLogWriter {
    /// Creates (truncating) `path` and writes the header row.
    pub fn create(path: &Path) -> Result<TrainLogWriter, csv::Error> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(TrainLogWriter {
            writer: csv::WriterBuilder::new().has_headers(true).from_writer(file),
        })
    }

    pub fn append(&mut self, rows: &[EpisodeLog]) -> Result<(), csv::Error> {
        for r in rows {
            self.writer.serialize(r)?;
        }
        self.writer.flush()?;
        Ok(())
    }
}
