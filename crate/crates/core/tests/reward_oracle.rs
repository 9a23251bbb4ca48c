//! Live rewards and metrics against recomputation from replay logs.

mod common;

use cari_core::env::Replay;
use cari_core::eval::{episode_replay, metrics_from_replay, MetricsRecord};
use cari_core::reward::{archetype_config, ArchetypeName, Coefficient, RewardConfig, RewardFunction, RewardSpace};
use cari_core::rollout::{play_episode, Controller};
use common::{game, oracle_metrics, oracle_step_reward, INTERVALS, PRESETS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lattice_config() -> impl Strategy<Value = [f64; 7]> {
    let axes: Vec<_> = INTERVALS
        .iter()
        .map(|&(lo, hi, step)| (0..=((hi - lo) / step).round() as i64).prop_map(move |k| lo + k as f64 * step))
        .collect();
    axes.prop_map(|v| [v[0], v[1], v[2], v[3], v[4], v[5], v[6]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn live_reward_equals_log_oracle(seed in any::<u64>(), coeffs in lattice_config()) {
        let config = RewardConfig::from_array(coeffs);
        let reward = RewardFunction::new(RewardSpace::default(), config, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = play_episode(game(seed), Controller::Heuristic, &reward, false, &mut rng).unwrap();
        let run = episode_replay(&ep, Some(config)).verify().unwrap();
        prop_assert_eq!(run.steps.len(), ep.rewards.len());
        for ((_, out), live) in run.steps.iter().zip(&ep.rewards) {
            let oracle = oracle_step_reward(&out.log, coeffs, 20);
            prop_assert!((oracle - live).abs() <= 1e-12, "{} vs {}", oracle, live);
        }
    }

    #[test]
    fn metrics_equal_log_oracle(seed in any::<u64>()) {
        let reward = RewardFunction::new(RewardSpace::default(), RewardConfig::default(), 20);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = play_episode(game(seed), Controller::Heuristic, &reward, false, &mut rng).unwrap();
        let replay = Replay::from_json(&episode_replay(&ep, None).to_json()).unwrap();
        let record = metrics_from_replay(0, &replay).unwrap();
        let run = replay.verify().unwrap();
        let m = oracle_metrics(run.steps.iter().map(|(_, o)| o.log.as_slice()), &run.final_state);
        check_record(&record, &m).map_err(TestCaseError::fail)?;
        prop_assert_eq!(&record, &MetricsRecord::from_game(0, &ep.initial, &ep.log, &ep.final_state));
    }
}

fn check_record(r: &MetricsRecord, m: &common::OracleMetrics) -> Result<(), String> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let ok = r.stabs == m.stabs
        && r.shots == m.shots
        && r.cover_hits == m.cover_hits
        && r.shields_used == m.shields
        && r.outcome == m.outcome
        && r.steps == m.steps
        && close(r.lost_hp_heroes_fraction, m.lost_heroes)
        && close(r.lost_hp_enemies_fraction, m.lost_enemies)
        && m.mean_hero_distance.is_none_or(|d| close(d, r.mean_hero_distance));
    if ok {
        Ok(())
    } else {
        Err(format!("{r:?} vs {m:?}"))
    }
}

#[test]
fn presets_match_the_reference_table() {
    let space = RewardSpace::default();
    for (name, expected) in PRESETS {
        let got = archetype_config(name.parse::<ArchetypeName>().unwrap(), &space);
        assert_eq!(got.to_array(), expected, "{name}");
    }
}

#[test]
fn intervals_match_the_reference_table() {
    let space = RewardSpace::default();
    for (c, (lo, hi, step)) in Coefficient::ALL.into_iter().zip(INTERVALS) {
        let l = space.interval(c);
        assert_eq!((l.min(), l.max(), l.step()), (lo, hi, step), "{c}");
    }
}
