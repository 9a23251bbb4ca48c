//! Engine rules checked against oracles written from the rules alone, driven
//! by random legal play.

mod common;

use cari_core::agents::contact_heuristic_action;
use cari_core::env::{Action, Scenario, SubAction, UnitKind};
use common::{check_transition, fuzz_game, game, random_legal};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_play_respects_every_rule(seed in any::<u64>()) {
        fuzz_game(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn same_actions_same_game(seed in any::<u64>()) {
        let (end, actions) = fuzz_game(seed).map_err(TestCaseError::fail)?;
        let mut again = game(seed);
        for &a in &actions {
            again.apply(Action::from_index(a).unwrap()).unwrap();
        }
        prop_assert_eq!(again.digest(), end.digest());
        prop_assert_eq!(again, end);
    }

    #[test]
    fn illegal_actions_never_mutate(seed in any::<u64>(), steps in 0usize..120) {
        let mut s = game(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            if s.outcome().is_over() {
                break;
            }
            let a = random_legal(&s, &mut rng);
            s.apply(a).unwrap();
        }
        let legal = s.legal_actions();
        for i in 0..61u8 {
            if !legal.contains(i) {
                let before = s.clone();
                prop_assert!(s.apply(Action::from_index(i).unwrap()).is_err());
                prop_assert_eq!(&s, &before);
            }
        }
    }

    #[test]
    fn heuristic_is_legal_and_never_shields_or_snipes(seed in any::<u64>()) {
        let mut s = game(seed);
        while !s.outcome().is_over() {
            let a = contact_heuristic_action(&s);
            prop_assert!(s.legal_actions().contains(a.index()), "illegal {:?}", a);
            if let Action::Hero { hero, sub } = a {
                prop_assert!(sub != SubAction::Shield);
                if let SubAction::Shoot(e) = sub {
                    let h = &s.heroes()[hero as usize];
                    let t = &s.enemies()[e as usize];
                    prop_assert!(h.pos.distance(t.pos) <= h.stats.shot_range as f64);
                }
            }
            let before = s.clone();
            let out = s.apply(a).unwrap();
            check_transition(&before, a, &s, &out.log).map_err(TestCaseError::fail)?;
        }
    }
}

#[test]
fn fresh_game_uses_the_configured_roster() {
    let s = game(1);
    let kinds: Vec<UnitKind> = s.enemies().iter().map(|u| u.kind).collect();
    assert_eq!(kinds, Scenario::default().enemy_team);
    assert_eq!(s.covers().len(), 40);
    assert_eq!(s.board_size(), 20);
    assert!(s.heroes().iter().all(|h| h.health == 10 && h.stats.has_shield));
}
