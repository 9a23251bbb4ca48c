//! Hand-written controllers: enemy behavior rules and the Contact heuristic.
//!
//! Every rule is a priority list evaluated one tick at a time. The engine
//! calls [`enemy_policy`] repeatedly during the enemy phase until it yields
//! [`EnemyAction::Pass`]; each other action spends a move or the unit's
//! attack, so a turn always terminates.

use crate::env::{Action, Cell, Direction, GameState, SubAction, Unit, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnemyAction {
    Move(Direction),
    /// Index into the hero array.
    Shoot(u8),
    Stab(u8),
    Pass,
}

/// Nearest living unit by Euclidean distance; ties go to lower health, then lower index.
fn nearest<'a>(from: Cell, units: impl Iterator<Item = (usize, &'a Unit)>) -> Option<usize> {
    units
        .filter(|(_, u)| u.alive())
        .min_by_key(|(i, u)| (from.dist2(u.pos), u.health, *i))
        .map(|(i, _)| i)
}

/// Free neighbor that strictly shrinks (`toward`) or grows the squared
/// distance to `target` the most. Ties keep compass order.
pub fn greedy_step(state: &GameState, from: Cell, target: Cell, toward: bool) -> Option<Direction> {
    let here = from.dist2(target);
    let mut best: Option<(Direction, i32)> = None;
    for d in Direction::ALL {
        let to = from.offset(d.delta());
        if !state.is_free(to) {
            continue;
        }
        let score = if toward {
            to.dist2(target)
        } else {
            -to.dist2(target)
        };
        let improves = if toward {
            score < here
        } else {
            -score > here
        };
        if improves && best.is_none_or(|(_, s)| score < s) {
            best = Some((d, score));
        }
    }
    best.map(|(d, _)| d)
}

fn can_shoot(state: &GameState, shooter: &Unit, target: &Unit) -> bool {
    target.alive()
        && shooter.pos.within_range(target.pos, shooter.stats.shot_range)
        && state.blocking_cover(shooter.pos, target.pos).is_none()
}

/// Nearest hero the enemy can hit with a shot (in range, clear line).
fn nearest_visible_hero(state: &GameState, me: &Unit) -> Option<usize> {
    nearest(
        me.pos,
        state
            .heroes()
            .iter()
            .enumerate()
            .filter(|(_, h)| can_shoot(state, me, h)),
    )
}

/// Next tick of the behavior rules for enemy `enemy`.
pub fn enemy_policy(state: &GameState, enemy: usize) -> EnemyAction {
    let me = &state.enemies()[enemy];
    if !me.alive() {
        return EnemyAction::Pass;
    }
    let Some(t) = nearest(me.pos, state.heroes().iter().enumerate()) else {
        return EnemyAction::Pass;
    };
    let target = &state.heroes()[t];
    let adjacent = me.pos.chebyshev(target.pos) == 1;
    let step_toward = || {
        if me.moves_left > 0 {
            greedy_step(state, me.pos, target.pos, true)
        } else {
            None
        }
    };
    match me.kind {
        UnitKind::Brute => {
            if me.attack_ready && adjacent {
                return EnemyAction::Stab(t as u8);
            }
            if let Some(d) = step_toward() {
                return EnemyAction::Move(d);
            }
            if me.attack_ready && can_shoot(state, me, target) {
                return EnemyAction::Shoot(t as u8);
            }
            EnemyAction::Pass
        }
        UnitKind::Soldier => {
            if me.attack_ready && adjacent {
                return EnemyAction::Stab(t as u8);
            }
            if me.attack_ready {
                if let Some(v) = nearest_visible_hero(state, me) {
                    return EnemyAction::Shoot(v as u8);
                }
            }
            match step_toward() {
                Some(d) => EnemyAction::Move(d),
                None => EnemyAction::Pass,
            }
        }
        UnitKind::Archer => {
            let keep = state.scenario().rules.archer_keep_distance * me.stats.shot_range as f64;
            let dist = me.pos.distance(target.pos);
            if me.moves_left > 0 && dist < keep {
                if let Some(d) = greedy_step(state, me.pos, target.pos, false) {
                    return EnemyAction::Move(d);
                }
            }
            if me.attack_ready {
                if let Some(v) = nearest_visible_hero(state, me) {
                    return EnemyAction::Shoot(v as u8);
                }
                if let Some(d) = step_toward() {
                    let to = me.pos.offset(d.delta());
                    if to.distance(target.pos) >= keep {
                        return EnemyAction::Move(d);
                    }
                }
            }
            EnemyAction::Pass
        }
        UnitKind::Hero => EnemyAction::Pass,
    }
}

/// Next action of the Contact heuristic: heroes are handled one at a time,
/// each closing in on its nearest enemy to stab it, shooting only at close
/// range. Ends the turn once no hero has anything left to do.
pub fn contact_heuristic_action(state: &GameState) -> Action {
    let frac = state.scenario().rules.contact_shoot_fraction;
    for (h, hero) in state.heroes().iter().enumerate() {
        if !hero.alive() || hero.done {
            continue;
        }
        let enemies = state.enemies();
        let Some(e) = nearest(hero.pos, enemies.iter().enumerate()) else {
            break;
        };
        let enemy = &enemies[e];
        let act = |sub| Action::Hero { hero: h as u8, sub };
        if hero.attack_ready {
            let adjacent = nearest(
                hero.pos,
                enemies
                    .iter()
                    .enumerate()
                    .filter(|(_, u)| hero.pos.chebyshev(u.pos) == 1),
            );
            if let Some(a) = adjacent {
                return act(SubAction::Stab(a as u8));
            }
        }
        let step = if hero.moves_left > 0 {
            greedy_step(state, hero.pos, enemy.pos, true)
        } else {
            None
        };
        let reachable = (hero.pos.chebyshev(enemy.pos) - 1) as u32 <= hero.moves_left;
        if let (true, Some(d)) = (reachable && hero.attack_ready, step) {
            return act(SubAction::Move(d));
        }
        if hero.attack_ready
            && hero.pos.within_range(enemy.pos, hero.stats.shot_range)
            && hero.pos.distance(enemy.pos) <= frac * hero.stats.shot_range as f64
        {
            return act(SubAction::Shoot(e as u8));
        }
        if let Some(d) = step {
            return act(SubAction::Move(d));
        }
    }
    Action::EndTurn
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Scenario;
    use std::sync::Arc;

    fn state(heroes: [(i32, i32); 3], enemies: [(i32, i32); 5], covers: &[(i32, i32)]) -> GameState {
        let c = |(x, y)| Cell::new(x, y);
        GameState::from_parts(
            Arc::new(Scenario::default()),
            covers.iter().copied().map(c).collect(),
            heroes.map(c),
            enemies.map(c),
        )
        .unwrap()
    }

    #[test]
    fn no_living_heroes_means_pass() {
        let mut s = state([(0, 0), (1, 0), (2, 0)], [(10, 10), (12, 12), (14, 14), (16, 16), (18, 18)], &[]);
        for h in s.heroes_mut() {
            h.health = 0;
        }
        for e in 0..5 {
            assert_eq!(enemy_policy(&s, e), EnemyAction::Pass);
        }
    }

    #[test]
    fn archer_shoots_visible_hero_in_range() {
        // Archer (enemy 1) at distance 5 with a clear line: beyond its keep distance of 4.
        let s = state([(5, 5), (0, 19), (1, 19)], [(19, 0), (10, 5), (19, 19), (17, 0), (15, 0)], &[]);
        assert_eq!(enemy_policy(&s, 1), EnemyAction::Shoot(0));
    }

    #[test]
    fn archer_retreats_when_crowded() {
        let s = state([(5, 5), (0, 19), (1, 19)], [(19, 0), (7, 5), (19, 19), (17, 0), (15, 0)], &[]);
        match enemy_policy(&s, 1) {
            EnemyAction::Move(d) => {
                let to = Cell::new(7, 5).offset(d.delta());
                assert!(to.dist2(Cell::new(5, 5)) > 4);
            }
            other => panic!("expected a retreat, got {other:?}"),
        }
    }

    #[test]
    fn brute_stabs_adjacent_hero() {
        let s = state([(5, 5), (0, 19), (1, 19)], [(6, 6), (12, 5), (19, 19), (17, 0), (15, 0)], &[]);
        assert_eq!(enemy_policy(&s, 0), EnemyAction::Stab(0));
    }

    #[test]
    fn soldier_does_not_shoot_through_cover() {
        let s = state([(5, 5), (0, 19), (1, 19)], [(19, 0), (19, 2), (19, 19), (9, 5), (15, 0)], &[(7, 5)]);
        assert!(matches!(enemy_policy(&s, 3), EnemyAction::Move(_)));
    }

    #[test]
    fn contact_stabs_adjacent_enemy() {
        let s = state([(5, 5), (0, 19), (1, 19)], [(19, 0), (5, 6), (19, 19), (17, 0), (15, 0)], &[]);
        assert_eq!(
            contact_heuristic_action(&s),
            Action::Hero {
                hero: 0,
                sub: SubAction::Stab(1)
            }
        );
    }

    #[test]
    fn contact_ends_turn_when_exhausted() {
        let mut s = state([(5, 5), (0, 19), (1, 19)], [(19, 0), (15, 15), (19, 19), (17, 0), (15, 0)], &[]);
        for h in s.heroes_mut() {
            h.moves_left = 0;
            h.attack_ready = false;
        }
        assert_eq!(contact_heuristic_action(&s), Action::EndTurn);
    }
}
