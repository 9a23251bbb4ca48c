//! Oracles shared by the integration tests. They read only transition logs,
//! unit fields and hard-coded reference tables, never the reward or metric
//! code under test.

#![allow(dead_code)]

use cari_core::env::{Action, AttackKind, Cell, GameState, Occurrence, Outcome, Phase, Scenario, SubAction, Team};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Reference intervals `(min, max, step)` in coefficient order:
/// Stab, CvrShooting, HeroShot, UsefulShld, NmyDamage, HeroDistance, Win.
pub const INTERVALS: [(f64, f64, f64); 7] = [
    (-1.0, 3.0, 0.1),
    (-2.0, 1.0, 0.1),
    (-1.0, 2.5, 0.1),
    (-1.0, 2.5, 0.1),
    (-3.5, 1.0, 0.1),
    (-3.5, 3.5, 0.1),
    (0.0, 20.0, 1.0),
];

/// Archetype coefficients worked out by hand from the preset table
/// (min / max / fractions of max, rounded to the lattice, halves up).
pub const PRESETS: [(&str, [f64; 7]); 7] = [
    ("Sniper", [-1.0, -2.0, 2.5, -1.0, 1.0, 0.0, 10.0]),
    ("Contact", [3.0, 1.0, -1.0, -1.0, 1.0, 0.0, 10.0]),
    ("Grouped", [1.5, 1.0, 1.3, -1.0, 1.0, -3.5, 10.0]),
    ("Scattered", [1.5, 1.0, 1.3, -1.0, 1.0, 3.5, 10.0]),
    ("Safe", [0.8, 1.0, 0.6, 2.5, -3.5, 0.0, 10.0]),
    ("DPS", [2.3, 1.0, 1.9, -1.0, 1.0, 0.0, 10.0]),
    ("WinOnly", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0]),
];

/// Reward of one transition computed from its log alone.
pub fn oracle_step_reward(log: &[Occurrence], coefficients: [f64; 7], board_size: u32) -> f64 {
    let diag = (board_size as f64 - 1.0) * 2f64.sqrt();
    let mut theta = [0.0; 7];
    for o in log {
        match o {
            Occurrence::HeroStabbed { .. } => theta[0] += 1.0,
            Occurrence::HeroShot { blocked_by: Some(_), .. } => theta[1] += 1.0,
            Occurrence::HeroShot { blocked_by: None, .. } => theta[2] += 1.0,
            Occurrence::EnemyAttacked { absorbed: true, .. } => theta[3] += 1.0,
            Occurrence::EnemyAttacked { absorbed: false, damage, .. } if *damage > 0 => theta[4] += 1.0,
            Occurrence::TurnEnded { hero_distance, .. } => theta[5] += hero_distance / diag,
            Occurrence::GameOver { outcome: Outcome::Win } => theta[6] += 1.0,
            Occurrence::GameOver { outcome: Outcome::Loss } => theta[6] -= 1.0,
            _ => {}
        }
    }
    (0..7)
        .map(|i| {
            let (lo, hi, _): (f64, f64, f64) = INTERVALS[i];
            coefficients[i] / lo.abs().max(hi.abs()) * theta[i]
        })
        .sum()
}

/// Key metrics of a game recomputed from its per-step logs and final board.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub stabs: u32,
    pub shots: u32,
    pub cover_hits: u32,
    pub shields: u32,
    pub mean_hero_distance: Option<f64>,
    pub lost_heroes: f64,
    pub lost_enemies: f64,
    pub outcome: Outcome,
    pub steps: u32,
}

pub fn oracle_metrics<'a>(steps: impl IntoIterator<Item = &'a [Occurrence]>, final_state: &GameState) -> OracleMetrics {
    let mut m = OracleMetrics {
        stabs: 0,
        shots: 0,
        cover_hits: 0,
        shields: 0,
        mean_hero_distance: None,
        lost_heroes: 0.0,
        lost_enemies: 0.0,
        outcome: Outcome::Ongoing,
        steps: 0,
    };
    let mut distances = Vec::new();
    for log in steps {
        m.steps += 1;
        for o in log {
            match o {
                Occurrence::HeroStabbed { .. } => m.stabs += 1,
                Occurrence::HeroShot { blocked_by, .. } => {
                    m.shots += 1;
                    m.cover_hits += blocked_by.is_some() as u32;
                }
                Occurrence::ShieldRaised { .. } => m.shields += 1,
                Occurrence::TurnEnded { hero_distance, .. } => distances.push(*hero_distance),
                Occurrence::GameOver { outcome } => m.outcome = *outcome,
                _ => {}
            }
        }
    }
    if !distances.is_empty() {
        m.mean_hero_distance = Some(distances.iter().sum::<f64>() / distances.len() as f64);
    }
    let lost = |team: Team| {
        let units = final_state.heroes().iter().chain(final_state.enemies().iter()).filter(|u| u.team == team);
        let (max, left) = units.fold((0u32, 0u32), |(m, l), u| (m + u.stats.max_health, l + u.health));
        (max - left) as f64 / max as f64
    };
    m.lost_heroes = lost(Team::Hero);
    m.lost_enemies = lost(Team::Enemy);
    m
}

pub fn game(seed: u64) -> GameState {
    GameState::new_game(seed, Arc::new(Scenario::default())).unwrap()
}

const DIRS: [(i32, i32); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

/// Legal action indices derived from the unit fields: 20 slots per hero
/// (8 moves, 5 shots, 5 stabs, shield, pass) and the end of turn at 60.
pub fn oracle_mask(s: &GameState) -> Vec<u8> {
    let mut out = Vec::new();
    if s.outcome().is_over() || s.phase() != Phase::HeroPhase {
        return out;
    }
    let n = s.board_size() as i32;
    let occupied = |c: Cell| {
        s.covers().cells().contains(&c) || s.heroes().iter().chain(s.enemies().iter()).any(|u| u.health > 0 && u.pos == c)
    };
    for (h, hero) in s.heroes().iter().enumerate() {
        if hero.health == 0 || hero.done {
            continue;
        }
        let base = h as u8 * 20;
        for (i, (dx, dy)) in DIRS.iter().enumerate() {
            let to = Cell::new(hero.pos.x + dx, hero.pos.y + dy);
            if hero.moves_left > 0 && (0..n).contains(&to.x) && (0..n).contains(&to.y) && !occupied(to) {
                out.push(base + i as u8);
            }
        }
        for (e, enemy) in s.enemies().iter().enumerate() {
            if !hero.attack_ready || enemy.health == 0 {
                continue;
            }
            let (dx, dy) = (hero.pos.x - enemy.pos.x, hero.pos.y - enemy.pos.y);
            let range = hero.stats.shot_range as i32;
            if dx * dx + dy * dy <= range * range {
                out.push(base + 8 + e as u8);
            }
            if dx.abs().max(dy.abs()) == 1 {
                out.push(base + 13 + e as u8);
            }
        }
        if !hero.shield_active && hero.shield_cooldown == 0 {
            out.push(base + 18);
        }
        out.push(base + 19);
    }
    out.push(60);
    out.sort_unstable();
    out
}

pub fn random_legal(s: &GameState, rng: &mut ChaCha8Rng) -> Action {
    let legal: Vec<u8> = s.legal_actions().iter().collect();
    Action::from_index(legal[rng.gen_range(0..legal.len())]).unwrap()
}

/// Checks one enemy phase, reconstructed from the log of the end-of-turn step.
fn check_enemy_phase(before: &GameState, log: &[Occurrence]) -> Result<(), String> {
    let mut pos: Vec<Cell> = before.enemies().iter().map(|u| u.pos).collect();
    let mut enemy_alive: Vec<bool> = before.enemies().iter().map(|u| u.health > 0).collect();
    let mut hero_hp: Vec<u32> = before.heroes().iter().map(|u| u.health).collect();
    let hero_pos: Vec<Cell> = before.heroes().iter().map(|u| u.pos).collect();
    let mut moves = [0u32; 5];
    let mut attacks = [0u32; 5];
    let n_heroes = before.heroes().len() as u8;
    for o in log {
        match *o {
            Occurrence::EnemyMoved { enemy, from, to } => {
                let e = enemy as usize;
                if !enemy_alive[e] || pos[e] != from {
                    return Err(format!("enemy {e} moved from {from:?} but is at {:?}", pos[e]));
                }
                if from.chebyshev(to) != 1 || !to.in_bounds(before.board_size()) || before.is_cover(to) {
                    return Err(format!("enemy {e} made an invalid step {from:?} -> {to:?}"));
                }
                let blocked = pos.iter().zip(&enemy_alive).any(|(p, a)| *a && *p == to)
                    || hero_pos.iter().zip(&hero_hp).any(|(p, hp)| *hp > 0 && *p == to);
                if blocked {
                    return Err(format!("enemy {e} stepped onto an occupied cell {to:?}"));
                }
                pos[e] = to;
                moves[e] += 1;
            }
            Occurrence::EnemyAttacked { enemy, hero, kind, absorbed, damage } => {
                let (e, h) = (enemy as usize, hero as usize);
                let stats = &before.enemies()[e].stats;
                if !enemy_alive[e] || hero_hp[h] == 0 {
                    return Err(format!("dead unit in attack {e} -> {h}"));
                }
                let ok = match kind {
                    AttackKind::Shot => {
                        pos[e].within_range(hero_pos[h], stats.shot_range)
                            && before.blocking_cover(pos[e], hero_pos[h]).is_none()
                    }
                    AttackKind::Stab => pos[e].chebyshev(hero_pos[h]) == 1,
                };
                if !ok {
                    return Err(format!("enemy {e} made an impossible {kind:?} on hero {h}"));
                }
                let full = match kind {
                    AttackKind::Shot => stats.shot_damage,
                    AttackKind::Stab => stats.stab_damage,
                };
                let expected = if absorbed { 0 } else { full.min(hero_hp[h]) };
                if damage != expected {
                    return Err(format!("attack dealt {damage}, expected {expected}"));
                }
                hero_hp[h] -= damage;
                attacks[e] += 1;
            }
            Occurrence::UnitKilled { id } if id >= n_heroes => enemy_alive[(id - n_heroes) as usize] = false,
            _ => {}
        }
    }
    for (e, u) in before.enemies().iter().enumerate() {
        if moves[e] > u.stats.move_budget || attacks[e] > 1 {
            return Err(format!("enemy {e} took {} moves and {} attacks", moves[e], attacks[e]));
        }
    }
    Ok(())
}

/// Invariants of one transition `before --action--> after` with its log.
pub fn check_transition(before: &GameState, action: Action, after: &GameState, log: &[Occurrence]) -> Result<(), String> {
    let units = |s: &GameState| s.heroes().iter().chain(s.enemies().iter()).cloned().collect::<Vec<_>>();
    let (ub, ua) = (units(before), units(after));
    for (b, a) in ub.iter().zip(&ua) {
        if a.health > b.health {
            return Err(format!("unit {} healed {} -> {}", b.id, b.health, a.health));
        }
        if a.health > a.stats.max_health || a.alive() != (a.health > 0) {
            return Err(format!("unit {} has inconsistent health", a.id));
        }
        if a.team == Team::Enemy && a.shield_active {
            return Err(format!("enemy {} holds a shield", a.id));
        }
        if a.shield_cooldown > 2 || (a.shield_active && a.shield_cooldown != 0) {
            return Err(format!("unit {} has shield state {} / {}", a.id, a.shield_active, a.shield_cooldown));
        }
    }
    if before.covers().cells() != after.covers().cells() {
        return Err("covers moved".into());
    }
    if after.covers().len() != after.scenario().cover_count as usize {
        return Err("cover count changed".into());
    }
    let mut cells: Vec<Cell> = ua.iter().filter(|u| u.alive()).map(|u| u.pos).collect();
    cells.extend_from_slice(after.covers().cells());
    let n = cells.len();
    cells.sort();
    cells.dedup();
    if cells.len() != n {
        return Err("two living units or covers share a cell".into());
    }
    if !after.outcome().is_over() && after.turn() > after.scenario().turn_limit {
        return Err(format!("turn {} while the game is on", after.turn()));
    }
    if after.turns_played() > after.scenario().turn_limit || after.step_count() != before.step_count() + 1 {
        return Err("turn or step counters off".into());
    }
    if !after.outcome().is_over() && after.phase() != Phase::HeroPhase {
        return Err("control did not return to the heroes".into());
    }

    // Shield lifecycle: raised only by the hero's own action, dropped only by
    // an absorbed hit, cooldown 2 after absorption and one less per turn end.
    let end_turn = action == Action::EndTurn;
    for (h, (b, a)) in before.heroes().iter().zip(after.heroes()).enumerate() {
        let absorbed = log
            .iter()
            .any(|o| matches!(o, Occurrence::EnemyAttacked { hero, absorbed: true, .. } if *hero as usize == h));
        let raised = action
            == (Action::Hero {
                hero: h as u8,
                sub: SubAction::Shield,
            });
        let expected_active = raised || (b.shield_active && !absorbed);
        let expected_cooldown = if absorbed {
            2
        } else if end_turn {
            b.shield_cooldown.saturating_sub(1)
        } else {
            b.shield_cooldown
        };
        if a.shield_active != expected_active || a.shield_cooldown != expected_cooldown {
            return Err(format!(
                "hero {h}: shield {}/{} -> {}/{} (absorbed {absorbed}, raised {raised})",
                b.shield_active, b.shield_cooldown, a.shield_active, a.shield_cooldown
            ));
        }
    }

    let heroes_dead = after.heroes().iter().all(|u| !u.alive());
    let enemies_dead = after.enemies().iter().all(|u| !u.alive());
    let ok = match after.outcome() {
        Outcome::Win => enemies_dead,
        Outcome::Loss => heroes_dead && !enemies_dead,
        Outcome::Draw => !heroes_dead && !enemies_dead && after.turn() > after.scenario().turn_limit,
        Outcome::Ongoing => !heroes_dead && !enemies_dead,
    };
    if !ok {
        return Err(format!("outcome {:?} does not match the board", after.outcome()));
    }
    if end_turn {
        check_enemy_phase(before, log)?;
    }
    Ok(())
}

/// Plays one game with uniformly random legal actions, checking the legal
/// mask and every transition. Returns the final state and the actions.
pub fn fuzz_game(seed: u64) -> Result<(GameState, Vec<u8>), String> {
    let mut s = game(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let mut actions = Vec::new();
    let mut dealt = 0u32;
    while !s.outcome().is_over() {
        if oracle_mask(&s) != s.legal_actions().iter().collect::<Vec<_>>() {
            return Err(format!("legal mask differs from the rule oracle at step {}", s.step_count()));
        }
        let a = random_legal(&s, &mut rng);
        let before = s.clone();
        let out = s.apply(a).map_err(|e| e.to_string())?;
        for o in &out.log {
            match *o {
                Occurrence::HeroShot { damage, .. } | Occurrence::HeroStabbed { damage, .. } => dealt += damage,
                _ => {}
            }
        }
        check_transition(&before, a, &s, &out.log)?;
        actions.push(a.index());
        if actions.len() > 5000 {
            return Err("game did not terminate".into());
        }
    }
    let lost: u32 = s.enemies().iter().map(|u| u.stats.max_health - u.health).sum();
    if dealt != lost {
        return Err(format!("heroes dealt {dealt} but enemies lost {lost}"));
    }
    Ok((s, actions))
}
