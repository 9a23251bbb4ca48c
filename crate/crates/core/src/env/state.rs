//! Authoritative game state and its transition rules.

use super::action::{Action, ActionMask, SubAction, NUM_ACTIONS};
use super::geometry::{cells_between, Cell};
use super::scenario::{Scenario, ScenarioError, UnitKind, UnitStats, NUM_ENEMIES, NUM_HEROES};
use crate::agents::{enemy_policy, EnemyAction};
use crate::reward::{events_from_log, EventVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

/// Turns a shield stays unavailable after absorbing a hit.
pub const SHIELD_COOLDOWN: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Team {
    Hero,
    Enemy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    HeroPhase,
    EnemyPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    Win,
    Loss,
    Draw,
}

impl Outcome {
    pub fn is_over(self) -> bool {
        self != Outcome::Ongoing
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ongoing => "ongoing",
            Outcome::Win => "win",
            Outcome::Loss => "loss",
            Outcome::Draw => "draw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: u8,
    pub team: Team,
    pub kind: UnitKind,
    pub stats: UnitStats,
    pub pos: Cell,
    pub health: u32,
    pub moves_left: u32,
    /// One attack (shot or stab) per turn.
    pub attack_ready: bool,
    /// Set by `Pass`; the unit takes no further action this turn.
    pub done: bool,
    pub shield_active: bool,
    pub shield_cooldown: u8,
}

impl Unit {
    fn spawn(id: u8, team: Team, kind: UnitKind, stats: UnitStats, pos: Cell) -> Unit {
        Unit {
            id,
            team,
            kind,
            stats,
            pos,
            health: stats.max_health,
            moves_left: stats.move_budget,
            attack_ready: true,
            done: false,
            shield_active: false,
            shield_cooldown: 0,
        }
    }

    pub fn alive(&self) -> bool {
        self.health > 0
    }

    fn refresh(&mut self) {
        self.moves_left = self.stats.move_budget;
        self.attack_ready = true;
        self.done = false;
    }
}

/// Static cover layout of one game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverMap {
    size: u32,
    grid: Vec<bool>,
    cells: Vec<Cell>,
}

impl CoverMap {
    pub fn new(size: u32, mut cells: Vec<Cell>) -> CoverMap {
        cells.sort();
        cells.dedup();
        let mut grid = vec![false; (size * size) as usize];
        for c in &cells {
            grid[(c.y as u32 * size + c.x as u32) as usize] = true;
        }
        CoverMap { size, grid, cells }
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.in_bounds(self.size) && self.grid[(c.y as u32 * self.size + c.x as u32) as usize]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    Shot,
    Stab,
}

/// Primitive things that happened during a transition, in order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Occurrence {
    HeroMoved { hero: u8, from: Cell, to: Cell },
    /// `blocked_by` is the cover that took the shot, if any.
    HeroShot { hero: u8, target: u8, blocked_by: Option<Cell>, damage: u32 },
    HeroStabbed { hero: u8, target: u8, damage: u32 },
    ShieldRaised { hero: u8 },
    HeroPassed { hero: u8 },
    EnemyMoved { enemy: u8, from: Cell, to: Cell },
    EnemyAttacked { enemy: u8, hero: u8, kind: AttackKind, absorbed: bool, damage: u32 },
    UnitKilled { id: u8 },
    /// Mean pairwise hero distance once the enemy phase of `turn` resolved.
    TurnEnded { turn: u32, hero_distance: f64 },
    GameOver { outcome: Outcome },
}

/// Result of one transition.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepOutcome {
    pub events: EventVector,
    pub log: Vec<Occurrence>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleViolation {
    #[error("action index {0} is outside the action space")]
    UnknownAction(u8),
    #[error("the game is already over")]
    GameOver,
    #[error("actions are only accepted during the {expected:?}")]
    WrongPhase { expected: Phase },
    #[error("hero {0} is dead")]
    HeroDead(u8),
    #[error("hero {0} already passed this turn")]
    HeroDone(u8),
    #[error("hero {0} has no movement left")]
    NoMovesLeft(u8),
    #[error("destination {0:?} is off the board")]
    OffBoard(Cell),
    #[error("destination {0:?} is occupied")]
    Occupied(Cell),
    #[error("hero {0} already attacked this turn")]
    AttackSpent(u8),
    #[error("target enemy {0} is dead")]
    TargetDead(u8),
    #[error("target enemy {target} is out of shot range of hero {hero}")]
    OutOfRange { hero: u8, target: u8 },
    #[error("target enemy {target} is not adjacent to hero {hero}")]
    NotAdjacent { hero: u8, target: u8 },
    #[error("hero {0} already has an active shield")]
    ShieldActive(u8),
    #[error("hero {hero}'s shield is cooling down for {turns} more turn(s)")]
    ShieldCooling { hero: u8, turns: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    scenario: Arc<Scenario>,
    seed: u64,
    covers: Arc<CoverMap>,
    heroes: [Unit; NUM_HEROES],
    enemies: [Unit; NUM_ENEMIES],
    turn: u32,
    phase: Phase,
    step_count: u32,
    outcome: Outcome,
}

/// Mean pairwise Euclidean distance over living heroes; 0 with fewer than two.
pub fn mean_pairwise_distance(heroes: &[Unit]) -> f64 {
    let alive: Vec<Cell> = heroes.iter().filter(|h| h.alive()).map(|h| h.pos).collect();
    if alive.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..alive.len() {
        for j in i + 1..alive.len() {
            sum += alive[i].distance(alive[j]);
            n += 1;
        }
    }
    sum / n as f64
}

impl GameState {
    /// Places covers, heroes and enemies uniformly at random on distinct cells.
    pub fn new_game(seed: u64, scenario: Arc<Scenario>) -> Result<GameState, ScenarioError> {
        scenario.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = scenario.board_size;
        let k = scenario.cover_count as usize + NUM_HEROES + NUM_ENEMIES;
        let picks = rand::seq::index::sample(&mut rng, (n * n) as usize, k);
        let cells: Vec<Cell> = picks
            .iter()
            .map(|i| Cell::new((i as u32 % n) as i32, (i as u32 / n) as i32))
            .collect();
        let c = scenario.cover_count as usize;
        let covers = CoverMap::new(n, cells[..c].to_vec());
        let heroes = std::array::from_fn(|i| {
            Unit::spawn(i as u8, Team::Hero, UnitKind::Hero, scenario.hero, cells[c + i])
        });
        let enemies = std::array::from_fn(|i| {
            let kind = scenario.enemy_team[i];
            Unit::spawn(
                (NUM_HEROES + i) as u8,
                Team::Enemy,
                kind,
                *scenario.stats(kind),
                cells[c + NUM_HEROES + i],
            )
        });
        Ok(GameState {
            scenario,
            seed,
            covers: Arc::new(covers),
            heroes,
            enemies,
            turn: 1,
            phase: Phase::HeroPhase,
            step_count: 0,
            outcome: Outcome::Ongoing,
        })
    }

    /// Builds a state from explicit parts; used for hand-made positions.
    pub fn from_parts(
        scenario: Arc<Scenario>,
        covers: Vec<Cell>,
        heroes: [Cell; NUM_HEROES],
        enemies: [Cell; NUM_ENEMIES],
    ) -> Result<GameState, ScenarioError> {
        scenario.validate()?;
        let n = scenario.board_size;
        let mut all: Vec<Cell> = covers.iter().chain(&heroes).chain(&enemies).copied().collect();
        if all.iter().any(|c| !c.in_bounds(n)) {
            return Err(ScenarioError {
                field: "positions".into(),
                message: "cell outside the board".into(),
            });
        }
        all.sort();
        all.dedup();
        if all.len() != covers.len() + NUM_HEROES + NUM_ENEMIES {
            return Err(ScenarioError {
                field: "positions".into(),
                message: "cells must be pairwise distinct".into(),
            });
        }
        let heroes = std::array::from_fn(|i| {
            Unit::spawn(i as u8, Team::Hero, UnitKind::Hero, scenario.hero, heroes[i])
        });
        let enemies = std::array::from_fn(|i| {
            let kind = scenario.enemy_team[i];
            Unit::spawn((NUM_HEROES + i) as u8, Team::Enemy, kind, *scenario.stats(kind), enemies[i])
        });
        Ok(GameState {
            covers: Arc::new(CoverMap::new(n, covers)),
            scenario,
            seed: 0,
            heroes,
            enemies,
            turn: 1,
            phase: Phase::HeroPhase,
            step_count: 0,
            outcome: Outcome::Ongoing,
        })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn board_size(&self) -> u32 {
        self.scenario.board_size
    }

    pub fn covers(&self) -> &CoverMap {
        &self.covers
    }

    pub fn heroes(&self) -> &[Unit; NUM_HEROES] {
        &self.heroes
    }

    pub fn enemies(&self) -> &[Unit; NUM_ENEMIES] {
        &self.enemies
    }

    /// Mutable unit access for building test positions.
    pub fn heroes_mut(&mut self) -> &mut [Unit; NUM_HEROES] {
        &mut self.heroes
    }

    pub fn enemies_mut(&mut self) -> &mut [Unit; NUM_ENEMIES] {
        &mut self.enemies
    }

    pub fn turn(&self) -> u32 {
        self.turn
    }

    /// Completed or in-progress turns, capped at the turn limit.
    pub fn turns_played(&self) -> u32 {
        self.turn.min(self.scenario.turn_limit)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn is_cover(&self, c: Cell) -> bool {
        self.covers.contains(c)
    }

    pub fn living_unit_at(&self, c: Cell) -> Option<&Unit> {
        self.heroes
            .iter()
            .chain(self.enemies.iter())
            .find(|u| u.alive() && u.pos == c)
    }

    /// In bounds, not a cover, not holding a living unit.
    pub fn is_free(&self, c: Cell) -> bool {
        c.in_bounds(self.board_size()) && !self.is_cover(c) && self.living_unit_at(c).is_none()
    }

    /// First cover on the line of fire from `from` to `to`, endpoints excluded.
    pub fn blocking_cover(&self, from: Cell, to: Cell) -> Option<Cell> {
        cells_between(from, to).into_iter().find(|c| self.is_cover(*c))
    }

    pub fn hero_distance(&self) -> f64 {
        mean_pairwise_distance(&self.heroes)
    }

    /// Terminal status recomputed from unit health and the turn counter.
    pub fn is_terminal(&self) -> Outcome {
        if self.enemies.iter().all(|e| !e.alive()) {
            Outcome::Win
        } else if self.heroes.iter().all(|h| !h.alive()) {
            Outcome::Loss
        } else if self.turn > self.scenario.turn_limit {
            Outcome::Draw
        } else {
            Outcome::Ongoing
        }
    }

    /// Checks the preconditions of `action` without applying it.
    pub fn check(&self, action: Action) -> Result<(), RuleViolation> {
        if self.outcome.is_over() {
            return Err(RuleViolation::GameOver);
        }
        if self.phase != Phase::HeroPhase {
            return Err(RuleViolation::WrongPhase {
                expected: Phase::HeroPhase,
            });
        }
        let (hero_idx, sub) = match action {
            Action::EndTurn => return Ok(()),
            Action::Hero { hero, sub } => (hero, sub),
        };
        let hero = self
            .heroes
            .get(hero_idx as usize)
            .ok_or(RuleViolation::UnknownAction(action.index()))?;
        if !hero.alive() {
            return Err(RuleViolation::HeroDead(hero_idx));
        }
        if hero.done {
            return Err(RuleViolation::HeroDone(hero_idx));
        }
        let target = |e: u8| -> Result<&Unit, RuleViolation> {
            let t = self
                .enemies
                .get(e as usize)
                .ok_or(RuleViolation::UnknownAction(action.index()))?;
            if !hero.attack_ready {
                return Err(RuleViolation::AttackSpent(hero_idx));
            }
            if !t.alive() {
                return Err(RuleViolation::TargetDead(e));
            }
            Ok(t)
        };
        match sub {
            SubAction::Move(d) => {
                if hero.moves_left == 0 {
                    return Err(RuleViolation::NoMovesLeft(hero_idx));
                }
                let to = hero.pos.offset(d.delta());
                if !to.in_bounds(self.board_size()) {
                    return Err(RuleViolation::OffBoard(to));
                }
                if !self.is_free(to) {
                    return Err(RuleViolation::Occupied(to));
                }
            }
            SubAction::Shoot(e) => {
                let t = target(e)?;
                if !hero.pos.within_range(t.pos, hero.stats.shot_range) {
                    return Err(RuleViolation::OutOfRange {
                        hero: hero_idx,
                        target: e,
                    });
                }
            }
            SubAction::Stab(e) => {
                let t = target(e)?;
                if hero.pos.chebyshev(t.pos) != 1 {
                    return Err(RuleViolation::NotAdjacent {
                        hero: hero_idx,
                        target: e,
                    });
                }
            }
            SubAction::Shield => {
                if hero.shield_active {
                    return Err(RuleViolation::ShieldActive(hero_idx));
                }
                if hero.shield_cooldown > 0 {
                    return Err(RuleViolation::ShieldCooling {
                        hero: hero_idx,
                        turns: hero.shield_cooldown,
                    });
                }
            }
            SubAction::Pass => {}
        }
        Ok(())
    }

    /// Legal hero actions. Empty once the game is over.
    pub fn legal_actions(&self) -> ActionMask {
        let mut mask = ActionMask::default();
        if self.outcome.is_over() || self.phase != Phase::HeroPhase {
            return mask;
        }
        for i in 0..NUM_ACTIONS as u8 {
            let a = Action::from_index(i).expect("in range");
            if self.check(a).is_ok() {
                mask.insert(i);
            }
        }
        mask
    }

    /// Pure transition.
    pub fn step(&self, action: Action) -> Result<(GameState, StepOutcome), RuleViolation> {
        let mut next = self.clone();
        let out = next.apply(action)?;
        Ok((next, out))
    }

    /// In-place transition; the state is untouched when the action is illegal.
    pub fn apply(&mut self, action: Action) -> Result<StepOutcome, RuleViolation> {
        self.check(action)?;
        let mut log = Vec::new();
        match action {
            Action::EndTurn => self.end_turn(&mut log),
            Action::Hero { hero, sub } => {
                let h = hero as usize;
                match sub {
                    SubAction::Move(d) => {
                        let from = self.heroes[h].pos;
                        let to = from.offset(d.delta());
                        self.heroes[h].pos = to;
                        self.heroes[h].moves_left -= 1;
                        log.push(Occurrence::HeroMoved { hero, from, to });
                    }
                    SubAction::Shoot(e) => {
                        self.heroes[h].attack_ready = false;
                        let from = self.heroes[h].pos;
                        let to = self.enemies[e as usize].pos;
                        match self.blocking_cover(from, to) {
                            Some(cover) => log.push(Occurrence::HeroShot {
                                hero,
                                target: e,
                                blocked_by: Some(cover),
                                damage: 0,
                            }),
                            None => {
                                let damage = self.damage_enemy(e, self.heroes[h].stats.shot_damage);
                                log.push(Occurrence::HeroShot {
                                    hero,
                                    target: e,
                                    blocked_by: None,
                                    damage,
                                });
                                self.log_enemy_kill(e, &mut log);
                            }
                        }
                    }
                    SubAction::Stab(e) => {
                        self.heroes[h].attack_ready = false;
                        let damage = self.damage_enemy(e, self.heroes[h].stats.stab_damage);
                        log.push(Occurrence::HeroStabbed {
                            hero,
                            target: e,
                            damage,
                        });
                        self.log_enemy_kill(e, &mut log);
                    }
                    SubAction::Shield => {
                        self.heroes[h].shield_active = true;
                        log.push(Occurrence::ShieldRaised { hero });
                    }
                    SubAction::Pass => {
                        self.heroes[h].done = true;
                        log.push(Occurrence::HeroPassed { hero });
                    }
                }
                if self.enemies.iter().all(|e| !e.alive()) {
                    self.outcome = Outcome::Win;
                    log.push(Occurrence::GameOver {
                        outcome: Outcome::Win,
                    });
                }
            }
        }
        self.step_count += 1;
        Ok(StepOutcome {
            events: events_from_log(&log),
            log,
        })
    }

    fn damage_enemy(&mut self, e: u8, amount: u32) -> u32 {
        let t = &mut self.enemies[e as usize];
        let dealt = amount.min(t.health);
        t.health -= dealt;
        dealt
    }

    fn log_enemy_kill(&self, e: u8, log: &mut Vec<Occurrence>) {
        if !self.enemies[e as usize].alive() {
            log.push(Occurrence::UnitKilled {
                id: self.enemies[e as usize].id,
            });
        }
    }

    fn end_turn(&mut self, log: &mut Vec<Occurrence>) {
        for h in self.heroes.iter_mut() {
            h.shield_cooldown = h.shield_cooldown.saturating_sub(1);
        }
        self.phase = Phase::EnemyPhase;
        let enemy = self.run_enemy_turn().expect("phase was just set");
        log.extend(enemy.log);
        if self.heroes.iter().all(|h| !h.alive()) {
            self.outcome = Outcome::Loss;
            log.push(Occurrence::GameOver {
                outcome: Outcome::Loss,
            });
            return;
        }
        log.push(Occurrence::TurnEnded {
            turn: self.turn,
            hero_distance: self.hero_distance(),
        });
        self.turn += 1;
        if self.turn > self.scenario.turn_limit {
            self.outcome = Outcome::Draw;
            log.push(Occurrence::GameOver {
                outcome: Outcome::Draw,
            });
            return;
        }
        for h in self.heroes.iter_mut().filter(|h| h.alive()) {
            h.refresh();
        }
    }

    /// Lets every living enemy act through its behavior rules, then hands
    /// control back to the heroes.
    pub fn run_enemy_turn(&mut self) -> Result<StepOutcome, RuleViolation> {
        if self.phase != Phase::EnemyPhase {
            return Err(RuleViolation::WrongPhase {
                expected: Phase::EnemyPhase,
            });
        }
        let mut log = Vec::new();
        for e in 0..NUM_ENEMIES {
            if !self.enemies[e].alive() {
                continue;
            }
            self.enemies[e].refresh();
            // Every non-pass action spends a move or the attack.
            let mut budget = self.enemies[e].stats.move_budget + 2;
            while budget > 0 && self.heroes.iter().any(|h| h.alive()) {
                budget -= 1;
                if !self.apply_enemy_action(e, enemy_policy(self, e), &mut log) {
                    break;
                }
            }
            self.enemies[e].done = true;
            if self.heroes.iter().all(|h| !h.alive()) {
                break;
            }
        }
        self.phase = Phase::HeroPhase;
        Ok(StepOutcome {
            events: events_from_log(&log),
            log,
        })
    }

    /// Returns false when the enemy is finished for this turn.
    fn apply_enemy_action(&mut self, e: usize, action: EnemyAction, log: &mut Vec<Occurrence>) -> bool {
        let enemy = self.enemies[e];
        match action {
            EnemyAction::Pass => false,
            EnemyAction::Move(d) => {
                let to = enemy.pos.offset(d.delta());
                if enemy.moves_left == 0 || !self.is_free(to) {
                    debug_assert!(false, "enemy policy produced an illegal move");
                    return false;
                }
                self.enemies[e].pos = to;
                self.enemies[e].moves_left -= 1;
                log.push(Occurrence::EnemyMoved {
                    enemy: e as u8,
                    from: enemy.pos,
                    to,
                });
                true
            }
            EnemyAction::Shoot(h) | EnemyAction::Stab(h) => {
                let kind = if matches!(action, EnemyAction::Shoot(_)) {
                    AttackKind::Shot
                } else {
                    AttackKind::Stab
                };
                let target = self.heroes[h as usize];
                let legal = enemy.attack_ready
                    && target.alive()
                    && match kind {
                        AttackKind::Shot => {
                            enemy.pos.within_range(target.pos, enemy.stats.shot_range)
                                && self.blocking_cover(enemy.pos, target.pos).is_none()
                        }
                        AttackKind::Stab => enemy.pos.chebyshev(target.pos) == 1,
                    };
                if !legal {
                    debug_assert!(false, "enemy policy produced an illegal attack");
                    return false;
                }
                self.enemies[e].attack_ready = false;
                let hero = &mut self.heroes[h as usize];
                if hero.shield_active {
                    hero.shield_active = false;
                    hero.shield_cooldown = SHIELD_COOLDOWN;
                    log.push(Occurrence::EnemyAttacked {
                        enemy: e as u8,
                        hero: h,
                        kind,
                        absorbed: true,
                        damage: 0,
                    });
                } else {
                    let amount = match kind {
                        AttackKind::Shot => enemy.stats.shot_damage,
                        AttackKind::Stab => enemy.stats.stab_damage,
                    };
                    let dealt = amount.min(hero.health);
                    hero.health -= dealt;
                    log.push(Occurrence::EnemyAttacked {
                        enemy: e as u8,
                        hero: h,
                        kind,
                        absorbed: false,
                        damage: dealt,
                    });
                    if !hero.alive() {
                        log.push(Occurrence::UnitKilled { id: hero.id });
                    }
                }
                true
            }
        }
    }

    /// Hex SHA-256 over a canonical encoding of the full state.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
