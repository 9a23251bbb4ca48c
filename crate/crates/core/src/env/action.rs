//! The 61-way hero action space: 3 heroes × 20 sub-actions + a global end-of-turn.

use super::scenario::{NUM_ENEMIES, NUM_HEROES};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const SUB_ACTIONS: usize = 20;
pub const NUM_ACTIONS: usize = NUM_HEROES * SUB_ACTIONS + 1;
pub const END_TURN_INDEX: u8 = (NUM_ACTIONS - 1) as u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
        Direction::SW,
        Direction::W,
        Direction::NW,
    ];

    /// Offset with `y` growing southwards.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::N => (0, -1),
            Direction::NE => (1, -1),
            Direction::E => (1, 0),
            Direction::SE => (1, 1),
            Direction::S => (0, 1),
            Direction::SW => (-1, 1),
            Direction::W => (-1, 0),
            Direction::NW => (-1, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubAction {
    Move(Direction),
    Shoot(u8),
    Stab(u8),
    Shield,
    /// The hero is done for this turn.
    Pass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    EndTurn,
    Hero { hero: u8, sub: SubAction },
}

impl Action {
    pub fn index(self) -> u8 {
        match self {
            Action::EndTurn => END_TURN_INDEX,
            Action::Hero { hero, sub } => {
                let s = match sub {
                    SubAction::Move(d) => d as u8,
                    SubAction::Shoot(e) => 8 + e,
                    SubAction::Stab(e) => 8 + NUM_ENEMIES as u8 + e,
                    SubAction::Shield => 18,
                    SubAction::Pass => 19,
                };
                hero * SUB_ACTIONS as u8 + s
            }
        }
    }

    pub fn from_index(index: u8) -> Option<Action> {
        let i = index as usize;
        if i == END_TURN_INDEX as usize {
            return Some(Action::EndTurn);
        }
        if i >= NUM_ACTIONS {
            return None;
        }
        let hero = (i / SUB_ACTIONS) as u8;
        let s = (i % SUB_ACTIONS) as u8;
        let sub = match s {
            0..=7 => SubAction::Move(Direction::ALL[s as usize]),
            8..=12 => SubAction::Shoot(s - 8),
            13..=17 => SubAction::Stab(s - 13),
            18 => SubAction::Shield,
            _ => SubAction::Pass,
        };
        Some(Action::Hero { hero, sub })
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..NUM_ACTIONS as u8).map(|i| Action::from_index(i).expect("in range"))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::EndTurn => write!(f, "end-turn"),
            Action::Hero { hero, sub } => match sub {
                SubAction::Move(d) => write!(f, "hero{hero} move {d:?}"),
                SubAction::Shoot(e) => write!(f, "hero{hero} shoot enemy{e}"),
                SubAction::Stab(e) => write!(f, "hero{hero} stab enemy{e}"),
                SubAction::Shield => write!(f, "hero{hero} shield"),
                SubAction::Pass => write!(f, "hero{hero} pass"),
            },
        }
    }
}

/// Bit `i` set iff action index `i` is legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActionMask(pub u64);

impl ActionMask {
    pub fn contains(self, index: u8) -> bool {
        (index as usize) < NUM_ACTIONS && self.0 >> index & 1 == 1
    }

    pub fn insert(&mut self, index: u8) {
        self.0 |= 1 << index;
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..NUM_ACTIONS as u8).filter(move |&i| self.contains(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_bijection() {
        assert_eq!(NUM_ACTIONS, 61);
        let mut seen = std::collections::HashSet::new();
        for i in 0..NUM_ACTIONS as u8 {
            let a = Action::from_index(i).unwrap();
            assert_eq!(a.index(), i);
            assert!(seen.insert(a));
        }
        assert!(Action::from_index(61).is_none());
        assert_eq!(Action::EndTurn.index(), 60);
    }

    #[test]
    fn mask_bits() {
        let mut m = ActionMask::default();
        m.insert(60);
        m.insert(3);
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![3, 60]);
        assert!(!m.contains(61));
    }
}
