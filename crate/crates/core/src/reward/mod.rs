//! Parameterized reward: `R(r, s) = Σ r_i · θ_i(s)` over seven rewarded events.
//!
//! A [`RewardConfig`] holds the coefficient vector `r`; a [`RewardSpace`] holds
//! the training interval of each coefficient, which also fixes the per-term
//! normalization used by [`compute_reward`].

mod archetype;
mod events;
mod lattice;

pub use archetype::{archetype_config, ArchetypeName};
pub use events::{detect_events, events_from_log, EventError, EventVector};
pub use lattice::{IntervalSpec, Lattice, LatticeError};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// The seven rewarded events, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Coefficient {
    #[serde(rename = "r_Stab")]
    Stab,
    #[serde(rename = "r_CvrShooting")]
    CvrShooting,
    #[serde(rename = "r_HeroShot")]
    HeroShot,
    #[serde(rename = "r_UsefulShld")]
    UsefulShld,
    #[serde(rename = "r_NmyDamage")]
    NmyDamage,
    #[serde(rename = "r_HeroDistance")]
    HeroDistance,
    #[serde(rename = "r_Win")]
    Win,
}

pub const NUM_COEFFICIENTS: usize = 7;

impl Coefficient {
    pub const ALL: [Coefficient; NUM_COEFFICIENTS] = [
        Coefficient::Stab,
        Coefficient::CvrShooting,
        Coefficient::HeroShot,
        Coefficient::UsefulShld,
        Coefficient::NmyDamage,
        Coefficient::HeroDistance,
        Coefficient::Win,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Coefficient::Stab => "r_Stab",
            Coefficient::CvrShooting => "r_CvrShooting",
            Coefficient::HeroShot => "r_HeroShot",
            Coefficient::UsefulShld => "r_UsefulShld",
            Coefficient::NmyDamage => "r_NmyDamage",
            Coefficient::HeroDistance => "r_HeroDistance",
            Coefficient::Win => "r_Win",
        }
    }

    pub fn from_name(name: &str) -> Option<Coefficient> {
        Coefficient::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(name) || c.name()[2..].eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A coefficient vector `r`. Serialized as an ordered record keyed by the
/// event notation (`r_Stab`, ..., `r_Win`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardConfig {
    #[serde(rename = "r_Stab")]
    pub stab: f64,
    #[serde(rename = "r_CvrShooting")]
    pub cvr_shooting: f64,
    #[serde(rename = "r_HeroShot")]
    pub hero_shot: f64,
    #[serde(rename = "r_UsefulShld")]
    pub useful_shld: f64,
    #[serde(rename = "r_NmyDamage")]
    pub nmy_damage: f64,
    #[serde(rename = "r_HeroDistance")]
    pub hero_distance: f64,
    #[serde(rename = "r_Win")]
    pub win: f64,
}

impl RewardConfig {
    pub fn from_array(v: [f64; NUM_COEFFICIENTS]) -> Self {
        RewardConfig {
            stab: v[0],
            cvr_shooting: v[1],
            hero_shot: v[2],
            useful_shld: v[3],
            nmy_damage: v[4],
            hero_distance: v[5],
            win: v[6],
        }
    }

    pub fn to_array(&self) -> [f64; NUM_COEFFICIENTS] {
        [
            self.stab,
            self.cvr_shooting,
            self.hero_shot,
            self.useful_shld,
            self.nmy_damage,
            self.hero_distance,
            self.win,
        ]
    }

    pub fn get(&self, c: Coefficient) -> f64 {
        self.to_array()[c.index()]
    }

    pub fn set(&mut self, c: Coefficient, v: f64) {
        let mut a = self.to_array();
        a[c.index()] = v;
        *self = RewardConfig::from_array(a);
    }

    /// Returns the first non-finite coefficient, if any.
    pub fn check_finite(&self) -> Result<(), Coefficient> {
        match Coefficient::ALL.into_iter().find(|c| !self.get(*c).is_finite()) {
            Some(c) => Err(c),
            None => Ok(()),
        }
    }
}

/// How the `NmyDamage` event is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmyDamageMode {
    /// One event per enemy hit that actually removes health.
    #[default]
    Occurrences,
    /// Hit-points removed.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{coefficient}: {source}")]
pub struct IntervalError {
    pub coefficient: Coefficient,
    pub source: LatticeError,
}

/// Training intervals of all seven coefficients plus event measurement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RewardSpaceSpec", into = "RewardSpaceSpec")]
pub struct RewardSpace {
    intervals: [Lattice; NUM_COEFFICIENTS],
    pub nmy_damage_mode: NmyDamageMode,
}

/// Configuration-file form of [`RewardSpace`]. Omitted intervals keep their
/// reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSpaceSpec {
    #[serde(rename = "r_Stab")]
    pub stab: IntervalSpec,
    #[serde(rename = "r_CvrShooting")]
    pub cvr_shooting: IntervalSpec,
    #[serde(rename = "r_HeroShot")]
    pub hero_shot: IntervalSpec,
    #[serde(rename = "r_UsefulShld")]
    pub useful_shld: IntervalSpec,
    #[serde(rename = "r_NmyDamage")]
    pub nmy_damage: IntervalSpec,
    #[serde(rename = "r_HeroDistance")]
    pub hero_distance: IntervalSpec,
    #[serde(rename = "r_Win")]
    pub win: IntervalSpec,
    #[serde(default)]
    pub nmy_damage_mode: NmyDamageMode,
}

impl Default for RewardSpaceSpec {
    fn default() -> Self {
        RewardSpace::default().into()
    }
}

impl TryFrom<RewardSpaceSpec> for RewardSpace {
    type Error = IntervalError;

    fn try_from(s: RewardSpaceSpec) -> Result<Self, Self::Error> {
        let specs = [
            s.stab,
            s.cvr_shooting,
            s.hero_shot,
            s.useful_shld,
            s.nmy_damage,
            s.hero_distance,
            s.win,
        ];
        let mut intervals = [Lattice::point(0.0).expect("zero point"); NUM_COEFFICIENTS];
        for (c, spec) in Coefficient::ALL.into_iter().zip(specs) {
            intervals[c.index()] = Lattice::try_from(spec).map_err(|source| IntervalError {
                coefficient: c,
                source,
            })?;
        }
        Ok(RewardSpace {
            intervals,
            nmy_damage_mode: s.nmy_damage_mode,
        })
    }
}

impl From<RewardSpace> for RewardSpaceSpec {
    fn from(r: RewardSpace) -> Self {
        let i = r.intervals.map(IntervalSpec::from);
        RewardSpaceSpec {
            stab: i[0],
            cvr_shooting: i[1],
            hero_shot: i[2],
            useful_shld: i[3],
            nmy_damage: i[4],
            hero_distance: i[5],
            win: i[6],
            nmy_damage_mode: r.nmy_damage_mode,
        }
    }
}

impl Default for RewardSpace {
    /// The reference intervals: step 0.1 everywhere except `r_Win` (step 1).
    fn default() -> Self {
        let l = |min, max, step| Lattice::new(min, max, step).expect("valid default interval");
        RewardSpace {
            intervals: [
                l(-1.0, 3.0, 0.1),
                l(-2.0, 1.0, 0.1),
                l(-1.0, 2.5, 0.1),
                l(-1.0, 2.5, 0.1),
                l(-3.5, 1.0, 0.1),
                l(-3.5, 3.5, 0.1),
                l(0.0, 20.0, 1.0),
            ],
            nmy_damage_mode: NmyDamageMode::Occurrences,
        }
    }
}

impl RewardSpace {
    pub fn new(intervals: [Lattice; NUM_COEFFICIENTS]) -> Self {
        RewardSpace {
            intervals,
            nmy_damage_mode: NmyDamageMode::Occurrences,
        }
    }

    pub fn interval(&self, c: Coefficient) -> &Lattice {
        &self.intervals[c.index()]
    }

    pub fn intervals(&self) -> &[Lattice; NUM_COEFFICIENTS] {
        &self.intervals
    }

    /// Every interval widened around its midpoint; used to probe beyond training bounds.
    pub fn widened(&self, factor: f64) -> RewardSpace {
        RewardSpace {
            intervals: self.intervals.map(|l| l.widened(factor)),
            nmy_damage_mode: self.nmy_damage_mode,
        }
    }

    /// Draws every coefficient independently and uniformly from its lattice.
    pub fn sample_config<R: Rng + ?Sized>(&self, rng: &mut R) -> RewardConfig {
        RewardConfig::from_array(self.intervals.map(|l| l.value(rng.gen_range(0..l.len()))))
    }

    /// Whether every coefficient of `config` lies on its training lattice.
    pub fn is_on_lattice(&self, config: &RewardConfig) -> bool {
        Coefficient::ALL
            .into_iter()
            .all(|c| self.interval(c).is_on_lattice(config.get(c)))
    }

    /// Number of distinct coefficient vectors on the lattice.
    pub fn lattice_cardinality(&self) -> u128 {
        self.intervals.iter().map(|l| l.len() as u128).product()
    }

    /// Per-coefficient normalizer `max(|min|, |max|)`; 1 for an all-zero interval.
    pub fn normalizers(&self) -> [f64; NUM_COEFFICIENTS] {
        self.intervals.map(|l| {
            let m = l.max_abs_bound();
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
    }

    /// Coefficients mapped to `[-1, 1]` by interval midpoint and half-width,
    /// as fed to the policy. Values outside the interval map outside `[-1, 1]`.
    pub fn encode(&self, config: &RewardConfig) -> [f64; NUM_COEFFICIENTS] {
        let v = config.to_array();
        let mut out = [0.0; NUM_COEFFICIENTS];
        for (i, l) in self.intervals.iter().enumerate() {
            let hw = l.half_width();
            out[i] = if hw > 0.0 { (v[i] - l.midpoint()) / hw } else { 0.0 };
        }
        out
    }

    /// Normalized event magnitudes `θ̃`: hero distance divided by the board diagonal,
    /// enemy damage measured per [`NmyDamageMode`].
    pub fn event_terms(&self, events: &EventVector, board_diagonal: f64) -> [f64; NUM_COEFFICIENTS] {
        let nmy = match self.nmy_damage_mode {
            NmyDamageMode::Occurrences => events.nmy_damage as f64,
            NmyDamageMode::Magnitude => events.nmy_damage_hp as f64,
        };
        [
            events.stab as f64,
            events.cvr_shooting as f64,
            events.hero_shot as f64,
            events.useful_shld as f64,
            nmy,
            events.hero_distance / board_diagonal,
            events.win_flag as f64,
        ]
    }
}

/// `Σ (r_i / max(|r_i,min|, |r_i,max|)) · θ̃_i`.
pub fn compute_reward(
    space: &RewardSpace,
    config: &RewardConfig,
    events: &EventVector,
    board_diagonal: f64,
) -> f64 {
    let terms = space.event_terms(events, board_diagonal);
    let norms = space.normalizers();
    config
        .to_array()
        .iter()
        .zip(norms)
        .zip(terms)
        .map(|((r, n), t)| r / n * t)
        .sum()
}

/// A reward function with its coefficients and normalization bound together.
#[derive(Debug, Clone)]
pub struct RewardFunction {
    pub space: RewardSpace,
    pub config: RewardConfig,
    pub board_diagonal: f64,
}

impl RewardFunction {
    pub fn new(space: RewardSpace, config: RewardConfig, board_size: u32) -> Self {
        RewardFunction {
            space,
            config,
            board_diagonal: board_diagonal(board_size),
        }
    }

    pub fn reward(&self, events: &EventVector) -> f64 {
        compute_reward(&self.space, &self.config, events, self.board_diagonal)
    }
}

/// Euclidean distance between opposite corner cells.
pub fn board_diagonal(board_size: u32) -> f64 {
    let d = board_size.saturating_sub(1).max(1) as f64;
    (2.0 * d * d).sqrt()
}
