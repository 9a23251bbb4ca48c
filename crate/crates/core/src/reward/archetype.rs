use super::{Coefficient, RewardConfig, RewardSpace};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The seven extreme play-styles used as reference points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchetypeName {
    Sniper,
    Contact,
    Grouped,
    Scattered,
    Safe,
    #[serde(rename = "DPS")]
    Dps,
    WinOnly,
}

impl ArchetypeName {
    pub const ALL: [ArchetypeName; 7] = [
        ArchetypeName::Sniper,
        ArchetypeName::Contact,
        ArchetypeName::Grouped,
        ArchetypeName::Scattered,
        ArchetypeName::Safe,
        ArchetypeName::Dps,
        ArchetypeName::WinOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchetypeName::Sniper => "Sniper",
            ArchetypeName::Contact => "Contact",
            ArchetypeName::Grouped => "Grouped",
            ArchetypeName::Scattered => "Scattered",
            ArchetypeName::Safe => "Safe",
            ArchetypeName::Dps => "DPS",
            ArchetypeName::WinOnly => "WinOnly",
        }
    }
}

impl fmt::Display for ArchetypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("unknown archetype `{0}` (expected one of Sniper, Contact, Grouped, Scattered, Safe, DPS, WinOnly)")]
pub struct UnknownArchetype(pub String);

impl FromStr for ArchetypeName {
    type Err = UnknownArchetype;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        ArchetypeName::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(&key))
            .ok_or_else(|| UnknownArchetype(s.to_string()))
    }
}

#[derive(Clone, Copy)]
enum Level {
    Min,
    Max,
    Zero,
    /// `num/den` of the upper bound, snapped to the lattice.
    OfMax(i64, i64),
}

/// Column of the preset table, rows in [`Coefficient::ALL`] order:
/// Stab, CvrShooting, HeroShot, UsefulShld, NmyDamage, HeroDistance, Win.
fn levels(name: ArchetypeName) -> [Level; 7] {
    use Level::*;
    const HALF: Level = OfMax(1, 2);
    match name {
        ArchetypeName::Sniper => [Min, Min, Max, Min, Max, Zero, HALF],
        ArchetypeName::Contact => [Max, Max, Min, Min, Max, Zero, HALF],
        ArchetypeName::Safe => [OfMax(1, 4), Max, OfMax(1, 4), Max, Min, Zero, HALF],
        ArchetypeName::Dps => [OfMax(3, 4), Max, OfMax(3, 4), Min, Max, Zero, HALF],
        ArchetypeName::Grouped => [HALF, Max, HALF, Min, Max, Min, HALF],
        ArchetypeName::Scattered => [HALF, Max, HALF, Min, Max, Max, HALF],
        ArchetypeName::WinOnly => [Zero, Zero, Zero, Zero, Zero, Zero, HALF],
    }
}

/// Coefficient vector of an archetype, expressed relative to the bounds of `space`.
pub fn archetype_config(name: ArchetypeName, space: &RewardSpace) -> RewardConfig {
    let mut out = [0.0; 7];
    for (c, level) in Coefficient::ALL.into_iter().zip(levels(name)) {
        let l = space.interval(c);
        out[c.index()] = match level {
            Level::Min => l.min(),
            Level::Max => l.max(),
            Level::Zero => 0.0,
            Level::OfMax(n, d) => l.fraction_of_max(n, d),
        };
    }
    RewardConfig::from_array(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sniper_preset() {
        let c = archetype_config(ArchetypeName::Sniper, &RewardSpace::default());
        assert_eq!(
            c,
            RewardConfig {
                stab: -1.0,
                cvr_shooting: -2.0,
                hero_shot: 2.5,
                useful_shld: -1.0,
                nmy_damage: 1.0,
                hero_distance: 0.0,
                win: 10.0,
            }
        );
    }

    #[test]
    fn distance_presets_use_bounds() {
        let s = RewardSpace::default();
        assert_eq!(archetype_config(ArchetypeName::Grouped, &s).hero_distance, -3.5);
        assert_eq!(archetype_config(ArchetypeName::Scattered, &s).hero_distance, 3.5);
    }

    #[test]
    fn presets_lie_on_lattice() {
        let s = RewardSpace::default();
        for a in ArchetypeName::ALL {
            let c = archetype_config(a, &s);
            assert!(s.is_on_lattice(&c), "{a}: {c:?}");
            assert_eq!(c.win, 10.0);
            assert_eq!(c, archetype_config(a, &s));
        }
    }

    #[test]
    fn parses_names_loosely() {
        assert_eq!("dps".parse::<ArchetypeName>().unwrap(), ArchetypeName::Dps);
        assert_eq!("Win Only".parse::<ArchetypeName>().unwrap(), ArchetypeName::WinOnly);
        assert_eq!("win_only".parse::<ArchetypeName>().unwrap(), ArchetypeName::WinOnly);
        assert!("rusher".parse::<ArchetypeName>().is_err());
    }
}
