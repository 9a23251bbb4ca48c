use super::{Agent, EvalError, EvalSetup, MetricsRecord};
use crate::env::Outcome;
use crate::nn::PolicyModel;
use crate::reward::{Coefficient, RewardConfig, RewardSpace};
use crate::rollout::{derive_seed, streams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_BINS: usize = 20;
pub const DEFAULT_WIDEN: f64 = 1.5;

/// One sweep game: its coefficients and turn-normalized metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub game: u64,
    pub seed: u64,
    pub config: RewardConfig,
    pub stabs_per_turn: f64,
    pub shots_per_turn: f64,
    pub cover_hits_per_turn: f64,
    pub shields_per_turn: f64,
    pub mean_hero_distance: f64,
    pub lost_hp_heroes_fraction: f64,
    pub lost_hp_enemies_fraction: f64,
    pub win: f64,
    pub outcome: Outcome,
    pub turns: u32,
}

impl SweepRow {
    pub fn new(config: RewardConfig, m: &MetricsRecord) -> SweepRow {
        let t = m.turns.max(1) as f64;
        SweepRow {
            game: m.game,
            seed: m.seed,
            config,
            stabs_per_turn: m.stabs as f64 / t,
            shots_per_turn: m.shots as f64 / t,
            cover_hits_per_turn: m.cover_hits as f64 / t,
            shields_per_turn: m.shields_used as f64 / t,
            mean_hero_distance: m.mean_hero_distance,
            lost_hp_heroes_fraction: m.lost_hp_heroes_fraction,
            lost_hp_enemies_fraction: m.lost_hp_enemies_fraction,
            win: if m.outcome == Outcome::Win { 1.0 } else { 0.0 },
            outcome: m.outcome,
            turns: m.turns,
        }
    }
}

/// A sweep metric that can be charted against a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    StabsPerTurn,
    ShotsPerTurn,
    CoverHitsPerTurn,
    ShieldsPerTurn,
    MeanHeroDistance,
    LostHpHeroesFraction,
    LostHpEnemiesFraction,
    WinRate,
}

impl SweepMetric {
    pub const ALL: [SweepMetric; 8] = [
        SweepMetric::StabsPerTurn,
        SweepMetric::ShotsPerTurn,
        SweepMetric::CoverHitsPerTurn,
        SweepMetric::ShieldsPerTurn,
        SweepMetric::MeanHeroDistance,
        SweepMetric::LostHpHeroesFraction,
        SweepMetric::LostHpEnemiesFraction,
        SweepMetric::WinRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepMetric::StabsPerTurn => "stabs_per_turn",
            SweepMetric::ShotsPerTurn => "shots_per_turn",
            SweepMetric::CoverHitsPerTurn => "cover_hits_per_turn",
            SweepMetric::ShieldsPerTurn => "shields_per_turn",
            SweepMetric::MeanHeroDistance => "mean_hero_distance",
            SweepMetric::LostHpHeroesFraction => "lost_hp_heroes_fraction",
            SweepMetric::LostHpEnemiesFraction => "lost_hp_enemies_fraction",
            SweepMetric::WinRate => "win_rate",
        }
    }

    pub fn value(self, r: &SweepRow) -> f64 {
        match self {
            SweepMetric::StabsPerTurn => r.stabs_per_turn,
            SweepMetric::ShotsPerTurn => r.shots_per_turn,
            SweepMetric::CoverHitsPerTurn => r.cover_hits_per_turn,
            SweepMetric::ShieldsPerTurn => r.shields_per_turn,
            SweepMetric::MeanHeroDistance => r.mean_hero_distance,
            SweepMetric::LostHpHeroesFraction => r.lost_hp_heroes_fraction,
            SweepMetric::LostHpEnemiesFraction => r.lost_hp_enemies_fraction,
            SweepMetric::WinRate => r.win,
        }
    }

    /// The metric most directly driven by each coefficient.
    pub fn paired_with(c: Coefficient) -> SweepMetric {
        match c {
            Coefficient::Stab => SweepMetric::StabsPerTurn,
            Coefficient::CvrShooting => SweepMetric::CoverHitsPerTurn,
            Coefficient::HeroShot => SweepMetric::ShotsPerTurn,
            Coefficient::UsefulShld => SweepMetric::ShieldsPerTurn,
            Coefficient::NmyDamage => SweepMetric::LostHpHeroesFraction,
            Coefficient::HeroDistance => SweepMetric::MeanHeroDistance,
            Coefficient::Win => SweepMetric::WinRate,
        }
    }
}

impl fmt::Display for SweepMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Coefficients of sweep game `index`.
pub fn sweep_config(space: &RewardSpace, seed: u64, index: u64) -> RewardConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::REWARD, index));
    space.sample_config(&mut rng)
}

/// Plays `n_games` greedy games, each with freshly drawn coefficients held
/// constant for the whole game. Coefficients come from the training lattice
/// with every interval widened by `widen` around its midpoint. The model is
/// only read.
pub fn continuum_sweep(
    setup: &EvalSetup,
    model: &PolicyModel,
    n_games: usize,
    seed: u64,
    widen: f64,
) -> Result<Vec<SweepRow>, EvalError> {
    let agent = Agent::Model {
        model,
        conditioned: true,
    };
    setup.scenario.validate()?;
    setup.check_agent(agent)?;
    let space = setup.reward_space.widened(widen);
    (0..n_games as u64)
        .into_par_iter()
        .map(|i| {
            let config = sweep_config(&space, seed, i);
            let game_seed = EvalSetup::game_seed(seed, i);
            let ep = setup
                .play(agent, config, game_seed)
                .map_err(|source| EvalError::Rollout { game: i, source })?;
            let m = MetricsRecord::from_game(i, &ep.initial, &ep.log, &ep.final_state);
            Ok(SweepRow::new(config, &m))
        })
        .collect()
}

/// One equal-width bin of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean: Option<f64>,
    /// 95% normal-approximation interval; `None` with fewer than 2 samples.
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl Bin {
    pub fn ci_defined(&self) -> bool {
        self.ci_lo.is_some()
    }
}

/// Mean of a metric per coefficient bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub coefficient: Coefficient,
    pub metric: SweepMetric,
    pub edges: Vec<f64>,
    pub bins: Vec<Bin>,
    /// Training interval of the coefficient.
    pub bounds: (f64, f64),
}

impl BinnedCurve {
    /// Spearman correlation between bin centers and bin means (non-empty bins).
    pub fn spearman(&self) -> Option<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self.bins.iter().filter_map(|b| b.mean.map(|m| (b.center, m))).unzip();
        spearman(&x, &y)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurveError {
    #[error("no sweep rows to bin")]
    Empty,
    #[error("bin count must be at least 1")]
    NoBins,
}

/// Bins `rows` by `coefficient` into `bins` equal-width bins over the sampled range.
pub fn binned_curve(
    rows: &[SweepRow],
    coefficient: Coefficient,
    metric: SweepMetric,
    bins: usize,
    bounds: (f64, f64),
) -> Result<BinnedCurve, CurveError> {
    if rows.is_empty() {
        return Err(CurveError::Empty);
    }
    if bins == 0 {
        return Err(CurveError::NoBins);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.config.get(coefficient)).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for (x, r) in xs.iter().zip(rows) {
        let idx = if width > 0.0 {
            (((x - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        samples[idx].push(metric.value(r));
    }
    let bins = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n = s.len();
            let mean = (n > 0).then(|| s.iter().sum::<f64>() / n as f64);
            let half = (n >= 2).then(|| {
                let m = mean.expect("non-empty");
                let var = s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            });
            Bin {
                lo: edges[i],
                hi: edges[i + 1],
                center: 0.5 * (edges[i] + edges[i + 1]),
                count: n,
                mean,
                ci_lo: half.map(|h| mean.expect("non-empty") - h),
                ci_hi: half.map(|h| mean.expect("non-empty") + h),
            }
        })
        .collect();
    Ok(BinnedCurve {
        coefficient,
        metric,
        edges,
        bins,
        bounds,
    })
}

/// Ranks with ties given their average rank (1-based).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` when undefined (fewer than 2 points or
/// a constant input).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
