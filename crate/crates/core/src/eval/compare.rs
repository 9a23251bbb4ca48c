use super::{evaluate, Aggregate, Agent, EvalError, EvalSetup, MetricsRecord};
use crate::nn::PolicyModel;
use crate::reward::{archetype_config, ArchetypeName, RewardConfig};
use serde::{Deserialize, Serialize};

/// The agents whose archetype play is compared.
#[derive(Debug, Clone)]
pub enum ArchetypeAgents<'a> {
    /// One fixed-reward model per archetype.
    Baselines(Vec<(ArchetypeName, &'a PolicyModel)>),
    /// One reward-conditioned model, queried with each archetype's coefficients.
    Cari(&'a PolicyModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeColumn {
    pub archetype: ArchetypeName,
    pub config: RewardConfig,
    pub aggregate: Aggregate,
    pub records: Vec<MetricsRecord>,
}

/// Metric means per archetype: one column per archetype, one row per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeReport {
    pub agent: String,
    pub games: usize,
    pub seed: u64,
    pub columns: Vec<ArchetypeColumn>,
}

impl ArchetypeReport {
    pub fn column(&self, name: ArchetypeName) -> Option<&ArchetypeColumn> {
        self.columns.iter().find(|c| c.archetype == name)
    }

    /// Metric names in row order.
    pub fn metric_names(&self) -> Vec<&'static str> {
        Aggregate::default().rows().iter().map(|(n, _)| *n).collect()
    }

    /// Archetype whose column has the extreme value of `metric`.
    pub fn argmax(&self, metric: &str, highest: bool) -> Option<ArchetypeName> {
        let value = |c: &ArchetypeColumn| c.aggregate.rows().iter().find(|(n, _)| *n == metric).map(|(_, v)| *v);
        let mut best: Option<(ArchetypeName, f64)> = None;
        for c in &self.columns {
            let v = value(c)?;
            let better = match best {
                None => true,
                Some((_, b)) => (highest && v > b) || (!highest && v < b),
            };
            if better {
                best = Some((c.archetype, v));
            }
        }
        best.map(|(n, _)| n)
    }
}

/// Evaluates every archetype over the same `n_games` game seeds.
pub fn compare_archetypes(
    setup: &EvalSetup,
    agents: &ArchetypeAgents<'_>,
    n_games: usize,
    seed: u64,
) -> Result<ArchetypeReport, EvalError> {
    let mut columns = Vec::with_capacity(ArchetypeName::ALL.len());
    for name in ArchetypeName::ALL {
        let config = archetype_config(name, &setup.reward_space);
        let agent = match agents {
            ArchetypeAgents::Cari(model) => Agent::Model {
                model,
                conditioned: true,
            },
            ArchetypeAgents::Baselines(models) => {
                let model = models
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, m)| *m)
                    .ok_or(EvalError::MissingArchetype(name))?;
                Agent::Model {
                    model,
                    conditioned: false,
                }
            }
        };
        let res = evaluate(setup, agent, config, n_games, seed)?;
        columns.push(ArchetypeColumn {
            archetype: name,
            config,
            aggregate: res.aggregate,
            records: res.records,
        });
    }
    Ok(ArchetypeReport {
        agent: match agents {
            ArchetypeAgents::Cari(_) => "cari".into(),
            ArchetypeAgents::Baselines(_) => "baselines".into(),
        },
        games: n_games,
        seed,
        columns,
    })
}
