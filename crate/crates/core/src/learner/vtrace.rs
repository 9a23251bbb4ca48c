//! Off-policy actor-critic targets over one stored sequence.
//!
//! State values are `V(s) = Σ_a π(a|s) Q(s,a)`. Targets follow the
//! truncated-importance-weight recursion
//! `v_t = V_t + ρ_t δ_t + γ c_t (v_{t+1} - V_{t+1})` with
//! `δ_t = r_t + γ V_{t+1} - V_t`, `ρ_t = min(ρ̄, π/μ)`, `c_t = min(c̄, π/μ)`.
//! `Q(s_t, a_t)` regresses to `r_t + γ v_{t+1}` and the policy gradient uses
//! the advantage `ρ_t (r_t + γ v_{t+1} - V_t)`.

use crate::env::ActionMask;
use crate::nn::{masked_softmax, PolicyModel, StepLoss};
use serde::{Deserialize, Serialize};

/// One step of a sequence as seen by the learner.
#[derive(Debug, Clone)]
pub struct StepInput {
    pub input: Vec<f64>,
    pub mask: ActionMask,
    pub action: u8,
    /// Probability of `action` under the behavior policy.
    pub behavior_prob: f64,
    pub reward: f64,
    /// The episode ended on this step.
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
    pub policy_coef: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gamma: 0.99,
            rho_bar: 1.0,
            c_bar: 1.0,
            policy_coef: 1.0,
            value_coef: 0.5,
            entropy_coef: 0.01,
        }
    }
}

/// Sums of per-step loss terms over a sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceStats {
    pub steps: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub abs_td: f64,
}

impl SequenceStats {
    pub fn add(&mut self, o: &SequenceStats) {
        self.steps += o.steps;
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.abs_td += o.abs_td;
    }

    /// Mean absolute TD error; the replay priority of the sequence.
    pub fn mean_abs_td(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.abs_td / self.steps as f64
        }
    }
}

/// Per-step targets of one sequence, computed with the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTargets {
    pub values: Vec<f64>,
    pub vs: Vec<f64>,
    pub q_targets: Vec<f64>,
    pub pg_advantages: Vec<f64>,
}

fn state_value(logits: &[f64], q: &[f64], mask: ActionMask) -> f64 {
    let pi = masked_softmax(logits, mask);
    mask.iter().map(|a| pi[a as usize] * q[a as usize]).sum()
}

/// Computes targets. `bootstrap` is the input and mask of the state after the
/// last step when the sequence was cut before the episode ended.
pub fn sequence_targets(
    model: &PolicyModel,
    steps: &[StepInput],
    bootstrap: Option<(&[f64], ActionMask)>,
    w: &LossWeights,
) -> (SequenceTargets, Vec<crate::nn::Forward>) {
    let n = steps.len();
    let fwds: Vec<_> = steps.iter().map(|s| model.forward(&s.input)).collect();
    let mut values = Vec::with_capacity(n + 1);
    let mut ratios = Vec::with_capacity(n);
    for (s, f) in steps.iter().zip(&fwds) {
        values.push(state_value(&f.logits, &f.q, s.mask));
        let pi = masked_softmax(&f.logits, s.mask)[s.action as usize];
        ratios.push(pi / s.behavior_prob.max(1e-12));
    }
    let tail = match (steps.last(), bootstrap) {
        (Some(last), _) if last.done => 0.0,
        (_, Some((input, mask))) => {
            let f = model.forward(input);
            state_value(&f.logits, &f.q, mask)
        }
        _ => 0.0,
    };
    values.push(tail);

    let mut vs = vec![0.0; n + 1];
    vs[n] = tail;
    let mut q_targets = vec![0.0; n];
    let mut pg_advantages = vec![0.0; n];
    for t in (0..n).rev() {
        let s = &steps[t];
        let g = if s.done { 0.0 } else { w.gamma };
        let rho = ratios[t].min(w.rho_bar);
        let c = ratios[t].min(w.c_bar);
        let delta = s.reward + g * values[t + 1] - values[t];
        vs[t] = values[t] + rho * delta + g * c * (vs[t + 1] - values[t + 1]);
        q_targets[t] = s.reward + g * vs[t + 1];
        pg_advantages[t] = rho * (q_targets[t] - values[t]);
    }
    vs.truncate(n);
    values.truncate(n);
    (
        SequenceTargets {
            values,
            vs,
            q_targets,
            pg_advantages,
        },
        fwds,
    )
}

/// Accumulates into `grad` the gradient of the summed per-step loss of one
/// sequence, scaled by the importance weight `is_weight`.
pub fn sequence_gradient(
    model: &PolicyModel,
    steps: &[StepInput],
    bootstrap: Option<(&[f64], ActionMask)>,
    is_weight: f64,
    w: &LossWeights,
    grad: &mut [f64],
) -> SequenceStats {
    let (targets, fwds) = sequence_targets(model, steps, bootstrap, w);
    let mut stats = SequenceStats::default();
    for (t, s) in steps.iter().enumerate() {
        let loss = StepLoss {
            input: &s.input,
            mask: s.mask,
            action: s.action,
            pg_weight: is_weight * w.policy_coef * targets.pg_advantages[t],
            q_target: targets.q_targets[t],
            entropy_coef: is_weight * w.entropy_coef,
            value_coef: is_weight * w.value_coef,
        };
        let v = loss.accumulate_from(model, &fwds[t], grad);
        stats.steps += 1;
        stats.policy_loss += -targets.pg_advantages[t] * v.log_prob;
        stats.value_loss += v.value;
        stats.entropy += v.entropy;
        stats.abs_td += v.td_error.abs();
    }
    stats
}
