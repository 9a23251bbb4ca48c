//! Policy/value network with hand-written backpropagation.
//!
//! Topology: the board map goes through strided convolutions, is flattened
//! and concatenated with the general-info vector and the reward slot, then
//! through dense layers, and finally splits into a policy-logit head and an
//! action-value head (one output per action each). All parameters live in
//! one flat `f64` vector so optimizers, checkpoints and gradient checks can
//! treat the model uniformly.

mod checkpoint;
mod gradcheck;
mod optim;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use optim::Adam;

use crate::env::{ActionMask, ObservationLayout, NUM_ACTIONS};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Shape of a [`PolicyModel`]; stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub board_size: usize,
    pub channels: usize,
    pub general_len: usize,
    pub reward_len: usize,
    pub conv: Vec<ConvSpec>,
    pub hidden: Vec<usize>,
    pub n_actions: usize,
    /// Also feed the reward slot to every later dense layer and to both heads.
    #[serde(default)]
    pub reward_skip: bool,
}

impl Architecture {
    /// Default network for an observation layout: two stride-2 convolutions
    /// and two dense layers.
    pub fn for_layout(layout: &ObservationLayout) -> Architecture {
        Architecture {
            board_size: layout.board_size,
            channels: layout.channels,
            general_len: layout.general_len,
            reward_len: layout.reward_len,
            conv: vec![
                ConvSpec {
                    out_channels: 4,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    out_channels: 8,
                    kernel: 3,
                    stride: 2,
                },
            ],
            hidden: vec![96, 96],
            n_actions: NUM_ACTIONS,
            reward_skip: true,
        }
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.board_size * self.board_size + self.general_len + self.reward_len
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    in_c: usize,
    in_hw: usize,
    out_c: usize,
    out_hw: usize,
    k: usize,
    w: usize,
    b: usize,
    /// For each input coordinate, the `(kernel offset, output coordinate)`
    /// pairs it contributes to (the same table serves rows and columns).
    taps: Vec<Vec<(usize, usize)>>,
}

impl ConvLayer {
    fn new(in_c: usize, in_hw: usize, spec: &ConvSpec, w: usize) -> ConvLayer {
        let pad = spec.kernel / 2;
        let out_hw = (in_hw + 2 * pad).saturating_sub(spec.kernel) / spec.stride + 1;
        let taps = (0..in_hw)
            .map(|i| {
                (0..out_hw)
                    .filter_map(|o| {
                        let kpos = (i + pad) as isize - (o * spec.stride) as isize;
                        (0..spec.kernel as isize).contains(&kpos).then_some((kpos as usize, o))
                    })
                    .collect()
            })
            .collect();
        ConvLayer {
            in_c,
            in_hw,
            out_c: spec.out_channels,
            out_hw,
            k: spec.kernel,
            w,
            b: w + spec.out_channels * in_c * spec.kernel * spec.kernel,
            taps,
        }
    }

    fn n_params(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k + self.out_c
    }

    fn weight(&self, o: usize, c: usize, ky: usize, kx: usize) -> usize {
        self.w + ((o * self.in_c + c) * self.k + ky) * self.k + kx
    }
}

#[derive(Debug, Clone)]
struct DenseLayer {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Plan {
    conv: Vec<ConvLayer>,
    dense: Vec<DenseLayer>,
    policy: DenseLayer,
    value: DenseLayer,
    n_params: usize,
}

impl Plan {
    fn new(a: &Architecture) -> Plan {
        let mut off = 0;
        let mut conv = Vec::new();
        let (mut c, mut hw) = (a.channels, a.board_size);
        for spec in &a.conv {
            let layer = ConvLayer::new(c, hw, spec, off);
            off += layer.n_params();
            c = layer.out_c;
            hw = layer.out_hw;
            conv.push(layer);
        }
        let mut dense_layer = |n_in: usize, n_out: usize| {
            let w = off;
            off += n_in * n_out;
            let b = off;
            off += n_out;
            DenseLayer { n_in, n_out, w, b }
        };
        let skip = if a.reward_skip { a.reward_len } else { 0 };
        let mut n_in = c * hw * hw + a.general_len + a.reward_len;
        let mut dense = Vec::new();
        for &h in &a.hidden {
            dense.push(dense_layer(n_in, h));
            n_in = h + skip;
        }
        if a.hidden.is_empty() {
            n_in = c * hw * hw + a.general_len + a.reward_len;
        }
        let policy = dense_layer(n_in, a.n_actions);
        let value = dense_layer(n_in, a.n_actions);
        Plan {
            conv,
            dense,
            policy,
            value,
            n_params: off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("input has length {actual}, architecture expects {expected}")]
    InputShape { expected: usize, actual: usize },
    #[error("parameter vector has length {actual}, architecture expects {expected}")]
    ParamShape { expected: usize, actual: usize },
    #[error("no legal action to choose from")]
    EmptyMask,
}

/// Differentiable policy + action-value function.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    arch: Architecture,
    plan: Plan,
    params: Vec<f64>,
}

impl PartialEq for PolicyModel {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.params == other.params
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Post-ReLU output of each convolution.
    conv: Vec<Vec<f64>>,
    /// Input of each dense layer, then the input of the heads.
    inputs: Vec<Vec<f64>>,
    /// Post-ReLU output of each hidden dense layer.
    hidden: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub q: Vec<f64>,
}

impl Forward {
    /// Which ReLU units are active, layer by layer. Two parameter vectors
    /// with different patterns have a kink of the loss between them.
    pub fn active_units(&self) -> Vec<bool> {
        self.conv.iter().chain(&self.hidden).flatten().map(|&v| v > 0.0).collect()
    }
}

/// Convolution followed by ReLU. Inputs are visited in scatter form so that
/// zero entries (most of the one-hot board) cost nothing.
fn conv_forward(l: &ConvLayer, p: &[f64], input: &[f64], out: &mut [f64]) {
    let plane = l.out_hw * l.out_hw;
    for o in 0..l.out_c {
        out[o * plane..(o + 1) * plane].fill(p[l.b + o]);
    }
    for c in 0..l.in_c {
        for iy in 0..l.in_hw {
            for ix in 0..l.in_hw {
                let v = input[(c * l.in_hw + iy) * l.in_hw + ix];
                if v == 0.0 {
                    continue;
                }
                for &(ky, oy) in &l.taps[iy] {
                    for &(kx, ox) in &l.taps[ix] {
                        let pos = oy * l.out_hw + ox;
                        for o in 0..l.out_c {
                            out[o * plane + pos] += p[l.weight(o, c, ky, kx)] * v;
                        }
                    }
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v = v.max(0.0);
    }
}

/// `dout` is the gradient w.r.t. the post-ReLU output `out`. The input
/// gradient is only written where the input is nonzero: every caller feeds
/// either the raw board (no gradient needed) or a ReLU output, whose zero
/// entries pass no gradient further back.
fn conv_backward(
    l: &ConvLayer,
    p: &[f64],
    input: &[f64],
    out: &[f64],
    dout: &[f64],
    grad: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let plane = l.out_hw * l.out_hw;
    let dpre: Vec<f64> = out.iter().zip(dout).map(|(o, d)| if *o > 0.0 { *d } else { 0.0 }).collect();
    for o in 0..l.out_c {
        grad[l.b + o] += dpre[o * plane..(o + 1) * plane].iter().sum::<f64>();
    }
    for c in 0..l.in_c {
        for iy in 0..l.in_hw {
            for ix in 0..l.in_hw {
                let ii = (c * l.in_hw + iy) * l.in_hw + ix;
                let v = input[ii];
                if v == 0.0 {
                    continue;
                }
                let mut acc = 0.0;
                for &(ky, oy) in &l.taps[iy] {
                    for &(kx, ox) in &l.taps[ix] {
                        let pos = oy * l.out_hw + ox;
                        for o in 0..l.out_c {
                            let d = dpre[o * plane + pos];
                            let wi = l.weight(o, c, ky, kx);
                            grad[wi] += d * v;
                            acc += d * p[wi];
                        }
                    }
                }
                if let Some(din) = din.as_deref_mut() {
                    din[ii] += acc;
                }
            }
        }
    }
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn dense_forward(l: &DenseLayer, p: &[f64], x: &[f64], relu: bool) -> Vec<f64> {
    (0..l.n_out)
        .map(|j| {
            let v = p[l.b + j] + dot(&p[l.w + j * l.n_in..l.w + (j + 1) * l.n_in], x);
            if relu {
                v.max(0.0)
            } else {
                v
            }
        })
        .collect()
}

/// Accumulates parameter gradients and returns the gradient w.r.t. `x`.
fn dense_backward(l: &DenseLayer, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; l.n_in];
    for (j, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grad[l.b + j] += d;
        let row = l.w + j * l.n_in;
        let g = &mut grad[row..row + l.n_in];
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += d * xi;
        }
        for (dxi, wi) in dx.iter_mut().zip(&p[row..row + l.n_in]) {
            *dxi += d * wi;
        }
    }
    dx
}

impl PolicyModel {
    /// He-initialized model; heads start small so the initial policy is near uniform.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> PolicyModel {
        let plan = Plan::new(&arch);
        let mut params = vec![0.0; plan.n_params];
        let mut init = |w: usize, n: usize, fan_in: usize, scale: f64| {
            let std = scale * (2.0 / fan_in as f64).sqrt();
            for p in &mut params[w..w + n] {
                let z: f64 = StandardNormal.sample(rng);
                *p = z * std;
            }
        };
        for l in &plan.conv {
            init(l.w, l.out_c * l.in_c * l.k * l.k, l.in_c * l.k * l.k, 1.0);
        }
        for l in &plan.dense {
            init(l.w, l.n_in * l.n_out, l.n_in, 1.0);
        }
        init(plan.policy.w, plan.policy.n_in * plan.policy.n_out, plan.policy.n_in, 0.01);
        init(plan.value.w, plan.value.n_in * plan.value.n_out, plan.value.n_in, 0.01);
        PolicyModel { arch, plan, params }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<PolicyModel, ModelError> {
        let plan = Plan::new(&arch);
        if params.len() != plan.n_params {
            return Err(ModelError::ParamShape {
                expected: plan.n_params,
                actual: params.len(),
            });
        }
        Ok(PolicyModel { arch, plan, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.plan.n_params
    }

    /// Parameter index ranges of the policy head and value head.
    pub fn head_ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let p = &self.plan.policy;
        let v = &self.plan.value;
        (p.w..p.b + p.n_out, v.w..v.b + v.n_out)
    }

    pub fn check_input(&self, input: &[f64]) -> Result<(), ModelError> {
        let expected = self.arch.input_len();
        if input.len() != expected {
            return Err(ModelError::InputShape {
                expected,
                actual: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Forward {
        debug_assert_eq!(input.len(), self.arch.input_len());
        let p = &self.params;
        let board_len = self.arch.channels * self.arch.board_size * self.arch.board_size;
        let mut conv: Vec<Vec<f64>> = Vec::with_capacity(self.plan.conv.len());
        for (i, l) in self.plan.conv.iter().enumerate() {
            let mut out = vec![0.0; l.out_c * l.out_hw * l.out_hw];
            let x = if i == 0 { &input[..board_len] } else { &conv[i - 1][..] };
            conv_forward(l, p, x, &mut out);
            conv.push(out);
        }
        let mut joint = conv.last().cloned().unwrap_or_else(|| input[..board_len].to_vec());
        joint.extend_from_slice(&input[board_len..]);
        let slot = &input[input.len() - self.arch.reward_len..];
        let mut inputs = vec![joint];
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(self.plan.dense.len());
        for l in &self.plan.dense {
            let h = dense_forward(l, p, inputs.last().expect("joint input"), true);
            let mut next = h.clone();
            if self.arch.reward_skip {
                next.extend_from_slice(slot);
            }
            hidden.push(h);
            inputs.push(next);
        }
        if self.plan.dense.is_empty() {
            inputs.push(inputs[0].clone());
        }
        let top = inputs.last().expect("head input");
        let logits = dense_forward(&self.plan.policy, p, top, false);
        let q = dense_forward(&self.plan.value, p, top, false);
        Forward {
            conv,
            inputs,
            hidden,
            logits,
            q,
        }
    }

    /// Accumulates into `grad` the parameter gradient for upstream gradients
    /// on the logits and action-values.
    pub fn backward(&self, input: &[f64], fwd: &Forward, dlogits: &[f64], dq: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let top = fwd.inputs.last().expect("head input");
        let mut dtop = dense_backward(&self.plan.policy, p, top, dlogits, grad);
        let dv = dense_backward(&self.plan.value, p, top, dq, grad);
        for (a, b) in dtop.iter_mut().zip(dv) {
            *a += b;
        }
        let mut dcur = dtop;
        for i in (0..self.plan.dense.len()).rev() {
            let out = &fwd.hidden[i];
            dcur.truncate(out.len());
            for (d, o) in dcur.iter_mut().zip(out) {
                if *o <= 0.0 {
                    *d = 0.0;
                }
            }
            dcur = dense_backward(&self.plan.dense[i], p, &fwd.inputs[i], &dcur, grad);
        }
        // dcur is now the gradient w.r.t. the joint vector; only its board part propagates.
        let n_conv = self.plan.conv.len();
        if n_conv == 0 {
            return;
        }
        let board_len = self.arch.channels * self.arch.board_size * self.arch.board_size;
        let flat = fwd.conv[n_conv - 1].len();
        let mut dout = dcur[..flat].to_vec();
        for i in (0..n_conv).rev() {
            let l = &self.plan.conv[i];
            let x = if i == 0 { &input[..board_len] } else { &fwd.conv[i - 1][..] };
            if i == 0 {
                conv_backward(l, p, x, &fwd.conv[i], &dout, grad, None);
            } else {
                let mut din = vec![0.0; x.len()];
                conv_backward(l, p, x, &fwd.conv[i], &dout, grad, Some(&mut din));
                dout = din;
            }
        }
    }

    /// Masked softmax of the policy logits for `input`.
    pub fn policy(&self, input: &[f64], mask: ActionMask) -> Vec<f64> {
        masked_softmax(&self.forward(input).logits, mask)
    }

    /// Chooses an action: sampled from, or the argmax of, the masked policy.
    /// Returns the action index and its probability under the masked policy.
    pub fn act<R: Rng + ?Sized>(
        &self,
        input: &[f64],
        mask: ActionMask,
        mode: ActMode,
        rng: &mut R,
    ) -> Result<(u8, f64), ModelError> {
        if mask.is_empty() {
            return Err(ModelError::EmptyMask);
        }
        self.check_input(input)?;
        let probs = self.policy(input, mask);
        Ok(select_action(&probs, mask, mode, rng))
    }

    /// SHA-256 of the parameter bytes.
    pub fn param_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Draws (or picks the most likely, lowest index on ties) action from a masked distribution.
pub fn select_action<R: Rng + ?Sized>(probs: &[f64], mask: ActionMask, mode: ActMode, rng: &mut R) -> (u8, f64) {
    let legal = || mask.iter();
    let pick = match mode {
        ActMode::Greedy => legal()
            .fold(None::<u8>, |best, a| match best {
                Some(b) if probs[b as usize] >= probs[a as usize] => Some(b),
                _ => Some(a),
            })
            .expect("mask not empty"),
        ActMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            let mut chosen = None;
            for a in legal() {
                acc += probs[a as usize];
                last = a;
                if u < acc {
                    chosen = Some(a);
                    break;
                }
            }
            chosen.unwrap_or(last)
        }
    };
    (pick, probs[pick as usize])
}

/// Softmax over the set bits of `mask`; illegal entries are exactly zero.
pub fn masked_softmax(logits: &[f64], mask: ActionMask) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    let max = mask
        .iter()
        .map(|a| logits[a as usize])
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return out;
    }
    let mut sum = 0.0;
    for a in mask.iter() {
        let e = (logits[a as usize] - max).exp();
        out[a as usize] = e;
        sum += e;
    }
    for a in mask.iter() {
        out[a as usize] /= sum;
    }
    out
}

/// One step of the actor-critic objective, with every target held fixed:
///
/// `L = -pg_weight · log π(a) - entropy_coef · H(π) + value_coef · ½ (Q(a) - q_target)²`
#[derive(Debug, Clone)]
pub struct StepLoss<'a> {
    pub input: &'a [f64],
    pub mask: ActionMask,
    pub action: u8,
    pub pg_weight: f64,
    pub q_target: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLossValue {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    /// `Q(a) - q_target`.
    pub td_error: f64,
    /// `log π(a)`.
    pub log_prob: f64,
}

impl StepLoss<'_> {
    pub fn evaluate(&self, model: &PolicyModel) -> StepLossValue {
        let fwd = model.forward(self.input);
        self.from_forward(&fwd).0
    }

    fn from_forward(&self, fwd: &Forward) -> (StepLossValue, Vec<f64>) {
        let pi = masked_softmax(&fwd.logits, self.mask);
        let a = self.action as usize;
        let entropy: f64 = self
            .mask
            .iter()
            .map(|j| pi[j as usize])
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        let log_pa = pi[a].max(f64::MIN_POSITIVE).ln();
        let td = fwd.q[a] - self.q_target;
        let policy = -self.pg_weight * log_pa;
        let value = 0.5 * td * td;
        let total = policy - self.entropy_coef * entropy + self.value_coef * value;
        (
            StepLossValue {
                total,
                policy,
                value,
                entropy,
                td_error: td,
                log_prob: log_pa,
            },
            pi,
        )
    }

    /// Loss value; gradient accumulated into `grad`.
    pub fn accumulate(&self, model: &PolicyModel, grad: &mut [f64]) -> StepLossValue {
        let fwd = model.forward(self.input);
        self.accumulate_from(model, &fwd, grad)
    }

    /// As [`StepLoss::accumulate`], reusing a forward pass of `self.input`.
    pub fn accumulate_from(&self, model: &PolicyModel, fwd: &Forward, grad: &mut [f64]) -> StepLossValue {
        let (val, pi) = self.from_forward(fwd);
        let a = self.action as usize;
        let mut dlogits = vec![0.0; fwd.logits.len()];
        for j in self.mask.iter() {
            let j = j as usize;
            let p = pi[j];
            let onehot = if j == a { 1.0 } else { 0.0 };
            let mut d = -self.pg_weight * (onehot - p);
            if p > 0.0 {
                d += self.entropy_coef * p * (p.ln() + val.entropy);
            }
            dlogits[j] = d;
        }
        let mut dq = vec![0.0; fwd.q.len()];
        dq[a] = self.value_coef * val.td_error;
        model.backward(self.input, fwd, &dlogits, &dq, grad);
        val
    }
}
