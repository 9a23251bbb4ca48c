//! Reward-conditioned play-style agents for a turn-based tactics game.
//!
//! * [`env`]: the game engine, observation encoding and replay files.
//! * [`reward`]: reward coefficients, event detection and archetype presets.
//! * [`agents`]: scripted enemy rules and the Contact heuristic.
//! * [`nn`]: the policy/value network, optimizer and checkpoints.
//! * [`rollout`]: episode generation and seed derivation.
//! * [`learner`]: replay, actor-critic updates and the training drivers.
//! * [`eval`]: metrics, evaluation, continuum sweeps and reports.
//! * [`config`]: experiment manifests.

pub mod agents;
pub mod config;
pub mod env;
pub mod eval;
pub mod nn;
pub mod learner;
pub mod reward;
pub mod rollout;
