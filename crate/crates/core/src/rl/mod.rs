//! Reinforcement learning on a hand-rolled MLP: tabular Q-learning, DQN,
//! dueling DQN, one-step actor-critic and DDPG.

mod actor_critic;
mod adam;
mod ddpg;
mod dqn;
mod mlp;
mod replay;
mod tabular;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvError;

pub use actor_critic::{actor_critic_train, softmax, ActorCritic};
pub use adam::Adam;
pub use ddpg::{ddpg_train, Ddpg};
pub use dqn::{dqn_train, dueling_dqn_train, DuelingNet, QFunction};
pub use mlp::{gradient_check, Activation, Mlp, Trace};
pub use replay::{ReplayBuffer, Transition};
pub use tabular::{q_learning_train, QTable};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("parameters diverged to non-finite values")]
    Diverged,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Linear decay from `start` to `end` over `decay_episodes` (30% of the
/// run when absent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: Option<usize>,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.05, decay_episodes: None }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize, total: usize) -> f64 {
        let span = self.decay_episodes.unwrap_or((total as f64 * 0.3).ceil() as usize).max(1);
        if episode >= span {
            return self.end;
        }
        self.start + (self.end - self.start) * (episode as f64 / span as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub lr: f64,
    pub epsilon: EpsilonSchedule,
    pub batch_size: usize,
    /// Gradient steps between hard target syncs.
    pub target_sync: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Transitions collected before updates start.
    pub warmup: usize,
    /// Actor-critic entropy bonus weight.
    pub entropy_weight: f64,
    /// DDPG exploration noise, as a fraction of each action bound.
    pub noise_sigma: f64,
    pub tau: f64,
    /// Stop once the success rate over the last `window` episodes reaches this.
    pub target_success: Option<f64>,
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            gamma: 0.99,
            lr: 1e-3,
            epsilon: EpsilonSchedule::default(),
            batch_size: 64,
            target_sync: 500,
            seed: 0,
            hidden: vec![64, 64],
            replay_capacity: 50_000,
            warmup: 64,
            entropy_weight: 0.01,
            noise_sigma: 0.1,
            tau: 0.005,
            target_success: None,
            window: 100,
        }
    }
}

impl TrainConfig {
    /// Defaults for tabular learners.
    pub fn tabular() -> Self {
        Self { lr: 0.1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_owned()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be non-negative");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_sync == 0 || self.window == 0 {
            return bad("batch size, capacity, sync interval and window must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        Ok(())
    }

    pub(crate) fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        std::iter::once(input).chain(self.hidden.iter().copied()).chain(std::iter::once(output)).collect()
    }
}

/// Per-episode training record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub returns: Vec<f64>,
    pub success: Vec<bool>,
    pub steps: Vec<usize>,
}

impl TrainReport {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn push(&mut self, ret: f64, success: bool, steps: usize) {
        self.returns.push(ret);
        self.success.push(success);
        self.steps.push(steps);
    }

    /// Trailing mean of returns over up to `window` episodes.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut sum = 0.0;
        for i in 0..self.len() {
            sum += self.returns[i];
            if i >= window {
                sum -= self.returns[i - window];
            }
            out.push(sum / (i + 1).min(window) as f64);
        }
        out
    }

    /// Success rate over the last `n` episodes (fewer if the run is shorter).
    pub fn success_rate_last(&self, n: usize) -> f64 {
        let tail = &self.success[self.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|s| **s).count() as f64 / tail.len() as f64
    }

    /// Whether the run met its early-stopping target.
    pub fn reached(&self, cfg: &TrainConfig) -> bool {
        cfg.target_success.is_some_and(|t| self.len() >= cfg.window && self.success_rate_last(cfg.window) >= t)
    }

    /// CSV `episode,return,success,steps,ma100`.
    pub fn to_csv(&self) -> String {
        let ma = self.moving_average(100);
        let mut out = String::from("episode,return,success,steps,ma100\n");
        for i in 0..self.len() {
            out.push_str(&format!("{},{},{},{},{}\n", i, self.returns[i], self.success[i] as u8, self.steps[i], ma[i]));
        }
        out
    }
}

/// Argmax with ties to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}
