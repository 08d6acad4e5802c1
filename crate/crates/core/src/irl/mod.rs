//! Inverse reinforcement learning on explicit grid MDPs: maximum-entropy
//! IRL, Bayesian IRL by PolicyWalk, exact and soft planners, and the
//! expected value difference metric.

mod birl;
mod demos;
mod maxent;
mod plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::GridMDP;
use crate::scene::Cell;

pub use birl::{bayesian_irl_policywalk, demo_log_likelihood, BirlConfig, PosteriorSamples};
pub use demos::{demos_from_footprint, sample_trajectory, DemoLine, Demonstrations};
pub use maxent::{maxent_gradient, maxent_irl, MaxEntConfig, MaxEntDiagnostics};
pub use plan::{
    bellman_backup, evd, expected_visitation, greedy, optimal_policy, pessimistic_values, policy_evaluation,
    soft_value_iteration, value_iteration, value_iteration_from, SoftPolicy, ValueSolution, VI_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum IrlError {
    #[error("no demonstrations")]
    NoDemonstrations,
    #[error("demonstration {traj} has invalid pair ({state}, {action})")]
    InvalidDemo { traj: usize, state: usize, action: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reward weights diverged (norm {norm})")]
    Diverged { norm: f64 },
    #[error("non-finite likelihood")]
    NonFiniteLikelihood,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// State reward `θ·φ(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReward {
    pub theta: Vec<f64>,
}

impl LinearReward {
    pub fn rewards(&self, mdp: &GridMDP) -> Vec<f64> {
        mdp.linear_reward(&self.theta)
    }

    pub fn export(&self, mdp: &GridMDP) -> RewardExport {
        RewardExport {
            theta: self.theta.clone(),
            reward: self.rewards(mdp),
            cells: mdp.cells.clone(),
            holding: mdp.holding.clone(),
        }
    }
}

/// Learned reward file: weights plus the per-state table they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardExport {
    pub theta: Vec<f64>,
    pub reward: Vec<f64>,
    pub cells: Vec<Cell>,
    pub holding: Vec<bool>,
}

/// Fraction of `states` where the greedy action of `learned` is optimal
/// under `truth` (any of the tied optimal actions counts).
pub fn action_agreement(mdp: &GridMDP, truth: &[f64], learned: &[f64], states: &[usize]) -> f64 {
    if states.is_empty() {
        return 1.0;
    }
    let t = value_iteration(mdp, truth);
    let l = value_iteration(mdp, learned);
    let hits = states.iter().filter(|&&s| t.optimal_actions(s, 1e-9).contains(&l.policy[s])).count();
    hits as f64 / states.len() as f64
}
