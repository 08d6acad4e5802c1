use serde::{Deserialize, Serialize};

use super::{expected_visitation, soft_value_iteration, Demonstrations, IrlError, LinearReward};
use crate::envs::GridMDP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxEntConfig {
    pub iterations: usize,
    pub lr: f64,
    /// Multiplier applied to the learning rate after every iteration.
    pub lr_decay: f64,
    pub grad_tol: f64,
    /// Defaults to twice the grid's Manhattan diameter.
    pub horizon: Option<usize>,
    /// Reported as divergence when `‖θ‖` exceeds this.
    pub theta_bound: f64,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        Self { iterations: 200, lr: 0.1, lr_decay: 0.99, grad_tol: 1e-4, horizon: None, theta_bound: 1e3 }
    }
}

impl MaxEntConfig {
    pub fn horizon_for(&self, mdp: &GridMDP) -> usize {
        self.horizon.unwrap_or(2 * (mdp.width + mdp.height).saturating_sub(2)).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntDiagnostics {
    /// Gradient norm at each iterate, including the returned one.
    pub grad_norms: Vec<f64>,
    pub converged: bool,
    pub horizon: usize,
}

/// Gradient of the demonstration log-likelihood at `theta`: empirical minus
/// expected feature frequencies, both per step over `horizon` steps from the
/// demonstrations' start distribution.
pub fn maxent_gradient(mdp: &GridMDP, demos: &Demonstrations, theta: &[f64], horizon: usize) -> Vec<f64> {
    let empirical = demos.padded_state_counts(mdp, horizon);
    gradient_with(mdp, &empirical, &demos.start_distribution(mdp.n_states()), theta, horizon)
}

fn gradient_with(mdp: &GridMDP, empirical: &[f64], start: &[f64], theta: &[f64], horizon: usize) -> Vec<f64> {
    let reward = mdp.linear_reward(theta);
    let (_, policy) = soft_value_iteration(mdp, &reward, horizon);
    let d = expected_visitation(mdp, &policy, start, horizon);
    let mut grad = vec![0.0; mdp.feature_dim()];
    for s in 0..mdp.n_states() {
        let diff = (empirical[s] - d[s]) / horizon as f64;
        if diff != 0.0 {
            for (g, f) in grad.iter_mut().zip(&mdp.features[s]) {
                *g += diff * f;
            }
        }
    }
    grad
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gradient ascent on the maximum-entropy log-likelihood from `θ = 0`.
/// Stops when the gradient norm at the current iterate is at most
/// `grad_tol` or after `iterations` updates.
pub fn maxent_irl(
    mdp: &GridMDP,
    demos: &Demonstrations,
    cfg: &MaxEntConfig,
) -> Result<(LinearReward, MaxEntDiagnostics), IrlError> {
    if demos.is_empty() {
        return Err(IrlError::NoDemonstrations);
    }
    demos.validate(mdp)?;
    let horizon = cfg.horizon_for(mdp);
    let empirical = demos.padded_state_counts(mdp, horizon);
    let start = demos.start_distribution(mdp.n_states());
    let mut theta = vec![0.0; mdp.feature_dim()];
    let mut lr = cfg.lr;
    let mut grad_norms = Vec::with_capacity(cfg.iterations + 1);
    let mut converged = false;
    for it in 0..=cfg.iterations {
        let grad = gradient_with(mdp, &empirical, &start, &theta, horizon);
        let g = norm(&grad);
        grad_norms.push(g);
        if g <= cfg.grad_tol {
            converged = true;
            break;
        }
        if it == cfg.iterations {
            break;
        }
        for (t, d) in theta.iter_mut().zip(&grad) {
            *t += lr * d;
        }
        lr *= cfg.lr_decay;
        let n = norm(&theta);
        if !(n <= cfg.theta_bound) {
            return Err(IrlError::Diverged { norm: n });
        }
    }
    Ok((LinearReward { theta }, MaxEntDiagnostics { grad_norms, converged, horizon }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::GridAction;
    use crate::scene::{load_scene, occupancy_grid};

    #[test]
    fn self_loop_demos_in_symmetric_mdp_have_zero_gradient() {
        // two isolated cells: every move self-loops
        let g = occupancy_grid(&load_scene("#####\n#.#.#\n#####").unwrap(), 1.0);
        let m = GridMDP::from_grid(&g, &GridAction::CARDINAL, 0.9).unwrap();
        assert_eq!(m.n_states(), 2);
        let demos = Demonstrations::new(vec![vec![(0, 0), (0, 2)], vec![(1, 3), (1, 1)]]);
        let grad = maxent_gradient(&m, &demos, &[0.0, 0.0], 5);
        assert!(grad.iter().all(|g| g.abs() < 1e-15), "{grad:?}");
    }

    #[test]
    fn converged_iterate_meets_tolerance() {
        let m = GridMDP::open(2, 1, &[GridAction::E, GridAction::W], 0.9).unwrap();
        let demos = Demonstrations::new(vec![vec![(0, 0), (1, 0), (1, 0)], vec![(0, 1), (0, 0), (1, 1)]]);
        let cfg = MaxEntConfig { iterations: 20_000, lr: 1.0, lr_decay: 1.0, horizon: Some(3), ..MaxEntConfig::default() };
        let (theta, diag) = maxent_irl(&m, &demos, &cfg).unwrap();
        assert!(diag.converged);
        let last = *diag.grad_norms.last().unwrap();
        assert!(last <= cfg.grad_tol);
        let g = norm(&maxent_gradient(&m, &demos, &theta.theta, 3));
        assert!((g - last).abs() < 1e-15);
    }

    #[test]
    fn empty_demos_rejected() {
        let m = GridMDP::open(2, 2, &GridAction::CARDINAL, 0.9).unwrap();
        assert!(matches!(maxent_irl(&m, &Demonstrations::default(), &MaxEntConfig::default()), Err(IrlError::NoDemonstrations)));
    }

    #[test]
    fn default_horizon_is_twice_diameter() {
        let m = GridMDP::open(5, 5, &GridAction::CARDINAL, 0.9).unwrap();
        assert_eq!(MaxEntConfig::default().horizon_for(&m), 16);
    }
}
