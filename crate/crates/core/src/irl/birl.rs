use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{value_iteration_from, Demonstrations, IrlError, LinearReward, ValueSolution};
use crate::envs::GridMDP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BirlConfig {
    /// Chain length, burn-in included.
    pub samples: usize,
    pub burn_in: usize,
    pub delta: f64,
    /// Expert confidence.
    pub alpha: f64,
    /// Uniform prior over `[-bound, bound]` per coordinate.
    pub bound: f64,
    pub seed: u64,
}

impl Default for BirlConfig {
    fn default() -> Self {
        Self { samples: 5000, burn_in: 1000, delta: 0.05, alpha: 10.0, bound: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    /// Post-burn-in `(θ, log-likelihood)` pairs, one per chain step.
    pub samples: Vec<(Vec<f64>, f64)>,
    pub burn_in: usize,
    pub acceptance_rate: f64,
}

impl PosteriorSamples {
    pub fn mean(&self) -> Option<Vec<f64>> {
        let (first, _) = self.samples.first()?;
        let mut m = vec![0.0; first.len()];
        for (t, _) in &self.samples {
            for (a, b) in m.iter_mut().zip(t) {
                *a += b / self.samples.len() as f64;
            }
        }
        Some(m)
    }
}

/// Boltzmann log-likelihood `Σ α·Q(s,a) − log Σ_b exp(α·Q(s,b))` of the
/// demonstrated pairs under the optimal Q of `sol`.
pub fn demo_log_likelihood(sol: &ValueSolution, demos: &Demonstrations, alpha: f64) -> f64 {
    demos
        .pairs()
        .map(|(s, a)| {
            let row = sol.q_row(s);
            let m = row.iter().fold(f64::NEG_INFINITY, |acc, q| acc.max(alpha * q));
            let z = m + row.iter().map(|q| (alpha * q - m).exp()).sum::<f64>().ln();
            alpha * row[a] - z
        })
        .sum()
}

/// PolicyWalk: Metropolis-Hastings over reward weights on a `δ` grid,
/// proposing a `±δ` move of one coordinate at a time. Proposals leaving the
/// prior box are rejected. Starts from `θ = 0`.
pub fn bayesian_irl_policywalk(
    mdp: &GridMDP,
    demos: &Demonstrations,
    cfg: &BirlConfig,
) -> Result<(PosteriorSamples, LinearReward), IrlError> {
    if demos.is_empty() {
        return Err(IrlError::NoDemonstrations);
    }
    demos.validate(mdp)?;
    if !(cfg.delta > 0.0 && cfg.bound > 0.0 && cfg.alpha >= 0.0) {
        return Err(IrlError::InvalidConfig("delta and bound must be positive, alpha non-negative".into()));
    }
    let d = mdp.feature_dim();
    let max_k = (cfg.bound / cfg.delta + 1e-9).floor() as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let theta_of = |k: &[i64]| k.iter().map(|&k| k as f64 * cfg.delta).collect::<Vec<f64>>();

    let mut k = vec![0i64; d];
    let mut theta = theta_of(&k);
    let mut sol = value_iteration_from(mdp, &mdp.linear_reward(&theta), vec![0.0; mdp.n_states()]);
    let mut ll = demo_log_likelihood(&sol, demos, cfg.alpha);
    if !ll.is_finite() {
        return Err(IrlError::NonFiniteLikelihood);
    }

    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(cfg.samples.saturating_sub(cfg.burn_in));
    for step in 0..cfg.samples {
        let i = rng.random_range(0..d);
        let dir = if rng.random::<bool>() { 1 } else { -1 };
        let ki = k[i] + dir;
        if ki.abs() <= max_k {
            let mut k2 = k.clone();
            k2[i] = ki;
            let theta2 = theta_of(&k2);
            let sol2 = value_iteration_from(mdp, &mdp.linear_reward(&theta2), sol.values.clone());
            let ll2 = demo_log_likelihood(&sol2, demos, cfg.alpha);
            if !ll2.is_finite() {
                return Err(IrlError::NonFiniteLikelihood);
            }
            if ll2 >= ll || rng.random::<f64>() < (ll2 - ll).exp() {
                (k, theta, sol, ll) = (k2, theta2, sol2, ll2);
                accepted += 1;
            }
        }
        if step >= cfg.burn_in {
            samples.push((theta.clone(), ll));
        }
    }
    let acceptance_rate = if cfg.samples == 0 { 0.0 } else { accepted as f64 / cfg.samples as f64 };
    let posterior = PosteriorSamples { samples, burn_in: cfg.burn_in, acceptance_rate };
    let mean = posterior.mean().unwrap_or_else(|| theta_of(&vec![0; d]));
    Ok((posterior, LinearReward { theta: mean }))
}
