use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, RlError, TrainConfig, TrainReport};
use crate::envs::TabularEnv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `s * n_actions + a`.
    pub q: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, q: vec![0.0; n_states * n_actions] }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// ε-greedy Q-learning. Episodes that end in success are terminal and do
/// not bootstrap; step-limit cut-offs do.
pub fn q_learning_train<E: TabularEnv + ?Sized>(env: &mut E, cfg: &TrainConfig) -> Result<(QTable, TrainReport), RlError> {
    cfg.validate()?;
    let (ns, na) = (env.n_states(), env.n_actions());
    if na == 0 {
        return Err(RlError::InvalidConfig("environment has no actions".into()));
    }
    let mut q = QTable::zeros(ns, na);
    let mut report = TrainReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for ep in 0..cfg.episodes {
        let eps = cfg.epsilon.at(ep, cfg.episodes);
        let mut s = env.reset(rng.random());
        let (mut ret, mut steps) = (0.0, 0);
        loop {
            let a = if rng.random::<f64>() < eps { rng.random_range(0..na) } else { q.greedy(s) };
            let (s2, r, done, success) = env.step(a);
            let target = if done && success { r } else { r + cfg.gamma * q.max(s2) };
            let i = s * na + a;
            q.q[i] += cfg.lr * (target - q.q[i]);
            ret += r;
            steps += 1;
            s = s2;
            if done {
                report.push(ret, success, steps);
                break;
            }
        }
        if report.reached(cfg) {
            break;
        }
    }
    Ok((q, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{GridAction, GridMDP, MdpEpisodes};

    fn chain() -> GridMDP {
        let mut m = GridMDP::open(3, 1, &[GridAction::E, GridAction::W], 0.9).unwrap();
        m.reward[2] = 1.0;
        m.set_terminal(&[2]);
        m
    }

    #[test]
    fn chain_matches_closed_form() {
        let m = chain();
        let mut env = MdpEpisodes::new(&m, 0, 50);
        let cfg = TrainConfig { episodes: 3000, gamma: 0.9, ..TrainConfig::tabular() };
        let (q, report) = q_learning_train(&mut env, &cfg).unwrap();
        // one step from the goal earns 1, two steps earn γ
        assert!((q.get(0, 0) - 0.9).abs() < 1e-3, "{}", q.get(0, 0));
        assert!((q.get(1, 0) - 1.0).abs() < 1e-3);
        assert_eq!(q.greedy(0), 0);
        assert_eq!(report.len(), 3000);
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let m = chain();
        let mut env = MdpEpisodes::new(&m, 0, 50);
        let cfg = TrainConfig { episodes: 50, lr: 0.0, ..TrainConfig::tabular() };
        let (q, _) = q_learning_train(&mut env, &cfg).unwrap();
        assert!(q.q.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn seeded_runs_identical() {
        let m = chain();
        let cfg = TrainConfig { episodes: 100, seed: 9, ..TrainConfig::tabular() };
        let a = q_learning_train(&mut MdpEpisodes::new(&m, 0, 50), &cfg).unwrap();
        let b = q_learning_train(&mut MdpEpisodes::new(&m, 0, 50), &cfg).unwrap();
        assert_eq!(a, b);
    }
}
