use serde::{Deserialize, Serialize};

use crate::envs::GridMDP;

/// Bellman residual at which value iteration stops.
pub const VI_TOLERANCE: f64 = 1e-9;
const EVAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    /// `q[s * n_actions + a]`.
    pub q: Vec<f64>,
    pub policy: Vec<usize>,
    pub sweeps: usize,
}

impl ValueSolution {
    pub fn q_row(&self, s: usize) -> &[f64] {
        let na = self.q.len() / self.values.len();
        &self.q[s * na..(s + 1) * na]
    }

    /// Actions within `tol` of the best Q at `s`.
    pub fn optimal_actions(&self, s: usize, tol: f64) -> Vec<usize> {
        let row = self.q_row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..row.len()).filter(|&a| row[a] >= best - tol).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPolicy {
    /// `probs[s * n_actions + a]`.
    pub probs: Vec<f64>,
    pub n_actions: usize,
}

impl SoftPolicy {
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { probs: vec![1.0 / n_actions as f64; n_states * n_actions], n_actions }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self { probs, n_actions }
    }
}

fn q_value(mdp: &GridMDP, reward: &[f64], v: &[f64], s: usize, a: usize) -> f64 {
    let t = mdp.step(s, a);
    reward[t] + if mdp.terminal[t] { 0.0 } else { mdp.gamma * v[t] }
}

/// One synchronous Bellman optimality backup. Terminal states keep value 0.
pub fn bellman_backup(mdp: &GridMDP, reward: &[f64], v: &[f64]) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| {
            if mdp.terminal[s] {
                return 0.0;
            }
            (0..mdp.n_actions()).map(|a| q_value(mdp, reward, v, s, a)).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Lower bound on the optimal values: `min(0, min r) / (1 − γ)` everywhere
/// but terminals. Backups from here never decrease any value.
pub fn pessimistic_values(mdp: &GridMDP, reward: &[f64]) -> Vec<f64> {
    let rmin = reward.iter().copied().fold(0.0, f64::min);
    (0..mdp.n_states()).map(|s| if mdp.terminal[s] { 0.0 } else { rmin / (1.0 - mdp.gamma) }).collect()
}

pub fn value_iteration(mdp: &GridMDP, reward: &[f64]) -> ValueSolution {
    value_iteration_from(mdp, reward, pessimistic_values(mdp, reward))
}

/// Value iteration from a given starting point; returns once the Bellman
/// residual of the returned values is at most `VI_TOLERANCE`.
pub fn value_iteration_from(mdp: &GridMDP, reward: &[f64], mut v: Vec<f64>) -> ValueSolution {
    assert_eq!(reward.len(), mdp.n_states(), "reward length");
    let mut sweeps = 0;
    loop {
        let next = bellman_backup(mdp, reward, &v);
        let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        sweeps += 1;
        // the residual of `v` is at most γ times the change just measured
        if residual * mdp.gamma <= VI_TOLERANCE || sweeps >= MAX_SWEEPS {
            break;
        }
    }
    let (q, policy) = greedy(mdp, reward, &v);
    ValueSolution { values: v, q, policy, sweeps }
}

/// Q table and greedy policy of `v`, ties to the lowest action index.
pub fn greedy(mdp: &GridMDP, reward: &[f64], v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let na = mdp.n_actions();
    let mut q = Vec::with_capacity(mdp.n_states() * na);
    let mut policy = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        let row: Vec<f64> = (0..na).map(|a| q_value(mdp, reward, v, s, a)).collect();
        policy.push(crate::rl::argmax(&row));
        q.extend(row);
    }
    (q, policy)
}

/// Values of a deterministic policy, iterated to a residual of 1e-12.
pub fn policy_evaluation(mdp: &GridMDP, reward: &[f64], policy: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..MAX_SWEEPS {
        let next: Vec<f64> = (0..mdp.n_states())
            .map(|s| if mdp.terminal[s] { 0.0 } else { q_value(mdp, reward, &v, s, policy[s]) })
            .collect();
        let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if residual <= EVAL_TOLERANCE {
            break;
        }
    }
    v
}

/// Exactly optimal deterministic policy: policy iteration seeded with the
/// value-iteration greedy policy. Switches only on strict improvement.
pub fn optimal_policy(mdp: &GridMDP, reward: &[f64]) -> Vec<usize> {
    let mut policy = value_iteration(mdp, reward).policy;
    loop {
        let v = policy_evaluation(mdp, reward, &policy);
        let mut changed = false;
        for s in 0..mdp.n_states() {
            if mdp.terminal[s] {
                continue;
            }
            let current = q_value(mdp, reward, &v, s, policy[s]);
            let (best, qa) = (0..mdp.n_actions())
                .map(|a| (a, q_value(mdp, reward, &v, s, a)))
                .fold((policy[s], current), |acc, x| if x.1 > acc.1 + 1e-10 { x } else { acc });
            if best != policy[s] && qa > current + 1e-10 {
                policy[s] = best;
                changed = true;
            }
        }
        if !changed {
            return policy;
        }
    }
}

/// Expected value difference at the start distribution: value under the
/// true reward of the true optimum minus that of the learned reward's
/// optimum.
pub fn evd(mdp: &GridMDP, true_reward: &[f64], learned_reward: &[f64], start: &[f64]) -> f64 {
    let at_start = |v: &[f64]| v.iter().zip(start).map(|(a, b)| a * b).sum::<f64>();
    let best = policy_evaluation(mdp, true_reward, &optimal_policy(mdp, true_reward));
    let learned = policy_evaluation(mdp, true_reward, &optimal_policy(mdp, learned_reward));
    at_start(&best) - at_start(&learned)
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `horizon` soft Bellman backups `V(s) = log Σ_a exp Q(s,a)` from zero, and
/// the stationary policy `π(a|s) = exp(Q(s,a) − V(s))` of the last backup.
/// Terminal states have value 0 and a uniform policy.
pub fn soft_value_iteration(mdp: &GridMDP, reward: &[f64], horizon: usize) -> (Vec<f64>, SoftPolicy) {
    assert!(horizon >= 1, "horizon must be at least 1");
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; n * na];
    for _ in 0..horizon {
        for s in 0..n {
            for a in 0..na {
                q[s * na + a] = q_value(mdp, reward, &v, s, a);
            }
        }
        v = (0..n)
            .map(|s| if mdp.terminal[s] { 0.0 } else { log_sum_exp(q[s * na..(s + 1) * na].iter().copied()) })
            .collect();
    }
    let mut probs = vec![0.0; n * na];
    for s in 0..n {
        let row = &q[s * na..(s + 1) * na];
        if mdp.terminal[s] {
            probs[s * na..(s + 1) * na].fill(1.0 / na as f64);
            continue;
        }
        let z = log_sum_exp(row.iter().copied());
        let p: Vec<f64> = row.iter().map(|x| (x - z).exp()).collect();
        let total: f64 = p.iter().sum();
        for a in 0..na {
            probs[s * na + a] = p[a] / total;
        }
    }
    (v, SoftPolicy { probs, n_actions: na })
}

/// Expected state visitation `Σ_{t<horizon} D_t` with `D_0 = start`.
/// Terminal states absorb their mass, so the total is `horizon` times the
/// start mass.
pub fn expected_visitation(mdp: &GridMDP, policy: &SoftPolicy, start: &[f64], horizon: usize) -> Vec<f64> {
    let n = mdp.n_states();
    let mut d = start.to_vec();
    let mut total = vec![0.0; n];
    for t in 0..horizon {
        for s in 0..n {
            total[s] += d[s];
        }
        if t + 1 == horizon {
            break;
        }
        let mut next = vec![0.0; n];
        for s in 0..n {
            if d[s] == 0.0 {
                continue;
            }
            if mdp.terminal[s] {
                next[s] += d[s];
                continue;
            }
            for (a, p) in policy.row(s).iter().enumerate() {
                next[mdp.step(s, a)] += d[s] * p;
            }
        }
        d = next;
    }
    total
}
