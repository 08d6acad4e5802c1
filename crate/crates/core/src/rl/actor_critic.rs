use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Adam, Mlp, RlError, TrainConfig, TrainReport};
use crate::envs::DiscreteEnv;

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Softmax policy over logits from `policy`, state values from `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub value: Mlp,
}

impl ActorCritic {
    pub fn new(sizes_policy: &[usize], sizes_value: &[usize], rng: &mut impl Rng) -> Self {
        Self { policy: Mlp::new(sizes_policy, Activation::Linear, rng), value: Mlp::new(sizes_value, Activation::Linear, rng) }
    }

    pub fn probs(&self, s: &[f64]) -> Vec<f64> {
        softmax(self.policy.forward_trace(s).output())
    }

    pub fn state_value(&self, s: &[f64]) -> f64 {
        self.value.forward_trace(s).output()[0]
    }

    /// Actor loss `−advantage·log π(a|s) − β·H(π(·|s))` and its gradient
    /// w.r.t. the policy parameters, added into `grad`.
    pub fn policy_loss_grad(&self, s: &[f64], a: usize, advantage: f64, beta: f64, grad: &mut [f64]) -> f64 {
        let trace = self.policy.forward_trace(s);
        let pi = softmax(trace.output());
        let logp: Vec<f64> = pi.iter().map(|p| p.max(1e-300).ln()).collect();
        let h: f64 = -pi.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        let dz: Vec<f64> = (0..pi.len())
            .map(|j| {
                let ind = if j == a { 1.0 } else { 0.0 };
                -advantage * (ind - pi[j]) + beta * pi[j] * (logp[j] + h)
            })
            .collect();
        self.policy.backward(&trace, &dz, grad);
        -advantage * logp[a] - beta * h
    }
}

/// One-step advantage actor-critic: the critic regresses on the
/// TD(0) target, the actor follows `δ·∇log π(a|s)` plus an entropy bonus.
/// Gradients are averaged over `batch_size` steps (or the episode tail)
/// before each optimizer step.
pub fn actor_critic_train<E: DiscreteEnv + ?Sized>(
    env: &mut E,
    cfg: &TrainConfig,
) -> Result<(ActorCritic, TrainReport), RlError> {
    cfg.validate()?;
    let na = env.n_actions();
    if na == 0 {
        return Err(RlError::InvalidConfig("environment has no discrete actions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = env.obs_dim();
    let mut ac = ActorCritic::new(&cfg.layer_sizes(d, na), &cfg.layer_sizes(d, 1), &mut rng);
    let mut opt_pi = Adam::new(ac.policy.n_params(), cfg.lr);
    let mut opt_v = Adam::new(ac.value.n_params(), cfg.lr);
    let mut g_pi = vec![0.0; ac.policy.n_params()];
    let mut g_v = vec![0.0; ac.value.n_params()];
    let mut report = TrainReport::default();

    let mut pending = 0usize;
    g_v.iter_mut().for_each(|g| *g = 0.0);
    g_pi.iter_mut().for_each(|g| *g = 0.0);
    for _ in 0..cfg.episodes {
        let mut s = env.reset(rng.random());
        if s.len() != d {
            return Err(RlError::DimensionMismatch { expected: d, got: s.len() });
        }
        let (mut ret, mut steps) = (0.0, 0);
        loop {
            let pi = ac.probs(&s);
            let a = sample(&pi, &mut rng);
            let r = env.step(a)?;
            ret += r.reward;
            steps += 1;
            let terminal = r.done && !r.info.truncated;
            let v_trace = ac.value.forward_trace(&s);
            let v = v_trace.output()[0];
            let v2 = if terminal { 0.0 } else { ac.state_value(&r.observation) };
            let delta = r.reward + cfg.gamma * v2 - v;

            ac.value.backward(&v_trace, &[-delta], &mut g_v);
            ac.policy_loss_grad(&s, a, delta, cfg.entropy_weight, &mut g_pi);
            pending += 1;
            if pending == cfg.batch_size || r.done {
                let scale = 1.0 / pending as f64;
                g_v.iter_mut().chain(g_pi.iter_mut()).for_each(|g| *g *= scale);
                opt_v.step(&mut ac.value.params, &g_v);
                opt_pi.step(&mut ac.policy.params, &g_pi);
                if !(ac.value.is_finite() && ac.policy.is_finite()) {
                    return Err(RlError::Diverged);
                }
                g_v.iter_mut().chain(g_pi.iter_mut()).for_each(|g| *g = 0.0);
                pending = 0;
            }
            s = r.observation;
            if r.done {
                report.push(ret, r.info.success, steps);
                break;
            }
        }
        if report.reached(cfg) {
            break;
        }
    }
    Ok((ac, report))
}

fn sample(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}
