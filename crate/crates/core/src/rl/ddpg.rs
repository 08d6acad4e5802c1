use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Activation, Adam, Mlp, ReplayBuffer, RlError, TrainConfig, TrainReport, Transition};
use crate::envs::ContinuousEnv;

/// Deterministic actor with tanh outputs scaled to the action bounds, and a
/// critic over the state and the bound-normalized action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ddpg {
    pub actor: Mlp,
    pub critic: Mlp,
    pub bounds: Vec<f64>,
}

impl Ddpg {
    pub fn new(obs_dim: usize, bounds: &[f64], hidden: &[usize], rng: &mut impl Rng) -> Self {
        let m = bounds.len();
        let sizes = |i: usize, o: usize| -> Vec<usize> {
            std::iter::once(i).chain(hidden.iter().copied()).chain(std::iter::once(o)).collect()
        };
        let mut actor = Mlp::new(&sizes(obs_dim, m), Activation::Tanh, rng);
        // start from near-zero actions rather than saturated ones
        actor.scale_last_layer(0.1);
        let critic = Mlp::new(&sizes(obs_dim + m, 1), Activation::Linear, rng);
        Self { actor, critic, bounds: bounds.to_vec() }
    }

    /// Actor output in `[-1, 1]` per dimension.
    pub fn unit_action(&self, s: &[f64]) -> Vec<f64> {
        self.actor.forward_trace(s).layers.pop().expect("output layer")
    }

    pub fn act(&self, s: &[f64]) -> Vec<f64> {
        self.unit_action(s).iter().zip(&self.bounds).map(|(u, b)| u * b).collect()
    }

    /// Critic value of a unit-scaled action.
    pub fn q(&self, s: &[f64], unit_action: &[f64]) -> f64 {
        self.critic.forward_trace(&[s, unit_action].concat()).output()[0]
    }

    /// Gradient of `−Q(s, μ(s))` w.r.t. the actor parameters, added into
    /// `grad` scaled by `scale`.
    pub fn actor_grad(&self, s: &[f64], scale: f64, grad: &mut [f64]) {
        let at = self.actor.forward_trace(s);
        let x = [s, at.output()].concat();
        let ct = self.critic.forward_trace(&x);
        let mut scratch = vec![0.0; self.critic.n_params()];
        let dx = self.critic.backward(&ct, &[1.0], &mut scratch);
        let du: Vec<f64> = dx[s.len()..].iter().map(|d| -d * scale).collect();
        self.actor.backward(&at, &du, grad);
    }
}

pub fn ddpg_train<E: ContinuousEnv + ?Sized>(env: &mut E, cfg: &TrainConfig) -> Result<(Ddpg, TrainReport), RlError> {
    cfg.validate()?;
    let bounds = env.action_bounds();
    if bounds.is_empty() || !bounds.iter().all(|b| *b > 0.0 && b.is_finite()) {
        return Err(RlError::InvalidConfig("action bounds must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = env.obs_dim();
    let m = bounds.len();
    let mut net = Ddpg::new(d, &bounds, &cfg.hidden, &mut rng);
    let mut target = net.clone();
    let mut opt_a = Adam::new(net.actor.n_params(), cfg.lr);
    let mut opt_c = Adam::new(net.critic.n_params(), cfg.lr);
    let mut g_a = vec![0.0; net.actor.n_params()];
    let mut g_c = vec![0.0; net.critic.n_params()];
    let mut buffer: ReplayBuffer<Vec<f64>> = ReplayBuffer::new(cfg.replay_capacity);
    let mut report = TrainReport::default();

    for _ in 0..cfg.episodes {
        let mut s = env.reset(rng.random());
        if s.len() != d {
            return Err(RlError::DimensionMismatch { expected: d, got: s.len() });
        }
        let (mut ret, mut steps) = (0.0, 0);
        loop {
            let u: Vec<f64> = net
                .unit_action(&s)
                .into_iter()
                .map(|u| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    (u + cfg.noise_sigma * n).clamp(-1.0, 1.0)
                })
                .collect();
            let action: Vec<f64> = u.iter().zip(&bounds).map(|(u, b)| u * b).collect();
            let r = env.step(&action)?;
            ret += r.reward;
            steps += 1;
            buffer.push(Transition {
                s: std::mem::take(&mut s),
                a: u,
                r: r.reward,
                s2: r.observation.clone(),
                done: r.done && !r.info.truncated,
            });
            s = r.observation;

            if buffer.len() >= cfg.warmup.max(cfg.batch_size) {
                let batch = buffer.sample(cfg.batch_size, &mut rng);
                let scale = 1.0 / cfg.batch_size as f64;
                g_c.iter_mut().for_each(|g| *g = 0.0);
                for t in &batch {
                    let y = if t.done { t.r } else { t.r + cfg.gamma * target.q(&t.s2, &target.unit_action(&t.s2)) };
                    let tr = net.critic.forward_trace(&[&t.s[..], &t.a].concat());
                    let dq = (tr.output()[0] - y) * scale;
                    net.critic.backward(&tr, &[dq], &mut g_c);
                }
                opt_c.step(&mut net.critic.params, &g_c);
                g_a.iter_mut().for_each(|g| *g = 0.0);
                for t in &batch {
                    net.actor_grad(&t.s, scale, &mut g_a);
                }
                opt_a.step(&mut net.actor.params, &g_a);
                if !(net.actor.is_finite() && net.critic.is_finite()) {
                    return Err(RlError::Diverged);
                }
                target.actor.soft_update(&net.actor, cfg.tau);
                target.critic.soft_update(&net.critic, cfg.tau);
            }
            if r.done {
                report.push(ret, r.info.success, steps);
                break;
            }
        }
        if report.reached(cfg) {
            break;
        }
    }
    debug_assert_eq!(net.bounds.len(), m);
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvError, StepInfo, StepResult};
    use crate::rl::gradient_check;

    /// One step, reward `a − a²`, best action 0.5.
    struct Parabola;

    impl ContinuousEnv for Parabola {
        fn obs_dim(&self) -> usize {
            1
        }
        fn action_bounds(&self) -> Vec<f64> {
            vec![1.0]
        }
        fn reset(&mut self, _seed: u64) -> Vec<f64> {
            vec![1.0]
        }
        fn step(&mut self, a: &[f64]) -> Result<StepResult, EnvError> {
            let reward = a[0] - a[0] * a[0];
            Ok(StepResult { observation: vec![1.0], reward, done: true, info: StepInfo::default() })
        }
    }

    #[test]
    fn parabola_optimum_found() {
        let cfg = TrainConfig {
            episodes: 3000,
            hidden: vec![16],
            batch_size: 32,
            warmup: 32,
            lr: 3e-3,
            noise_sigma: 0.3,
            ..TrainConfig::default()
        };
        let (net, _) = ddpg_train(&mut Parabola, &cfg).unwrap();
        let a = net.act(&[1.0])[0];
        assert!((a - 0.5).abs() <= 0.1, "{a}");
    }

    #[test]
    fn actions_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Ddpg::new(3, &[2.0, 0.5], &[8], &mut rng);
        net.actor.params.iter_mut().for_each(|p| *p *= 50.0);
        for _ in 0..100 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let a = net.act(&s);
            assert!(a[0].abs() <= 2.0 && a[1].abs() <= 0.5);
        }
    }

    #[test]
    fn unit_tau_copies_online_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Ddpg::new(2, &[1.0], &[4], &mut rng);
        let mut target = Ddpg::new(2, &[1.0], &[4], &mut rng);
        target.actor.soft_update(&net.actor, 1.0);
        target.critic.soft_update(&net.critic, 1.0);
        assert_eq!(target, net);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Ddpg::new(3, &[2.0, 1.0], &[6, 5], &mut rng);
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; net.actor.n_params()];
            net.actor_grad(&s, 1.0, &mut g);
            let mut p = net.actor.params.clone();
            let mut probe = net.clone();
            let err = gradient_check(&mut p, &g, 1e-5, 1e-8, |p| {
                probe.actor.params.copy_from_slice(p);
                -probe.q(&s, &probe.unit_action(&s))
            });
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }
}
