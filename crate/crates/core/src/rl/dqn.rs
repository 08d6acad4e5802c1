use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Activation, Adam, Mlp, ReplayBuffer, RlError, TrainConfig, TrainReport, Transition};
use crate::envs::DiscreteEnv;

/// Action-value function approximator with flat parameter access.
pub trait QFunction: Clone {
    fn input_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn q_values(&self, x: &[f64]) -> Vec<f64>;
    /// Add the parameter gradient of `dq · Q(x)` into `grad`.
    fn accumulate_grad(&self, x: &[f64], dq: &[f64], grad: &mut [f64]);
    fn n_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]);
}

impl QFunction for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn n_actions(&self) -> usize {
        self.output_dim()
    }

    fn q_values(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).layers.pop().expect("output layer")
    }

    fn accumulate_grad(&self, x: &[f64], dq: &[f64], grad: &mut [f64]) {
        self.backward(&self.forward_trace(x), dq, grad);
    }

    fn n_params(&self) -> usize {
        Mlp::n_params(self)
    }

    fn params(&self) -> Vec<f64> {
        self.params.clone()
    }

    fn set_params(&mut self, p: &[f64]) {
        self.params.copy_from_slice(p);
    }
}

/// Shared tanh trunk feeding a state-value head and an advantage head,
/// combined as `Q(s,a) = V(s) + A(s,a) − mean_a' A(s,a')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelingNet {
    pub trunk: Mlp,
    pub value: Mlp,
    pub advantage: Mlp,
}

impl DuelingNet {
    /// `trunk_sizes` runs from input to the last hidden layer.
    pub fn new(trunk_sizes: &[usize], n_actions: usize, rng: &mut impl Rng) -> Self {
        let h = *trunk_sizes.last().expect("trunk sizes");
        Self {
            trunk: Mlp::new(trunk_sizes, Activation::Tanh, rng),
            value: Mlp::new(&[h, 1], Activation::Linear, rng),
            advantage: Mlp::new(&[h, n_actions], Activation::Linear, rng),
        }
    }

    /// Heads evaluated on a trunk output: `(V, A)`.
    pub fn streams(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let h = self.trunk.forward_trace(x).layers.pop().expect("trunk output");
        (self.value.q_values(&h)[0], self.advantage.q_values(&h))
    }

    /// The dueling aggregation of a value and advantage vector.
    pub fn aggregate(v: f64, adv: &[f64]) -> Vec<f64> {
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        adv.iter().map(|a| v + a - mean).collect()
    }
}

impl QFunction for DuelingNet {
    fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    fn n_actions(&self) -> usize {
        self.advantage.output_dim()
    }

    fn q_values(&self, x: &[f64]) -> Vec<f64> {
        let (v, a) = self.streams(x);
        Self::aggregate(v, &a)
    }

    fn accumulate_grad(&self, x: &[f64], dq: &[f64], grad: &mut [f64]) {
        let (nt, nv) = (self.trunk.n_params(), self.value.n_params());
        let (gt, rest) = grad.split_at_mut(nt);
        let (gv, ga) = rest.split_at_mut(nv);
        let trunk = self.trunk.forward_trace(x);
        let h = trunk.output();
        let dv: f64 = dq.iter().sum();
        let mean = dv / dq.len() as f64;
        let da: Vec<f64> = dq.iter().map(|d| d - mean).collect();
        let mut dh = self.value.backward(&self.value.forward_trace(h), &[dv], gv);
        let dh_a = self.advantage.backward(&self.advantage.forward_trace(h), &da, ga);
        for (a, b) in dh.iter_mut().zip(dh_a) {
            *a += b;
        }
        self.trunk.backward(&trunk, &dh, gt);
    }

    fn n_params(&self) -> usize {
        self.trunk.n_params() + self.value.n_params() + self.advantage.n_params()
    }

    fn params(&self) -> Vec<f64> {
        [&self.trunk.params[..], &self.value.params, &self.advantage.params].concat()
    }

    fn set_params(&mut self, p: &[f64]) {
        let (nt, nv) = (self.trunk.n_params(), self.value.n_params());
        self.trunk.params.copy_from_slice(&p[..nt]);
        self.value.params.copy_from_slice(&p[nt..nt + nv]);
        self.advantage.params.copy_from_slice(&p[nt + nv..]);
    }
}

/// Deep Q-learning with uniform experience replay and a hard-synced target
/// network. Loss is the mean squared TD error over each sampled batch.
pub fn dqn_train<E: DiscreteEnv + ?Sized>(env: &mut E, cfg: &TrainConfig) -> Result<(Mlp, TrainReport), RlError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = Mlp::new(&cfg.layer_sizes(env.obs_dim(), env.n_actions()), Activation::Linear, &mut rng);
    train_q(env, cfg, net, rng)
}

pub fn dueling_dqn_train<E: DiscreteEnv + ?Sized>(
    env: &mut E,
    cfg: &TrainConfig,
) -> Result<(DuelingNet, TrainReport), RlError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trunk: Vec<usize> = std::iter::once(env.obs_dim()).chain(cfg.hidden.iter().copied()).collect();
    if trunk.len() < 2 {
        return Err(RlError::InvalidConfig("dueling nets need at least one hidden layer".into()));
    }
    let net = DuelingNet::new(&trunk, env.n_actions(), &mut rng);
    train_q(env, cfg, net, rng)
}

fn train_q<E: DiscreteEnv + ?Sized, Q: QFunction>(
    env: &mut E,
    cfg: &TrainConfig,
    mut net: Q,
    mut rng: ChaCha8Rng,
) -> Result<(Q, TrainReport), RlError> {
    let na = env.n_actions();
    if na == 0 {
        return Err(RlError::InvalidConfig("environment has no discrete actions".into()));
    }
    let mut target = net.clone();
    let mut opt = Adam::new(net.n_params(), cfg.lr);
    let mut buffer: ReplayBuffer<usize> = ReplayBuffer::new(cfg.replay_capacity);
    let mut report = TrainReport::default();
    let mut updates = 0usize;
    let mut grad = vec![0.0; net.n_params()];

    for ep in 0..cfg.episodes {
        let eps = cfg.epsilon.at(ep, cfg.episodes);
        let mut s = env.reset(rng.random());
        if s.len() != net.input_dim() {
            return Err(RlError::DimensionMismatch { expected: net.input_dim(), got: s.len() });
        }
        let (mut ret, mut steps) = (0.0, 0);
        loop {
            let a = if rng.random::<f64>() < eps { rng.random_range(0..na) } else { argmax(&net.q_values(&s)) };
            let r = env.step(a)?;
            ret += r.reward;
            steps += 1;
            let done = r.done;
            buffer.push(Transition {
                s: std::mem::take(&mut s),
                a,
                r: r.reward,
                s2: r.observation.clone(),
                done: r.done && !r.info.truncated,
            });
            s = r.observation;

            if buffer.len() >= cfg.warmup.max(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / cfg.batch_size as f64;
                for t in buffer.sample(cfg.batch_size, &mut rng) {
                    let y = if t.done {
                        t.r
                    } else {
                        t.r + cfg.gamma * target.q_values(&t.s2).into_iter().fold(f64::NEG_INFINITY, f64::max)
                    };
                    let q = net.q_values(&t.s);
                    let mut dq = vec![0.0; na];
                    dq[t.a] = (q[t.a] - y) * scale;
                    net.accumulate_grad(&t.s, &dq, &mut grad);
                }
                let mut p = net.params();
                opt.step(&mut p, &grad);
                if !p.iter().all(|v| v.is_finite()) {
                    return Err(RlError::Diverged);
                }
                net.set_params(&p);
                updates += 1;
                if updates % cfg.target_sync == 0 {
                    target = net.clone();
                }
            }
            if done {
                report.push(ret, r.info.success, steps);
                break;
            }
        }
        if report.reached(cfg) {
            break;
        }
    }
    Ok((net, report))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::envs::{EnvError, StepInfo, StepResult};
    use crate::rl::gradient_check;

    /// One-step bandit with a constant observation.
    #[derive(Debug, Clone)]
    pub(crate) struct Bandit {
        pub rewards: Vec<f64>,
    }

    impl DiscreteEnv for Bandit {
        fn obs_dim(&self) -> usize {
            1
        }
        fn n_actions(&self) -> usize {
            self.rewards.len()
        }
        fn reset(&mut self, _seed: u64) -> Vec<f64> {
            vec![1.0]
        }
        fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
            let reward = self.rewards[action];
            let info = StepInfo { success: reward > 0.5, ..StepInfo::default() };
            Ok(StepResult { observation: vec![1.0], reward, done: true, info })
        }
    }

    fn small_cfg(episodes: usize) -> TrainConfig {
        TrainConfig {
            episodes,
            hidden: vec![8],
            batch_size: 16,
            warmup: 16,
            target_sync: 20,
            lr: 1e-2,
            epsilon: crate::rl::EpsilonSchedule { start: 1.0, end: 0.1, decay_episodes: Some(100) },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn bandit_prefers_paying_arm() {
        let mut env = Bandit { rewards: vec![0.0, 1.0] };
        let (net, _) = dqn_train(&mut env, &small_cfg(300)).unwrap();
        assert_eq!(argmax(&net.q_values(&[1.0])), 1);
        let (duel, _) = dueling_dqn_train(&mut env, &small_cfg(300)).unwrap();
        assert_eq!(argmax(&duel.q_values(&[1.0])), 1);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let mut env = Bandit { rewards: vec![0.0, 1.0, 0.5] };
        let a = dqn_train(&mut env, &small_cfg(60)).unwrap();
        let b = dqn_train(&mut env, &small_cfg(60)).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn dueling_shift_invariance_and_single_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = DuelingNet::new(&[3, 5], 4, &mut rng);
        let x = [0.2, -0.4, 0.9];
        let before = net.q_values(&x);
        // shifting every advantage output by c moves only the output bias
        let (_, b, _, n_out) = net.advantage.layer(0);
        for j in 0..n_out {
            net.advantage.params[b + j] += 2.5;
        }
        for (p, q) in before.iter().zip(net.q_values(&x)) {
            assert!((p - q).abs() < 1e-12);
        }
        let single = DuelingNet::new(&[3, 5], 1, &mut rng);
        let (v, _) = single.streams(&x);
        assert!((single.q_values(&x)[0] - v).abs() < 1e-12);
    }

    #[test]
    fn dueling_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = DuelingNet::new(&[4, 6, 5], 3, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dq: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; net.n_params()];
            net.accumulate_grad(&x, &dq, &mut g);
            let mut p = net.params();
            let mut probe = net.clone();
            let err = gradient_check(&mut p, &g, 1e-5, 1e-8, |p| {
                probe.set_params(p);
                probe.q_values(&x).iter().zip(&dq).map(|(a, b)| a * b).sum()
            });
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }
}
