use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DiscreteEnv, EnvError, GridAction, GridMDP, StepInfo, StepResult};
use crate::scene::Cell;

pub const GRASP_OBS_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    pub size: usize,
    /// Object cell; the grid centre when absent.
    pub object: Option<Cell>,
    pub obstacles: Vec<Cell>,
    /// Fixed spawn; otherwise drawn uniformly from free cells on reset.
    pub spawn: Option<Cell>,
    pub step_limit: usize,
    pub success_reward: f64,
    pub step_penalty: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            size: 5,
            object: None,
            obstacles: Vec::new(),
            spawn: None,
            step_limit: 100,
            success_reward: 1.0,
            step_penalty: -0.01,
        }
    }
}

/// Grid reach-and-grasp: walk next to the object (4-adjacent) and grasp.
/// Actions are N, S, E, W, grasp.
#[derive(Debug, Clone)]
pub struct GraspEnv {
    cfg: GraspConfig,
    object: Cell,
    free: Vec<Cell>,
    agent: Cell,
    steps: usize,
    done: bool,
}

impl GraspEnv {
    pub const ACTIONS: [GridAction; 5] = [GridAction::N, GridAction::S, GridAction::E, GridAction::W, GridAction::Grasp];

    pub fn new(cfg: GraspConfig) -> Result<Self, EnvError> {
        let n = cfg.size;
        if n < 3 {
            return Err(EnvError::InvalidConfig(format!("grid size {n} below 3")));
        }
        if cfg.step_limit == 0 {
            return Err(EnvError::InvalidConfig("step_limit must be positive".into()));
        }
        let object = cfg.object.unwrap_or((n / 2, n / 2));
        let inside = |c: &Cell| c.0 < n && c.1 < n;
        if !inside(&object) || !cfg.obstacles.iter().all(inside) {
            return Err(EnvError::InvalidConfig("object or obstacle outside the grid".into()));
        }
        let free: Vec<Cell> = (0..n)
            .flat_map(|y| (0..n).map(move |x| (x, y)))
            .filter(|c| *c != object && !cfg.obstacles.contains(c))
            .collect();
        if free.is_empty() {
            return Err(EnvError::NoFreeCells);
        }
        if let Some(s) = cfg.spawn {
            if !free.contains(&s) {
                return Err(EnvError::InvalidConfig(format!("spawn {s:?} is not a free cell")));
            }
        }
        let agent = cfg.spawn.unwrap_or(free[0]);
        Ok(Self { cfg, object, free, agent, steps: 0, done: false })
    }

    pub fn object(&self) -> Cell {
        self.object
    }

    pub fn agent(&self) -> Cell {
        self.agent
    }

    pub fn adjacent(&self) -> bool {
        self.agent.0.abs_diff(self.object.0) + self.agent.1.abs_diff(self.object.1) == 1
    }

    fn observe(&self) -> Vec<f64> {
        let s = (self.cfg.size - 1) as f64;
        let (x, y) = (self.agent.0 as f64, self.agent.1 as f64);
        let (ox, oy) = (self.object.0 as f64, self.object.1 as f64);
        vec![x / s, y / s, (ox - x) / s, (oy - y) / s, if self.adjacent() { 1.0 } else { 0.0 }]
    }

    /// Explicit MDP: holding states are terminal and pay the success reward,
    /// every other entered state pays the step penalty.
    pub fn as_grid_mdp(&self, gamma: f64) -> Result<GridMDP, EnvError> {
        let n = self.cfg.size;
        let mut mdp = GridMDP::grasp_task(n, n, &self.cfg.obstacles, self.object, gamma)?;
        for s in 0..mdp.n_states() {
            mdp.reward[s] = if mdp.holding[s] { self.cfg.success_reward } else { self.cfg.step_penalty };
        }
        Ok(mdp)
    }
}

impl DiscreteEnv for GraspEnv {
    fn obs_dim(&self) -> usize {
        GRASP_OBS_DIM
    }

    fn n_actions(&self) -> usize {
        Self::ACTIONS.len()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.agent = match self.cfg.spawn {
            Some(c) => c,
            None => self.free[ChaCha8Rng::seed_from_u64(seed).random_range(0..self.free.len())],
        };
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let a = *Self::ACTIONS.get(action).ok_or(EnvError::InvalidAction { action, n: Self::ACTIONS.len() })?;
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        self.steps += 1;
        let mut info = StepInfo::default();
        if a == GridAction::Grasp {
            info.success = self.adjacent();
        } else {
            let (dx, dy) = a.delta();
            let (tx, ty) = (self.agent.0 as i64 + dx, self.agent.1 as i64 + dy);
            let target = (tx.max(0) as usize, ty.max(0) as usize);
            if tx >= 0 && ty >= 0 && self.free.contains(&target) {
                self.agent = target;
            } else {
                info.collision = true;
            }
        }
        let reward = if info.success { self.cfg.success_reward } else { self.cfg.step_penalty };
        self.done = info.success || self.steps >= self.cfg.step_limit;
        info.truncated = self.done && !info.success;
        Ok(StepResult { observation: self.observe(), reward, done: self.done, info })
    }
}
