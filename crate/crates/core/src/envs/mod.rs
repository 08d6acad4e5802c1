//! Episodic task environments over the scene simulator: maze navigation with
//! colour-zone rewards, a grid grasp-reach task, and export to explicit
//! grid MDPs for planning and IRL.

mod grasp;
mod maze;
mod mdp;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Aabb, SceneError};

pub use grasp::{GraspConfig, GraspEnv, GRASP_OBS_DIM};
pub use maze::{
    corridor_env, default_maze_env, ActionSet, FeatureSet, MazeConfig, MazeEnv, MazeTabular, ObsMode, CORRIDOR_MAP,
    CONTROL_TICKS, DEFAULT_MAZE_MAP, FEATURE_DIM, MOVE_TICKS, PROXIMITY_RAYS,
};
pub use mdp::{GridAction, GridMDP};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("scene has no agent spawn")]
    MissingSpawn,
    #[error("scene has no goal marker")]
    MissingGoal,
    #[error("grid has no free cells")]
    NoFreeCells,
    #[error("invalid reward zones: {0}")]
    InvalidZones(String),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("action {action} outside 0..{n}")]
    InvalidAction { action: usize, n: usize },
    #[error("step after episode end; call reset")]
    EpisodeDone,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub collision: bool,
    /// Zone newly entered on this step.
    pub zone: Option<ZoneColor>,
    pub success: bool,
    /// Episode cut off by the step limit rather than ending in a terminal state.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Episodic environment with discrete actions `0..n_actions()`.
pub trait DiscreteEnv {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;
}

/// Episodic environment with a real action vector.
pub trait ContinuousEnv {
    fn obs_dim(&self) -> usize;
    /// Per-dimension symmetric bound: action `i` lies in `[-b_i, b_i]`.
    fn action_bounds(&self) -> Vec<f64>;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;
}

/// Finite-state episodic task for tabular learners.
pub trait TabularEnv {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> usize;
    /// Returns `(next state, reward, done, success)`.
    fn step(&mut self, action: usize) -> (usize, f64, bool, bool);
}

/// Tabular view of a [`GridMDP`]: rewards on entry, episodes end at terminal
/// states or the step limit.
#[derive(Debug, Clone)]
pub struct MdpEpisodes<'a> {
    pub mdp: &'a GridMDP,
    pub start: usize,
    pub step_limit: usize,
    state: usize,
    steps: usize,
}

impl<'a> MdpEpisodes<'a> {
    pub fn new(mdp: &'a GridMDP, start: usize, step_limit: usize) -> Self {
        Self { mdp, start, step_limit, state: start, steps: 0 }
    }
}

impl TabularEnv for MdpEpisodes<'_> {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset(&mut self, _seed: u64) -> usize {
        self.state = self.start;
        self.steps = 0;
        self.state
    }

    fn step(&mut self, action: usize) -> (usize, f64, bool, bool) {
        self.state = self.mdp.step(self.state, action);
        self.steps += 1;
        let success = self.mdp.terminal[self.state];
        (self.state, self.mdp.reward[self.state], success || self.steps >= self.step_limit, success)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneColor {
    Red,
    Yellow,
    Green,
    Blue,
}

impl fmt::Display for ZoneColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ZoneColor::Red => "red",
            ZoneColor::Yellow => "yellow",
            ZoneColor::Green => "green",
            ZoneColor::Blue => "blue",
        };
        f.write_str(s)
    }
}

impl ZoneColor {
    pub fn default_reward(self) -> f64 {
        match self {
            ZoneColor::Red => 0.1,
            ZoneColor::Yellow => 0.25,
            ZoneColor::Green => 0.5,
            ZoneColor::Blue => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub name: ZoneColor,
    pub region: Aabb,
    pub reward: f64,
}

/// Reward zones. Several regions may share a colour; rewards must rise
/// strictly from red to blue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Zone>", into = "Vec<Zone>")]
pub struct RewardZones(Vec<Zone>);

impl RewardZones {
    pub fn new(zones: Vec<Zone>) -> Result<Self, EnvError> {
        for z in &zones {
            if !z.reward.is_finite() {
                return Err(EnvError::InvalidZones(format!("{} reward is not finite", z.name)));
            }
        }
        for a in &zones {
            for b in &zones {
                if a.name == b.name && a.reward != b.reward {
                    return Err(EnvError::InvalidZones(format!("{} regions disagree on reward", a.name)));
                }
                if a.name < b.name && a.reward >= b.reward {
                    return Err(EnvError::InvalidZones(format!(
                        "{} reward {} must be below {} reward {}",
                        a.name, a.reward, b.name, b.reward
                    )));
                }
            }
        }
        Ok(Self(zones))
    }

    pub fn zones(&self) -> &[Zone] {
        &self.0
    }

    /// Index of the first zone containing `p`.
    pub fn zone_at(&self, p: [f64; 2]) -> Option<usize> {
        self.0.iter().position(|z| z.region.contains_point(p))
    }
}

impl TryFrom<Vec<Zone>> for RewardZones {
    type Error = EnvError;
    fn try_from(v: Vec<Zone>) -> Result<Self, EnvError> {
        RewardZones::new(v)
    }
}

impl From<RewardZones> for Vec<Zone> {
    fn from(z: RewardZones) -> Self {
        z.0
    }
}

/// One environment step of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajStep<S> {
    pub state: S,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub steps: Vec<TrajStep<S>>,
    pub final_state: S,
    pub success: bool,
}

impl<S> Trajectory<S> {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Run `policy` from `reset(seed)` until done or `max_steps`. The policy gets
/// a generator seeded from `seed` for any sampling it does.
pub fn rollout<E: DiscreteEnv + ?Sized>(
    env: &mut E,
    mut policy: impl FnMut(&[f64], &mut ChaCha8Rng) -> usize,
    seed: u64,
    max_steps: usize,
) -> Result<Trajectory<Vec<f64>>, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = env.reset(seed);
    let mut steps = Vec::new();
    let mut success = false;
    for _ in 0..max_steps {
        let action = policy(&obs, &mut rng);
        let r = env.step(action)?;
        steps.push(TrajStep { state: std::mem::replace(&mut obs, r.observation), action, reward: r.reward });
        success = r.info.success;
        if r.done {
            break;
        }
    }
    Ok(Trajectory { steps, final_state: obs, success })
}

/// Rollout over a tabular environment.
pub fn rollout_tabular<E: TabularEnv + ?Sized>(
    env: &mut E,
    mut policy: impl FnMut(usize, &mut ChaCha8Rng) -> usize,
    seed: u64,
    max_steps: usize,
) -> Trajectory<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = env.reset(seed);
    let mut steps = Vec::new();
    let mut success = false;
    for _ in 0..max_steps {
        let action = policy(s, &mut rng);
        let (next, reward, done, ok) = env.step(action);
        steps.push(TrajStep { state: s, action, reward });
        s = next;
        success = ok;
        if done {
            break;
        }
    }
    Trajectory { steps, final_state: s, success }
}

/// On-disk environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub task: Task,
    /// Scene document path (maze only); the built-in maze when absent.
    #[serde(default)]
    pub scene: Option<String>,
    #[serde(default)]
    pub zones: Option<RewardZones>,
    #[serde(default)]
    pub obs: ObsMode,
    #[serde(default)]
    pub actions: ActionSet,
    #[serde(default)]
    pub step_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Maze,
    Grasp,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zone(name: ZoneColor, reward: f64) -> Zone {
        Zone { name, region: Aabb { min: [0.0, 0.0], max: [1.0, 1.0] }, reward }
    }

    #[test]
    fn zones_must_increase() {
        use ZoneColor::*;
        assert!(RewardZones::new(vec![zone(Red, 0.1), zone(Blue, 1.0)]).is_ok());
        assert!(RewardZones::new(vec![zone(Yellow, 0.5), zone(Green, 0.5)]).is_err());
        assert!(RewardZones::new(vec![zone(Blue, 0.2), zone(Red, 0.3)]).is_err());
        assert!(RewardZones::new(vec![zone(Red, 0.1), zone(Red, 0.2)]).is_err());
        let json = r#"[{"name":"green","region":{"min":[0,0],"max":[1,1]},"reward":0.1},
                       {"name":"red","region":{"min":[0,0],"max":[1,1]},"reward":0.2}]"#;
        assert!(serde_json::from_str::<RewardZones>(json).is_err());
    }

    #[test]
    fn env_config_parses() {
        let cfg: EnvConfig =
            serde_json::from_str(r#"{"task":"maze","obs":"depth","actions":"discrete8","step_limit":50}"#).unwrap();
        assert_eq!(cfg.task, Task::Maze);
        assert_eq!(cfg.obs, ObsMode::Depth);
        assert_eq!(cfg.actions, ActionSet::Discrete8);
        assert!(serde_json::from_str::<EnvConfig>(r#"{"task":"maze","bogus":1}"#).is_err());
    }

    #[test]
    fn mdp_episodes_end_at_terminal() {
        let mut m = GridMDP::open(3, 1, &GridAction::CARDINAL, 0.9).unwrap();
        let goal = m.state_of((2, 0), false).unwrap();
        m.set_terminal(&[goal]);
        m.reward[goal] = 1.0;
        let east = m.action_index(GridAction::E).unwrap();
        let mut env = MdpEpisodes::new(&m, 0, 10);
        let t = rollout_tabular(&mut env, |_, _| east, 0, 100);
        assert_eq!(t.steps.len(), 2);
        assert!(t.success);
        assert_eq!(t.total_reward(), 1.0);
    }
}
