use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    ContinuousEnv, DiscreteEnv, EnvError, GridAction, GridMDP, RewardZones, StepInfo, StepResult, TabularEnv, Zone,
    ZoneColor,
};
use crate::scene::{
    cast_ray, load_scene, occupancy_grid_in, render_first_person, Aabb, Cell, EntityKind, FluentValue, OccupancyGrid,
    Pose, SceneGraph, VelocityCommand, DT,
};

/// Ticks per discrete move; one cell per move.
pub const MOVE_TICKS: u64 = 30;
/// Ticks a continuous `(v, ω)` action is held.
pub const CONTROL_TICKS: u64 = 6;
pub const PROXIMITY_RAYS: usize = 8;
/// Position 2, heading 2, goal offset 2, proximity rays.
pub const FEATURE_DIM: usize = 6 + PROXIMITY_RAYS;

/// S-shaped corridor: spawn top left, goal bottom right.
pub const DEFAULT_MAZE_MAP: &str = "\
#######
#A....#
#####.#
#.....#
#.#####
#....G#
#######";

/// Straight corridor for the continuous-control task.
pub const CORRIDOR_MAP: &str = "\
##########
#A......G#
##########";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    #[default]
    Features,
    Depth,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionSet {
    #[default]
    Discrete4,
    Discrete8,
    Continuous,
}

impl ActionSet {
    pub fn grid_actions(self) -> &'static [GridAction] {
        match self {
            ActionSet::Discrete8 => &GridAction::ALL_MOVES,
            _ => &GridAction::CARDINAL,
        }
    }
}

/// Per-state features of an exported grid MDP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    #[default]
    OneHot,
    /// Zone indicators (red, yellow, green, blue), goal distance, obstacle adjacency.
    Handcrafted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MazeConfig {
    pub obs: ObsMode,
    pub actions: ActionSet,
    pub step_limit: usize,
    pub collision_penalty: f64,
    pub step_penalty: f64,
    pub cell_size: f64,
    pub depth_rays: usize,
    pub depth_fov: f64,
    /// Spawn yaw is drawn uniformly from `±yaw_jitter` on reset.
    pub yaw_jitter: f64,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            obs: ObsMode::Features,
            actions: ActionSet::Discrete4,
            step_limit: 500,
            collision_penalty: -0.1,
            step_penalty: -0.01,
            cell_size: 1.0,
            depth_rays: 32,
            depth_fov: FRAC_PI_2,
            yaw_jitter: 0.0,
        }
    }
}

/// Navigation task: reach the goal box, collecting each zone's reward on
/// first entry and paying per step and per collision.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    base: SceneGraph,
    scene: SceneGraph,
    agent_id: String,
    spawn: Pose,
    goal: Aabb,
    bounds: Aabb,
    zones: RewardZones,
    cfg: MazeConfig,
    visited: Vec<bool>,
    steps: usize,
    done: bool,
}

fn cell_zone(name: ZoneColor, x: usize, y: usize) -> Zone {
    let (x, y) = (x as f64, y as f64);
    Zone { name, region: Aabb { min: [x, y], max: [x + 1.0, y + 1.0] }, reward: name.default_reward() }
}

/// The built-in maze with one zone of each colour along the corridor.
pub fn default_maze_env(cfg: MazeConfig) -> MazeEnv {
    let zones = RewardZones::new(vec![
        cell_zone(ZoneColor::Red, 5, 4),
        cell_zone(ZoneColor::Yellow, 1, 3),
        cell_zone(ZoneColor::Green, 1, 1),
        cell_zone(ZoneColor::Blue, 5, 1),
    ])
    .expect("default zones are ordered");
    let scene = load_scene(DEFAULT_MAZE_MAP).expect("built-in map parses");
    MazeEnv::new(scene, Some(zones), MazeConfig { cell_size: 1.0, ..cfg }).expect("built-in map has spawn and goal")
}

/// Continuous-control corridor with shaping zones every two cells.
pub fn corridor_env(cfg: MazeConfig) -> MazeEnv {
    let zones = RewardZones::new(vec![
        cell_zone(ZoneColor::Red, 3, 1),
        cell_zone(ZoneColor::Yellow, 5, 1),
        cell_zone(ZoneColor::Green, 7, 1),
        cell_zone(ZoneColor::Blue, 8, 1),
    ])
    .expect("corridor zones are ordered");
    let scene = load_scene(CORRIDOR_MAP).expect("built-in map parses");
    MazeEnv::new(scene, Some(zones), MazeConfig { cell_size: 1.0, ..cfg }).expect("built-in map has spawn and goal")
}

impl MazeEnv {
    /// The first agent is the learner. The goal is the entity whose `goal`
    /// fluent is true. Without zones, the goal box is the single blue zone.
    pub fn new(mut scene: SceneGraph, zones: Option<RewardZones>, cfg: MazeConfig) -> Result<Self, EnvError> {
        if cfg.step_limit == 0 || !(cfg.cell_size > 0.0) {
            return Err(EnvError::InvalidConfig("step_limit and cell_size must be positive".into()));
        }
        if cfg.obs == ObsMode::Depth && cfg.depth_rays == 0 {
            return Err(EnvError::InvalidConfig("depth mode needs at least one ray".into()));
        }
        let agent = scene.agents().next().ok_or(EnvError::MissingSpawn)?;
        let (agent_id, spawn) = (agent.id.clone(), agent.pose);
        let goal = scene
            .entities
            .values()
            .find(|e| e.fluent("goal").and_then(FluentValue::as_bool) == Some(true))
            .ok_or(EnvError::MissingGoal)?
            .aabb();
        let bounds = scene.bounds().expect("scene has entities");
        let zones = match zones {
            Some(z) => z,
            None => RewardZones::new(vec![Zone { name: ZoneColor::Blue, region: goal, reward: 1.0 }])?,
        };
        // a diagonal move covers √2 cells in the same number of ticks
        let needed = 2f64.sqrt() * cfg.cell_size / (MOVE_TICKS as f64 * DT);
        scene.config.v_max = scene.config.v_max.max(needed);
        let visited = vec![false; zones.zones().len()];
        let mut env =
            Self { base: scene.clone(), scene, agent_id, spawn, goal, bounds, zones, cfg, visited, steps: 0, done: false };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &MazeConfig {
        &self.cfg
    }

    pub fn scene(&self) -> &SceneGraph {
        &self.scene
    }

    pub fn zones(&self) -> &RewardZones {
        &self.zones
    }

    pub fn goal(&self) -> Aabb {
        self.goal
    }

    pub fn agent_pose(&self) -> Pose {
        self.scene.entities[&self.agent_id].pose
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn obs_dim(&self) -> usize {
        match self.cfg.obs {
            ObsMode::Features => FEATURE_DIM,
            ObsMode::Depth => self.cfg.depth_rays,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self.cfg.actions {
            ActionSet::Continuous => 0,
            a => a.grid_actions().len(),
        }
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.scene = self.base.clone();
        let mut pose = self.spawn;
        if self.cfg.yaw_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            pose = Pose::new(pose.x, pose.y, pose.yaw + rng.random_range(-self.cfg.yaw_jitter..=self.cfg.yaw_jitter));
        }
        self.set_agent_pose(pose);
        self.steps = 0;
        self.done = false;
        self.visited.iter_mut().for_each(|v| *v = false);
        // no reward for the zone the episode starts in
        if let Some(z) = self.zones.zone_at([pose.x, pose.y]) {
            self.visited[z] = true;
        }
        self.observe()
    }

    /// Teleport the agent; the episode bookkeeping is left alone.
    pub fn set_agent_pose(&mut self, pose: Pose) {
        self.scene.entities.get_mut(&self.agent_id).expect("agent exists").pose = pose;
    }

    /// Face the move direction, then drive one cell or until contact.
    pub fn step_discrete(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.cfg.actions == ActionSet::Continuous {
            return Err(EnvError::InvalidConfig("environment has continuous actions".into()));
        }
        let moves = self.cfg.actions.grid_actions();
        let dir = *moves.get(action).ok_or(EnvError::InvalidAction { action, n: moves.len() })?;
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let p = self.agent_pose();
        self.set_agent_pose(Pose::new(p.x, p.y, dir.yaw()));
        let (dx, dy) = dir.delta();
        let len = self.cfg.cell_size * ((dx * dx + dy * dy) as f64).sqrt();
        let cmd = [VelocityCommand::new(&self.agent_id, len / (MOVE_TICKS as f64 * DT), 0.0)];
        let mut collision = false;
        for _ in 0..MOVE_TICKS {
            if !self.scene.step_in_place(&cmd, &[])?.is_empty() {
                collision = true;
                break;
            }
        }
        Ok(self.finish_step(collision))
    }

    /// Hold `(v, ω)`, clamped to the bounds, for [`CONTROL_TICKS`].
    pub fn step_continuous(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if action.len() != 2 {
            return Err(EnvError::InvalidConfig(format!("continuous action has 2 components, got {}", action.len())));
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let cmd = [VelocityCommand::new(&self.agent_id, action[0], action[1])];
        let mut collision = false;
        for _ in 0..CONTROL_TICKS {
            collision |= !self.scene.step_in_place(&cmd, &[])?.is_empty();
        }
        Ok(self.finish_step(collision))
    }

    fn finish_step(&mut self, collision: bool) -> StepResult {
        self.steps += 1;
        let p = self.agent_pose();
        let mut reward = self.cfg.step_penalty;
        let mut info = StepInfo { collision, ..StepInfo::default() };
        if collision {
            reward += self.cfg.collision_penalty;
        }
        if let Some(z) = self.zones.zone_at([p.x, p.y]) {
            if !self.visited[z] {
                self.visited[z] = true;
                let zone = &self.zones.zones()[z];
                reward += zone.reward;
                info.zone = Some(zone.name);
            }
        }
        info.success = self.goal.contains_point([p.x, p.y]);
        self.done = info.success || self.steps >= self.cfg.step_limit;
        info.truncated = self.done && !info.success;
        StepResult { observation: self.observe(), reward, done: self.done, info }
    }

    fn diag(&self) -> f64 {
        let b = self.bounds;
        (b.max[0] - b.min[0]).hypot(b.max[1] - b.min[1])
    }

    pub fn observe(&self) -> Vec<f64> {
        let diag = self.diag();
        let p = self.agent_pose();
        match self.cfg.obs {
            ObsMode::Features => {
                let b = self.bounds;
                let g = [(self.goal.min[0] + self.goal.max[0]) / 2.0, (self.goal.min[1] + self.goal.max[1]) / 2.0];
                let mut f = Vec::with_capacity(FEATURE_DIM);
                f.push((p.x - b.min[0]) / (b.max[0] - b.min[0]));
                f.push((p.y - b.min[1]) / (b.max[1] - b.min[1]));
                f.push(p.yaw.cos());
                f.push(p.yaw.sin());
                f.push((g[0] - p.x) / diag);
                f.push((g[1] - p.y) / diag);
                let me = self.agent_id.as_str();
                for i in 0..PROXIMITY_RAYS {
                    let a = p.yaw + i as f64 * std::f64::consts::TAU / PROXIMITY_RAYS as f64;
                    let hit = cast_ray(&self.scene, [p.x, p.y], [a.cos(), a.sin()], |e| {
                        e.id == me || !(e.is_static_blocker() || e.kind == EntityKind::Agent)
                    });
                    f.push(hit.map_or(1.0, |h| (h.depth / diag).min(1.0)));
                }
                f
            }
            ObsMode::Depth => {
                let scan = render_first_person(&self.scene, &self.agent_id, self.cfg.depth_rays, self.cfg.depth_fov)
                    .expect("sensor config validated");
                scan.depths.iter().map(|d| (d / diag).min(1.0)).collect()
            }
        }
    }

    /// Occupancy grid over the scene bounds at `resolution`.
    pub fn grid(&self, resolution: f64) -> OccupancyGrid {
        occupancy_grid_in(&self.base, resolution, self.bounds)
    }

    /// Explicit MDP over free cells. Entering a zone's cell earns its reward;
    /// cells whose centre lies in the goal box are terminal.
    pub fn as_grid_mdp(&self, resolution: f64, features: FeatureSet, gamma: f64) -> Result<GridMDP, EnvError> {
        if !(resolution > 0.0) {
            return Err(EnvError::InvalidConfig("resolution must be positive".into()));
        }
        let grid = self.grid(resolution);
        let mut mdp = GridMDP::from_grid(&grid, self.cfg.actions.grid_actions(), gamma)?;
        let diag = self.diag();
        let g = [(self.goal.min[0] + self.goal.max[0]) / 2.0, (self.goal.min[1] + self.goal.max[1]) / 2.0];
        for s in 0..mdp.n_states() {
            let c = grid.cell_center(mdp.cells[s]);
            let zone = self.zones.zone_at(c).map(|z| &self.zones.zones()[z]);
            mdp.reward[s] = zone.map_or(0.0, |z| z.reward);
            mdp.terminal[s] = self.goal.contains_point(c);
            if features == FeatureSet::Handcrafted {
                let mut f = vec![0.0; 6];
                if let Some(z) = zone {
                    f[z.name as usize] = 1.0;
                }
                f[4] = (g[0] - c[0]).hypot(g[1] - c[1]) / diag;
                f[5] = blocked_neighbours(&grid, mdp.cells[s]) as f64 / 8.0;
                mdp.features[s] = f;
            }
        }
        Ok(mdp)
    }
}

fn blocked_neighbours(grid: &OccupancyGrid, (x, y): Cell) -> usize {
    GridAction::ALL_MOVES
        .iter()
        .filter(|a| {
            let (dx, dy) = a.delta();
            let (tx, ty) = (x as i64 + dx, y as i64 + dy);
            !grid.in_bounds(tx, ty) || grid.is_blocked((tx as usize, ty as usize))
        })
        .count()
}

impl DiscreteEnv for MazeEnv {
    fn obs_dim(&self) -> usize {
        MazeEnv::obs_dim(self)
    }

    fn n_actions(&self) -> usize {
        MazeEnv::n_actions(self)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        MazeEnv::reset(self, seed)
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.step_discrete(action)
    }
}

impl ContinuousEnv for MazeEnv {
    fn obs_dim(&self) -> usize {
        MazeEnv::obs_dim(self)
    }

    fn action_bounds(&self) -> Vec<f64> {
        vec![self.base.config.v_max.min(crate::scene::DEFAULT_V_MAX), self.base.config.omega_max]
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        MazeEnv::reset(self, seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        self.step_continuous(action)
    }
}

/// Maze with the agent's grid cell as state, for tabular learners. Rewards
/// come from the simulator, so zone rewards stay once per episode.
#[derive(Debug, Clone)]
pub struct MazeTabular {
    pub env: MazeEnv,
    grid: OccupancyGrid,
    state_of_cell: Vec<Option<usize>>,
    n_states: usize,
}

impl MazeTabular {
    pub fn new(env: MazeEnv) -> Result<Self, EnvError> {
        let grid = env.grid(env.cfg.cell_size);
        let mut state_of_cell = vec![None; grid.width * grid.height];
        let mut n = 0;
        for c in grid.cells() {
            if grid.is_free(c) {
                state_of_cell[grid.index(c)] = Some(n);
                n += 1;
            }
        }
        if n == 0 {
            return Err(EnvError::NoFreeCells);
        }
        Ok(Self { env, grid, state_of_cell, n_states: n })
    }

    pub fn state(&self) -> usize {
        let p = self.env.agent_pose();
        self.grid.cell_at([p.x, p.y]).and_then(|c| self.state_of_cell[self.grid.index(c)]).expect("agent inside a free cell")
    }
}

impl TabularEnv for MazeTabular {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.env.n_actions()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.env.reset(seed);
        self.state()
    }

    fn step(&mut self, action: usize) -> (usize, f64, bool, bool) {
        let r = self.env.step_discrete(action).expect("valid action on a live episode");
        (self.state(), r.reward, r.done, r.info.success)
    }
}
