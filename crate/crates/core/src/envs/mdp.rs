use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::scene::{Cell, OccupancyGrid};

/// Grid moves; `N` is +y. Diagonals may not cut corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridAction {
    N,
    S,
    E,
    W,
    NE,
    NW,
    SE,
    SW,
    Grasp,
}

impl GridAction {
    pub const CARDINAL: [GridAction; 4] = [GridAction::N, GridAction::S, GridAction::E, GridAction::W];
    pub const ALL_MOVES: [GridAction; 8] = [
        GridAction::N,
        GridAction::S,
        GridAction::E,
        GridAction::W,
        GridAction::NE,
        GridAction::NW,
        GridAction::SE,
        GridAction::SW,
    ];

    pub fn delta(self) -> (i64, i64) {
        match self {
            GridAction::N => (0, 1),
            GridAction::S => (0, -1),
            GridAction::E => (1, 0),
            GridAction::W => (-1, 0),
            GridAction::NE => (1, 1),
            GridAction::NW => (-1, 1),
            GridAction::SE => (1, -1),
            GridAction::SW => (-1, -1),
            GridAction::Grasp => (0, 0),
        }
    }

    /// World heading of a move.
    pub fn yaw(self) -> f64 {
        let (dx, dy) = self.delta();
        (dy as f64).atan2(dx as f64)
    }
}

/// Explicit finite MDP over grid cells. States `0..cells.len()` are the free
/// cells; grasp tasks append a second copy flagged `holding`.
///
/// Rewards are state rewards collected on entering a state. Terminal states
/// end the episode and carry no future value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMDP {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    pub holding: Vec<bool>,
    pub actions: Vec<GridAction>,
    /// Successor of `(s, a)` at `s * actions.len() + a`.
    pub next: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    pub reward: Vec<f64>,
    pub gamma: f64,
    pub terminal: Vec<bool>,
}

impl GridMDP {
    /// Moves over the free cells of `grid`; blocked or off-grid moves
    /// self-loop. Features are one-hot, rewards zero.
    pub fn from_grid(grid: &OccupancyGrid, actions: &[GridAction], gamma: f64) -> Result<Self, EnvError> {
        let free = |x: i64, y: i64| grid.in_bounds(x, y) && grid.is_free((x as usize, y as usize));
        Self::build(grid.width, grid.height, free, actions, gamma, None)
    }

    /// Obstacle-free `width × height` grid.
    pub fn open(width: usize, height: usize, actions: &[GridAction], gamma: f64) -> Result<Self, EnvError> {
        let free = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;
        Self::build(width, height, free, actions, gamma, None)
    }

    /// Grasp task: the object cell is blocked; `grasp` from a 4-adjacent
    /// cell moves to the holding copy of that cell, which is terminal.
    pub fn grasp_task(
        width: usize,
        height: usize,
        obstacles: &[Cell],
        object: Cell,
        gamma: f64,
    ) -> Result<Self, EnvError> {
        let free = |x: i64, y: i64| {
            x >= 0
                && y >= 0
                && (x as usize) < width
                && (y as usize) < height
                && (x as usize, y as usize) != object
                && !obstacles.contains(&(x as usize, y as usize))
        };
        let mut actions = GridAction::CARDINAL.to_vec();
        actions.push(GridAction::Grasp);
        Self::build(width, height, free, &actions, gamma, Some(object))
    }

    fn build(
        width: usize,
        height: usize,
        free: impl Fn(i64, i64) -> bool,
        actions: &[GridAction],
        gamma: f64,
        object: Option<Cell>,
    ) -> Result<Self, EnvError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(EnvError::InvalidConfig(format!("gamma {gamma} outside (0, 1)")));
        }
        if actions.is_empty() {
            return Err(EnvError::InvalidConfig("empty action set".into()));
        }
        let base: Vec<Cell> =
            (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).filter(|&(x, y)| free(x as i64, y as i64)).collect();
        if base.is_empty() {
            return Err(EnvError::NoFreeCells);
        }
        let copies = if object.is_some() { 2 } else { 1 };
        let n_base = base.len();
        let mut index = vec![usize::MAX; width * height];
        for (s, &(x, y)) in base.iter().enumerate() {
            index[y * width + x] = s;
        }
        let n = n_base * copies;
        let na = actions.len();
        let mut next = Vec::with_capacity(n * na);
        for copy in 0..copies {
            for &(x, y) in &base {
                let here = copy * n_base + index[y * width + x];
                for &a in actions {
                    let target = match a {
                        GridAction::Grasp => match object {
                            Some((ox, oy)) if copy == 0 && x.abs_diff(ox) + y.abs_diff(oy) == 1 => here + n_base,
                            _ => here,
                        },
                        _ => {
                            let (dx, dy) = a.delta();
                            let (tx, ty) = (x as i64 + dx, y as i64 + dy);
                            let corner_ok = dx == 0 || dy == 0 || (free(x as i64 + dx, y as i64) && free(x as i64, y as i64 + dy));
                            if free(tx, ty) && corner_ok {
                                copy * n_base + index[ty as usize * width + tx as usize]
                            } else {
                                here
                            }
                        }
                    };
                    next.push(target);
                }
            }
        }
        let cells: Vec<Cell> = (0..copies).flat_map(|_| base.iter().copied()).collect();
        let holding: Vec<bool> = (0..n).map(|s| s >= n_base && copies == 2).collect();
        let features = (0..n)
            .map(|s| {
                let mut f = vec![0.0; n];
                f[s] = 1.0;
                f
            })
            .collect();
        let terminal = holding.clone();
        Ok(Self { width, height, cells, holding, actions: actions.to_vec(), next, features, reward: vec![0.0; n], gamma, terminal })
    }

    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn step(&self, s: usize, a: usize) -> usize {
        self.next[s * self.actions.len() + a]
    }

    pub fn state_of(&self, cell: Cell, holding: bool) -> Option<usize> {
        (0..self.n_states()).find(|&s| self.cells[s] == cell && self.holding[s] == holding)
    }

    pub fn action_index(&self, a: GridAction) -> Option<usize> {
        self.actions.iter().position(|&b| b == a)
    }

    /// Linear reward `θ·φ(s)` for every state.
    pub fn linear_reward(&self, theta: &[f64]) -> Vec<f64> {
        self.features.iter().map(|f| f.iter().zip(theta).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn set_terminal(&mut self, states: &[usize]) {
        for &s in states {
            self.terminal[s] = true;
        }
    }

    /// States reachable from `start` by any action sequence.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n_states()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(s) = queue.pop_front() {
            for a in 0..self.n_actions() {
                let t = self.step(s, a);
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }

    /// Check the structural invariants; used after deserializing.
    pub fn validate(&self) -> Result<(), EnvError> {
        let n = self.n_states();
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_owned()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma outside (0, 1)");
        }
        if self.next.len() != n * self.n_actions() || self.next.iter().any(|&t| t >= n) {
            return bad("transition table has invalid targets");
        }
        if self.holding.len() != n || self.reward.len() != n || self.terminal.len() != n || self.features.len() != n {
            return bad("per-state arrays disagree on state count");
        }
        let d = self.feature_dim();
        if self.features.iter().any(|f| f.len() != d) {
            return bad("ragged feature matrix");
        }
        Ok(())
    }
}
