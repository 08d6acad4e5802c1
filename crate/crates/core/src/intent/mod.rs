//! Goal inference from trajectory prefixes: straight-line and
//! perpendicular-distance heuristics, and a planner-backed predictor over a
//! partial-order task grammar.

mod astar;
mod grammar;
mod predict;
mod session;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::OccupancyGrid;

pub use astar::{a_star, neighbours, octile};
pub use grammar::{SequenceWeight, TaskGrammar, ENUMERATION_LIMIT};
pub use predict::{
    approach_cell, detour_likelihoods, perpendicular_distance, predict_grammar, predict_perpendicular,
    predict_straightline, prefix_cost, IntentParams,
};
pub use session::{goals_from_scene, predict_session, Predictor, PosteriorLine};

#[derive(Debug, Error)]
pub enum IntentError {
    #[error("goal set is empty")]
    EmptyGoals,
    #[error("duplicate goal `{0}`")]
    DuplicateGoal(String),
    #[error("unknown subgoal `{0}`")]
    UnknownSubgoal(String),
    #[error("task grammar has a precedence cycle")]
    CyclicGrammar,
    #[error("task grammar has {0} subgoals, at most 20 supported")]
    TooManySubgoals(usize),
    #[error("no consistent parse")]
    NoConsistentParse,
    #[error("heading must be a non-zero vector")]
    InvalidHeading,
    #[error("trajectory prefix is empty")]
    EmptyPrefix,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown agent `{0}` in session")]
    UnknownAgent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub id: String,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub goals: Vec<Goal>,
}

impl GoalSet {
    pub fn new(goals: Vec<Goal>) -> Result<Self, IntentError> {
        let g = Self { goals };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), IntentError> {
        if self.goals.is_empty() {
            return Err(IntentError::EmptyGoals);
        }
        for (i, g) in self.goals.iter().enumerate() {
            if self.goals[..i].iter().any(|h| h.id == g.id) {
                return Err(IntentError::DuplicateGoal(g.id.clone()));
            }
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        self.goals.iter().map(|g| g.id.clone()).collect()
    }
}

/// Probability per goal, in goal-set order.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalPosterior {
    pub ids: Vec<String>,
    pub probs: Vec<f64>,
}

impl GoalPosterior {
    pub fn new(ids: Vec<String>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(ids.len(), probs.len());
        Self { ids, probs }
    }

    pub fn prob(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|k| self.probs[k])
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Highest-probability goal; ties go to the earlier goal.
    pub fn argmax(&self) -> &str {
        &self.ids[crate::rl::argmax(&self.probs)]
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.ids.iter().cloned().zip(self.probs.iter().copied()).collect()
    }
}

/// Values over an occupancy grid's cells, row-major by `iy * width + ix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatGrid {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Each goal's mass spread as an isotropic Gaussian (σ = one cell) centred
/// on its position, integrated per cell with the midpoint rule. Nothing is
/// normalized: the total is the posterior mass that falls inside the grid.
pub fn posterior_density(posterior: &GoalPosterior, goals: &GoalSet, grid: &OccupancyGrid) -> HeatGrid {
    let r = grid.resolution;
    let sigma2 = r * r;
    let norm = r * r / (2.0 * std::f64::consts::PI * sigma2);
    let mut values = vec![0.0; grid.width * grid.height];
    for (g, id) in goals.goals.iter().zip(goals.ids()) {
        let m = posterior.prob(&id).unwrap_or(0.0);
        if m == 0.0 {
            continue;
        }
        for (i, v) in values.iter_mut().enumerate() {
            let c = grid.cell_center(grid.cell_of_index(i));
            let d2 = (c[0] - g.position[0]).powi(2) + (c[1] - g.position[1]).powi(2);
            *v += m * norm * (-d2 / (2.0 * sigma2)).exp();
        }
    }
    HeatGrid { origin: grid.origin, resolution: r, width: grid.width, height: grid.height, values }
}

/// `posterior_density` scaled so the hottest cell is 1.
pub fn posterior_heatmap(posterior: &GoalPosterior, goals: &GoalSet, grid: &OccupancyGrid) -> HeatGrid {
    let mut h = posterior_density(posterior, goals, grid);
    let max = h.values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        h.values.iter_mut().for_each(|v| *v /= max);
    }
    h
}
