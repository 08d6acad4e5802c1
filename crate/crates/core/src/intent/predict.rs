use serde::{Deserialize, Serialize};

use super::{a_star, octile, GoalPosterior, GoalSet, IntentError, TaskGrammar};
use crate::scene::{Cell, OccupancyGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntentParams {
    /// Per metre, for the geometric predictors.
    pub beta: f64,
    /// Per cell of detour, for the grammar predictor.
    pub lambda: f64,
    /// Extra distance charged to goals behind the agent, metres.
    pub back_penalty: f64,
    /// Seed for sampling orderings of large grammars.
    pub seed: u64,
}

impl Default for IntentParams {
    fn default() -> Self {
        Self { beta: 2.0, lambda: 1.0, back_penalty: 5.0, seed: 0 }
    }
}

fn check_beta(beta: f64) -> Result<(), IntentError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(IntentError::InvalidParam(format!("beta must be positive, got {beta}")))
    }
}

/// Normalize `exp(−scores)` with the max subtracted first.
fn softmin(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = scores.iter().map(|s| (m - s).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// `P(g) ∝ exp(−β‖pos − g‖)`.
pub fn predict_straightline(pos: [f64; 2], goals: &GoalSet, beta: f64) -> Result<GoalPosterior, IntentError> {
    goals.validate()?;
    check_beta(beta)?;
    let scores: Vec<f64> =
        goals.goals.iter().map(|g| beta * (g.position[0] - pos[0]).hypot(g.position[1] - pos[1])).collect();
    Ok(GoalPosterior::new(goals.ids(), softmin(&scores)))
}

/// Distance from `point` to the line through `pos` along `heading`.
pub fn perpendicular_distance(pos: [f64; 2], heading: [f64; 2], point: [f64; 2]) -> f64 {
    let n = heading[0].hypot(heading[1]);
    let (ux, uy) = (heading[0] / n, heading[1] / n);
    let (dx, dy) = (point[0] - pos[0], point[1] - pos[1]);
    (ux * dy - uy * dx).abs()
}

/// `P(g) ∝ exp(−β·d)` with `d` the perpendicular distance from the goal to
/// the heading line; goals with no positive forward projection pay
/// `back_penalty` on top.
pub fn predict_perpendicular(
    pos: [f64; 2],
    heading: [f64; 2],
    goals: &GoalSet,
    beta: f64,
    back_penalty: f64,
) -> Result<GoalPosterior, IntentError> {
    goals.validate()?;
    check_beta(beta)?;
    let n = heading[0].hypot(heading[1]);
    if !(n > 0.0 && n.is_finite()) {
        return Err(IntentError::InvalidHeading);
    }
    let scores: Vec<f64> = goals
        .goals
        .iter()
        .map(|g| {
            let d = perpendicular_distance(pos, heading, g.position);
            let forward = (g.position[0] - pos[0]) * heading[0] + (g.position[1] - pos[1]) * heading[1];
            beta * if forward > 0.0 { d } else { d + back_penalty }
        })
        .collect();
    Ok(GoalPosterior::new(goals.ids(), softmin(&scores)))
}

/// Free cell nearest the goal position (its own cell when free); ties go to
/// the lowest cell.
pub fn approach_cell(grid: &OccupancyGrid, p: [f64; 2]) -> Option<Cell> {
    if let Some(c) = grid.cell_at(p).filter(|c| grid.is_free(*c)) {
        return Some(c);
    }
    grid.cells()
        .filter(|c| grid.is_free(*c))
        .map(|c| {
            let q = grid.cell_center(c);
            ((q[0] - p[0]).hypot(q[1] - p[1]), c)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
}

/// Cost in cells of walking `prefix` cell to cell.
pub fn prefix_cost(prefix: &[Cell]) -> f64 {
    prefix.windows(2).map(|w| octile(w[0], w[1])).sum()
}

/// Unnormalized noisy-rational likelihood of each goal:
/// `exp(−λ·[c(prefix) + c*(x_t → g) − c*(x_0 → g)])`, zero when unreachable.
pub fn detour_likelihoods(prefix: &[Cell], targets: &[Option<Cell>], grid: &OccupancyGrid, lambda: f64) -> Result<Vec<f64>, IntentError> {
    let (&x0, &xt) = match (prefix.first(), prefix.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(IntentError::EmptyPrefix),
    };
    let walked = prefix_cost(prefix);
    Ok(targets
        .iter()
        .map(|t| {
            let Some(t) = *t else { return 0.0 };
            let (to_goal, _) = a_star(grid, xt, t);
            let (direct, _) = a_star(grid, x0, t);
            if !(to_goal.is_finite() && direct.is_finite()) {
                return 0.0;
            }
            (-lambda * (walked + to_goal - direct)).exp()
        })
        .collect())
}

/// Posterior over the next subgoal: the grammar's next-subgoal prior times
/// the detour likelihood of the prefix, normalized. Subgoals without a goal
/// location get no mass.
pub fn predict_grammar(
    prefix: &[Cell],
    grammar: &TaskGrammar,
    completed: &[String],
    goals: &GoalSet,
    grid: &OccupancyGrid,
    params: &IntentParams,
) -> Result<GoalPosterior, IntentError> {
    goals.validate()?;
    if !(params.lambda >= 0.0 && params.lambda.is_finite()) {
        return Err(IntentError::InvalidParam(format!("lambda must be non-negative, got {}", params.lambda)));
    }
    let prior = grammar.next_subgoal_prior(completed, params.seed)?;
    let ids = goals.ids();
    let targets: Vec<Option<Cell>> = goals
        .goals
        .iter()
        .map(|g| if prior.contains_key(&g.id) { approach_cell(grid, g.position) } else { None })
        .collect();
    let like = detour_likelihoods(prefix, &targets, grid, params.lambda)?;
    let mass: Vec<f64> = ids.iter().zip(&like).map(|(id, l)| prior.get(id).copied().unwrap_or(0.0) * l).collect();
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(IntentError::NoConsistentParse);
    }
    Ok(GoalPosterior::new(ids, mass.into_iter().map(|m| m / total).collect()))
}
