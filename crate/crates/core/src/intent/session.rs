use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    predict_grammar, predict_perpendicular, predict_straightline, Goal, GoalSet, IntentError, IntentParams, TaskGrammar,
};
use crate::datalog::{LogEvent, SessionLog};
use crate::scene::{occupancy_grid, Cell, Outcome, SceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    Line,
    Perp,
    Grammar,
}

impl FromStr for Predictor {
    type Err = IntentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "line" => Ok(Predictor::Line),
            "perp" => Ok(Predictor::Perp),
            "grammar" => Ok(Predictor::Grammar),
            other => Err(IntentError::InvalidParam(format!("unknown predictor `{other}`"))),
        }
    }
}

/// One output line: `{"t":tick,"posterior":{goal:prob,...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorLine {
    pub t: u64,
    pub posterior: BTreeMap<String, f64>,
}

/// Goals at the current positions of the named scene entities; ids missing
/// from the scene are skipped.
pub fn goals_from_scene(scene: &SceneGraph, ids: &[String]) -> Result<GoalSet, IntentError> {
    GoalSet::new(
        ids.iter()
            .filter_map(|id| scene.get(id).map(|e| Goal { id: id.clone(), position: [e.pose.x, e.pose.y] }))
            .collect(),
    )
}

/// Run a predictor over every odometry sample of `agent`. For the grammar
/// predictor, a successful action on a subgoal marks it completed and
/// restarts the prefix at the agent's cell; output stops once every subgoal
/// is done.
pub fn predict_session(
    session: &SessionLog,
    scene: &SceneGraph,
    agent: &str,
    predictor: Predictor,
    grammar: &TaskGrammar,
    goals: &GoalSet,
    params: &IntentParams,
    resolution: f64,
) -> Result<Vec<PosteriorLine>, IntentError> {
    goals.validate()?;
    grammar.validate()?;
    if !(resolution > 0.0) {
        return Err(IntentError::InvalidParam("resolution must be positive".into()));
    }
    let grid = occupancy_grid(scene, resolution);
    let mut out = Vec::new();
    let mut completed: Vec<String> = Vec::new();
    let mut prefix: Vec<Cell> = Vec::new();
    let mut seen_agent = false;
    for rec in session.records() {
        match &rec.event {
            LogEvent::Action { agent: a, target: Some(target), outcome: Outcome::Ok, .. } if a == agent => {
                if grammar.subgoals.contains(target) && !completed.contains(target) {
                    completed.push(target.clone());
                    prefix.drain(..prefix.len().saturating_sub(1));
                }
            }
            LogEvent::Odom { agent: a, x, y, yaw } if a == agent => {
                seen_agent = true;
                let posterior = match predictor {
                    Predictor::Line => predict_straightline([*x, *y], goals, params.beta)?,
                    Predictor::Perp => predict_perpendicular([*x, *y], [yaw.cos(), yaw.sin()], goals, params.beta, params.back_penalty)?,
                    Predictor::Grammar => {
                        if completed.len() == grammar.subgoals.len() {
                            break;
                        }
                        let Some(cell) = grid.cell_at([*x, *y]) else { continue };
                        if prefix.last() != Some(&cell) {
                            prefix.push(cell);
                        }
                        predict_grammar(&prefix, grammar, &completed, goals, &grid, params)?
                    }
                };
                out.push(PosteriorLine { t: rec.t, posterior: posterior.to_map() });
            }
            _ => {}
        }
    }
    if !seen_agent {
        return Err(IntentError::UnknownAgent(agent.to_owned()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::LogRecord;
    use crate::scene::{load_scene, Verb};

    fn scene() -> SceneGraph {
        let mut s = load_scene("############\n#A.........#\n#..........#\n#..........#\n############").unwrap();
        for (id, x, y) in [("mug", 9.5, 3.5), ("milk", 2.5, 1.5)] {
            let e = serde_json::json!({"id": id, "kind": "object", "pose": {"x": x, "y": y, "yaw": 0.0}, "half_extents": [0.1, 0.1]});
            s.entities.insert(id.into(), serde_json::from_value(e).unwrap());
        }
        s
    }

    fn log(points: &[(u64, f64, f64)], grasp_at: Option<u64>) -> SessionLog {
        let mut log = SessionLog::new("s", "p", "h");
        for &(t, x, y) in points {
            if grasp_at == Some(t) {
                let ev = LogEvent::Action { agent: "A".into(), verb: Verb::Grasp, target: Some("mug".into()), outcome: Outcome::Ok };
                log.record(LogRecord { t, event: ev }).unwrap();
            }
            log.record(LogRecord { t, event: LogEvent::Odom { agent: "A".into(), x, y, yaw: 0.0 } }).unwrap();
        }
        log
    }

    #[test]
    fn one_line_per_odometry_sample() {
        let s = scene();
        let goals = goals_from_scene(&s, &["mug".into(), "milk".into(), "absent".into()]).unwrap();
        assert_eq!(goals.goals.len(), 2);
        let g = TaskGrammar::unordered(["mug", "milk"]);
        let l = log(&[(0, 1.5, 3.5), (6, 2.5, 3.5), (12, 3.5, 3.5)], None);
        for p in [Predictor::Line, Predictor::Perp, Predictor::Grammar] {
            let lines = predict_session(&l, &s, "A", p, &g, &goals, &IntentParams::default(), 1.0).unwrap();
            assert_eq!(lines.iter().map(|l| l.t).collect::<Vec<_>>(), vec![0, 6, 12]);
            for line in &lines {
                assert!((line.posterior.values().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let json = serde_json::to_string(&PosteriorLine { t: 3, posterior: BTreeMap::from([("mug".into(), 1.0)]) }).unwrap();
        assert_eq!(json, r#"{"t":3,"posterior":{"mug":1.0}}"#);
    }

    #[test]
    fn completion_moves_mass_and_stops() {
        let s = scene();
        let goals = goals_from_scene(&s, &["mug".into(), "milk".into()]).unwrap();
        let g = TaskGrammar::unordered(["mug", "milk"]);
        let l = log(&[(0, 1.5, 3.5), (6, 8.5, 3.5), (12, 8.5, 3.5), (18, 7.5, 3.5)], Some(12));
        let lines = predict_session(&l, &s, "A", Predictor::Grammar, &g, &goals, &IntentParams::default(), 1.0).unwrap();
        assert_eq!(lines[2].posterior["mug"], 0.0);
        assert_eq!(lines[2].posterior["milk"], 1.0);
        assert!(predict_session(&l, &s, "B", Predictor::Line, &g, &goals, &IntentParams::default(), 1.0).is_err());
    }
}
