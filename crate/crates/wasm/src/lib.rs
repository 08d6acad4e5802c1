//! Browser demo over the simulation core. Drive an agent around a scene
//! and watch its depth scan and goal posterior, or recover a planted reward
//! on a small grid. Every call returns JSON text for the page to draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use vrgl_core::envs::{GridAction, GridMDP};
use vrgl_core::intent::{
    goals_from_scene, posterior_density, predict_grammar, predict_perpendicular, predict_straightline, GoalSet,
    IntentParams, TaskGrammar,
};
use vrgl_core::irl::{action_agreement, evd, maxent_irl, sample_trajectory, soft_value_iteration, Demonstrations, MaxEntConfig};
use vrgl_core::scene::{load_scene, occupancy_grid, render_first_person, Cell, OccupancyGrid, VelocityCommand};
use vrgl_core::SceneGraph;

pub const KITCHEN: &str = include_str!("../../../assets/kitchen.json");

/// Largest grid side accepted by [`recover_reward`]; bigger grids stall the page.
pub const MAX_IRL_SIDE: usize = 8;

fn js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    scene: SceneGraph,
    grid: OccupancyGrid,
    agent: String,
    goals: GoalSet,
    /// Cells the agent has passed through, consecutive repeats dropped.
    trail: Vec<Cell>,
}

impl Demo {
    pub fn load(document: &str, agent: &str) -> Result<Demo, String> {
        let scene = load_scene(document).map_err(|e| e.to_string())?;
        let grid = occupancy_grid(&scene, 0.5);
        let ids = TaskGrammar::coffee().subgoals;
        let goals = goals_from_scene(&scene, &ids).map_err(|e| e.to_string())?;
        let mut demo = Demo { scene, grid, agent: agent.to_owned(), goals, trail: Vec::new() };
        demo.agent_pose()?;
        demo.note_cell()?;
        Ok(demo)
    }

    fn agent_pose(&self) -> Result<[f64; 3], String> {
        let p = self.scene.agent(&self.agent).map_err(|e| e.to_string())?.pose;
        Ok([p.x, p.y, p.yaw])
    }

    fn note_cell(&mut self) -> Result<(), String> {
        let [x, y, _] = self.agent_pose()?;
        if let Some(c) = self.grid.cell_at([x, y]) {
            if self.trail.last() != Some(&c) {
                self.trail.push(c);
            }
        }
        Ok(())
    }

    pub fn step(&mut self, v: f64, omega: f64, ticks: u32) -> Result<Value, String> {
        let cmd = [VelocityCommand::new(&self.agent, v, omega)];
        let mut collisions = 0;
        for _ in 0..ticks {
            collisions += self.scene.step_in_place(&cmd, &[]).map_err(|e| e.to_string())?.len();
            self.note_cell()?;
        }
        let [x, y, yaw] = self.agent_pose()?;
        Ok(json!({ "tick": self.scene.tick, "pose": [x, y, yaw], "events": collisions }))
    }

    pub fn depth_scan(&self, n_rays: usize, fov_deg: f64) -> Result<Value, String> {
        let scan = render_first_person(&self.scene, &self.agent, n_rays, fov_deg.to_radians()).map_err(|e| e.to_string())?;
        Ok(json!({ "pose": self.agent_pose()?, "angles": scan.angles, "depths": scan.depths, "labels": scan.labels }))
    }

    /// Goal posterior from the agent's current state, spread over the grid.
    /// `algo` is `line`, `perp` or `grammar`.
    pub fn intent(&self, algo: &str) -> Result<Value, String> {
        let [x, y, yaw] = self.agent_pose()?;
        let params = IntentParams::default();
        let post = match algo {
            "line" => predict_straightline([x, y], &self.goals, params.beta),
            "perp" => predict_perpendicular([x, y], [yaw.cos(), yaw.sin()], &self.goals, params.beta, params.back_penalty),
            "grammar" => predict_grammar(&self.trail, &TaskGrammar::coffee(), &[], &self.goals, &self.grid, &params),
            other => return Err(format!("unknown predictor `{other}`")),
        }
        .map_err(|e| e.to_string())?;
        let heat = posterior_density(&post, &self.goals, &self.grid);
        Ok(json!({
            "posterior": post.to_map(),
            "argmax": post.argmax(),
            "goals": self.goals.goals,
            "heat": heat,
        }))
    }

    pub fn layout(&self) -> Value {
        let boxes: Vec<Value> = self
            .scene
            .entities
            .values()
            .filter(|e| !e.is_open_door())
            .map(|e| {
                let b = e.aabb();
                json!({ "id": e.id, "kind": e.kind, "min": b.min, "max": b.max })
            })
            .collect();
        json!({ "grid": self.grid, "entities": boxes, "trail": self.trail })
    }
}

#[wasm_bindgen]
impl Demo {
    /// Scene document as JSON text, or the bundled kitchen when empty.
    #[wasm_bindgen(constructor)]
    pub fn new(document: &str, agent: &str) -> Result<Demo, JsValue> {
        let doc = if document.trim().is_empty() { KITCHEN } else { document };
        Demo::load(doc, agent).map_err(js)
    }

    /// Hold a velocity command for `ticks` fixed steps.
    #[wasm_bindgen(js_name = drive)]
    pub fn drive_js(&mut self, v: f64, omega: f64, ticks: u32) -> Result<String, JsValue> {
        self.step(v, omega, ticks).map(|v| v.to_string()).map_err(js)
    }

    #[wasm_bindgen(js_name = scan)]
    pub fn scan_js(&self, n_rays: usize, fov_deg: f64) -> Result<String, JsValue> {
        self.depth_scan(n_rays, fov_deg).map(|v| v.to_string()).map_err(js)
    }

    #[wasm_bindgen(js_name = intent)]
    pub fn intent_js(&self, algo: &str) -> Result<String, JsValue> {
        self.intent(algo).map(|v| v.to_string()).map_err(js)
    }

    #[wasm_bindgen(js_name = layout)]
    pub fn layout_js(&self) -> String {
        self.layout().to_string()
    }

    #[wasm_bindgen(js_name = clearTrail)]
    pub fn clear_trail(&mut self) {
        self.trail.clear();
        let _ = self.note_cell();
    }
}

/// Plant a goal reward on an open `width × height` grid, sample soft-optimal
/// demonstrations, and run maximum-entropy IRL on them.
pub fn recover(width: usize, height: usize, goal: Cell, n_demos: usize, seed: u64) -> Result<Value, String> {
    if !(2..=MAX_IRL_SIDE).contains(&width) || !(2..=MAX_IRL_SIDE).contains(&height) {
        return Err(format!("grid sides must be between 2 and {MAX_IRL_SIDE}"));
    }
    if n_demos == 0 {
        return Err("need at least one demonstration".into());
    }
    let mdp = GridMDP::open(width, height, &GridAction::CARDINAL, 0.9).map_err(|e| e.to_string())?;
    let g = mdp.state_of(goal, false).ok_or("goal outside the grid")?;
    let mut theta = vec![0.0; mdp.n_states()];
    theta[g] = 1.0;
    let truth = mdp.linear_reward(&theta);
    let cfg = MaxEntConfig::default();
    let h = cfg.horizon_for(&mdp);
    let (_, pi) = soft_value_iteration(&mdp, &truth, h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let demos = Demonstrations::new(
        (0..n_demos)
            .map(|_| {
                let s = rng.random_range(0..mdp.n_states());
                sample_trajectory(&mdp, &pi, s, h, &mut rng)
            })
            .collect(),
    );
    let (learned, diag) = maxent_irl(&mdp, &demos, &cfg).map_err(|e| e.to_string())?;
    let reward = learned.rewards(&mdp);
    let start = demos.start_distribution(mdp.n_states());
    Ok(json!({
        "width": width,
        "height": height,
        "cells": mdp.cells,
        "truth": truth,
        "reward": reward,
        "agreement": action_agreement(&mdp, &truth, &reward, &demos.visited_states()),
        "evd": evd(&mdp, &truth, &reward, &start),
        "iterations": diag.grad_norms.len(),
    }))
}

#[wasm_bindgen(js_name = recoverReward)]
pub fn recover_reward(width: usize, height: usize, goal_x: usize, goal_y: usize, n_demos: usize, seed: u32) -> Result<String, JsValue> {
    recover(width, height, (goal_x, goal_y), n_demos, seed as u64).map(|v| v.to_string()).map_err(js)
}
