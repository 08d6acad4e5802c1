//! Training presets and environment construction from config files.

use std::path::Path;

use vrgl_core::envs::{
    corridor_env, default_maze_env, ActionSet, EnvConfig, GraspConfig, GraspEnv, MazeConfig, MazeEnv, ObsMode, Task,
};
use vrgl_core::rl::{EpsilonSchedule, TrainConfig};
use vrgl_core::scene::load_scene;

use crate::{read_input, usage, CliResult, RlAlgo};

/// Tuned settings per algorithm. Each stops early once the success rate
/// over the last 100 episodes reaches its target.
pub fn rl_preset(algo: RlAlgo) -> TrainConfig {
    let deep = TrainConfig {
        episodes: 20_000,
        target_success: Some(0.9),
        window: 100,
        hidden: vec![64, 64],
        ..TrainConfig::default()
    };
    match algo {
        RlAlgo::Q => TrainConfig {
            episodes: 10_000,
            epsilon: EpsilonSchedule { start: 1.0, end: 0.01, decay_episodes: Some(300) },
            target_success: Some(0.95),
            window: 100,
            ..TrainConfig::tabular()
        },
        RlAlgo::Dqn | RlAlgo::Dueling => TrainConfig {
            epsilon: EpsilonSchedule { start: 1.0, end: 0.02, decay_episodes: Some(300) },
            target_sync: 200,
            warmup: 500,
            ..deep
        },
        RlAlgo::Ac => TrainConfig { batch_size: 16, entropy_weight: 0.1, ..deep },
        RlAlgo::Ddpg => TrainConfig {
            episodes: 2000,
            target_success: Some(0.8),
            hidden: vec![32, 32],
            batch_size: 32,
            warmup: 1000,
            noise_sigma: 0.5,
            ..deep
        },
    }
}

/// Environment used when `train-rl` gets no `--env`.
pub fn default_env_config(algo: RlAlgo) -> EnvConfig {
    let (actions, step_limit) = match algo {
        RlAlgo::Q | RlAlgo::Ac => (ActionSet::Discrete4, None),
        RlAlgo::Dqn | RlAlgo::Dueling => (ActionSet::Discrete4, Some(200)),
        RlAlgo::Ddpg => (ActionSet::Continuous, Some(100)),
    };
    EnvConfig { task: Task::Maze, scene: None, zones: None, obs: ObsMode::Features, actions, step_limit }
}

pub enum BuiltEnv {
    Maze(MazeEnv),
    Grasp(GraspEnv),
}

/// Build an environment. A maze without a scene is the built-in maze, or
/// the built-in corridor when actions are continuous. Scene paths are
/// relative to `base_dir`.
pub fn build_env(cfg: &EnvConfig, base_dir: &Path) -> CliResult<BuiltEnv> {
    match cfg.task {
        Task::Maze => {
            let mut mc = MazeConfig { obs: cfg.obs, actions: cfg.actions, ..MazeConfig::default() };
            if let Some(n) = cfg.step_limit {
                mc.step_limit = n;
            }
            let env = match &cfg.scene {
                None if cfg.zones.is_some() => return Err(usage("zones need a scene document")),
                None if cfg.actions == ActionSet::Continuous => corridor_env(mc),
                None => default_maze_env(mc),
                Some(p) => {
                    let doc = read_input(&base_dir.join(p))?;
                    let scene = load_scene(&doc).map_err(|e| usage(format!("scene {p}: {e}")))?;
                    MazeEnv::new(scene, cfg.zones.clone(), mc).map_err(|e| usage(format!("scene {p}: {e}")))?
                }
            };
            Ok(BuiltEnv::Maze(env))
        }
        Task::Grasp => {
            if cfg.actions == ActionSet::Continuous || cfg.scene.is_some() || cfg.zones.is_some() {
                return Err(usage("the grasp task takes only step_limit"));
            }
            let mut gc = GraspConfig::default();
            if let Some(n) = cfg.step_limit {
                gc.step_limit = n;
            }
            Ok(BuiltEnv::Grasp(GraspEnv::new(gc).map_err(|e| usage(e.to_string()))?))
        }
    }
}

/// Read an environment config file and build it.
pub fn load_env(path: &Path) -> CliResult<(EnvConfig, BuiltEnv)> {
    let cfg: EnvConfig = crate::read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let env = build_env(&cfg, base)?;
    Ok((cfg, env))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for a in [RlAlgo::Q, RlAlgo::Dqn, RlAlgo::Dueling, RlAlgo::Ac, RlAlgo::Ddpg] {
            rl_preset(a).validate().unwrap();
            build_env(&default_env_config(a), Path::new(".")).ok().unwrap();
        }
    }

    #[test]
    fn grasp_rejects_continuous() {
        let cfg = EnvConfig { task: Task::Grasp, actions: ActionSet::Continuous, ..default_env_config(RlAlgo::Q) };
        assert!(matches!(build_env(&cfg, Path::new(".")), Err(crate::CliError::Usage(_))));
    }
}
