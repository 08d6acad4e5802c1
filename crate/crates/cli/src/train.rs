use std::io::BufReader;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use vrgl_core::envs::{ActionSet, DiscreteEnv, GraspConfig, GridMDP, MazeTabular, MdpEpisodes};
use vrgl_core::irl::{bayesian_irl_policywalk, maxent_irl, BirlConfig, Demonstrations, MaxEntConfig};
use vrgl_core::rl::{
    actor_critic_train, ddpg_train, dqn_train, dueling_dqn_train, q_learning_train, RlError, TrainConfig, TrainReport,
};

use crate::presets::{build_env, default_env_config, load_env, rl_preset, BuiltEnv};
use crate::{read_input, read_json, to_json_pretty, usage, write_output, CliError, CliResult, IrlAlgo, RlAlgo, TrainIrlArgs, TrainRlArgs};

/// Overlay the keys of a user config object onto `base`.
fn merge_config<T: Serialize + serde::de::DeserializeOwned>(base: &T, path: &Path) -> CliResult<T> {
    let mut merged = serde_json::to_value(base).expect("config serializes");
    let user: Value = read_json(path)?;
    let Value::Object(user) = user else {
        return Err(usage(format!("{}: expected a JSON object", path.display())));
    };
    let merged_obj = merged.as_object_mut().expect("config is an object");
    if let Some(k) = user.keys().find(|k| !merged_obj.contains_key(*k)) {
        return Err(usage(format!("{}: unknown field `{k}`", path.display())));
    }
    merged_obj.extend(user);
    serde_json::from_value(merged).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn rl_error(e: RlError) -> CliError {
    match e {
        RlError::InvalidConfig(_) | RlError::DimensionMismatch { .. } => usage(e.to_string()),
        other => CliError::Runtime(other.into()),
    }
}

pub fn run_rl(args: &TrainRlArgs, out: &Path) -> CliResult {
    let mut cfg = rl_preset(args.algo);
    if let Some(p) = &args.config {
        cfg = merge_config(&cfg, p)?;
    }
    cfg.seed = args.seed;
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    cfg.validate().map_err(rl_error)?;
    let (env_cfg, env) = match &args.env {
        Some(p) => load_env(p)?,
        None => {
            let c = default_env_config(args.algo);
            let env = build_env(&c, Path::new("."))?;
            (c, env)
        }
    };
    let continuous = env_cfg.actions == ActionSet::Continuous;
    if continuous != (args.algo == RlAlgo::Ddpg) {
        return Err(usage(if continuous {
            "continuous actions need --algo ddpg"
        } else {
            "ddpg needs an environment with continuous actions"
        }));
    }

    let grasp_limit = env_cfg.step_limit.unwrap_or(GraspConfig::default().step_limit);
    let (checkpoint, report) = train(args.algo, env, &cfg, grasp_limit)?;
    let name = args.algo.name();
    write_output(out, &format!("train_{name}.csv"), &report.to_csv())?;
    write_output(out, &format!("checkpoint_{name}.json"), &(checkpoint + "\n"))?;
    println!(
        "algo={name} episodes={} success_last{}={:.3} reached={}",
        report.len(),
        cfg.window,
        report.success_rate_last(cfg.window),
        report.reached(&cfg)
    );
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("model serializes")
}

fn train(algo: RlAlgo, env: BuiltEnv, cfg: &TrainConfig, grasp_limit: usize) -> CliResult<(String, TrainReport)> {
    let r = match (algo, env) {
        (RlAlgo::Q, BuiltEnv::Maze(m)) => {
            let mut t = MazeTabular::new(m).map_err(|e| usage(e.to_string()))?;
            q_learning_train(&mut t, cfg).map(|(q, r)| (json(&q), r))
        }
        (RlAlgo::Q, BuiltEnv::Grasp(mut g)) => {
            // the grasp MDP from the spawn of the seeded reset
            DiscreteEnv::reset(&mut g, cfg.seed);
            let mdp = g.as_grid_mdp(cfg.gamma).map_err(|e| usage(e.to_string()))?;
            let start = mdp.state_of(g.agent(), false).expect("spawn is a free cell");
            let mut t = MdpEpisodes::new(&mdp, start, grasp_limit);
            q_learning_train(&mut t, cfg).map(|(q, r)| (json(&q), r))
        }
        (RlAlgo::Dqn, BuiltEnv::Maze(mut m)) => dqn_train(&mut m, cfg).map(|(n, r)| (json(&n), r)),
        (RlAlgo::Dqn, BuiltEnv::Grasp(mut g)) => dqn_train(&mut g, cfg).map(|(n, r)| (json(&n), r)),
        (RlAlgo::Dueling, BuiltEnv::Maze(mut m)) => dueling_dqn_train(&mut m, cfg).map(|(n, r)| (json(&n), r)),
        (RlAlgo::Dueling, BuiltEnv::Grasp(mut g)) => dueling_dqn_train(&mut g, cfg).map(|(n, r)| (json(&n), r)),
        (RlAlgo::Ac, BuiltEnv::Maze(mut m)) => actor_critic_train(&mut m, cfg).map(|(n, r)| (json(&n), r)),
        (RlAlgo::Ac, BuiltEnv::Grasp(mut g)) => actor_critic_train(&mut g, cfg).map(|(n, r)| (json(&n), r)),
        (RlAlgo::Ddpg, BuiltEnv::Maze(mut m)) => ddpg_train(&mut m, cfg).map(|(n, r)| (json(&n), r)),
        (RlAlgo::Ddpg, BuiltEnv::Grasp(_)) => return Err(usage("the grasp task has no continuous actions")),
    };
    r.map_err(rl_error)
}

#[derive(Serialize)]
struct BirlDiagnostics {
    acceptance_rate: f64,
    burn_in: usize,
    kept_samples: usize,
    /// Log-likelihood of each kept sample, in chain order.
    log_likelihood: Vec<f64>,
}

pub fn run_irl(args: &TrainIrlArgs, out: &Path) -> CliResult {
    let mdp: GridMDP = read_json(&args.mdp)?;
    mdp.validate().map_err(|e| usage(format!("{}: {e}", args.mdp.display())))?;
    read_input(&args.demos)?;
    let file = std::fs::File::open(&args.demos).with_context(|| format!("open {}", args.demos.display()))?;
    let demos = Demonstrations::from_jsonl(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", args.demos.display())))?;
    demos.validate(&mdp).map_err(|e| usage(format!("{}: {e}", args.demos.display())))?;

    let irl_err = |e: vrgl_core::irl::IrlError| CliError::Runtime(e.into());
    let (name, reward, diagnostics) = match args.algo {
        IrlAlgo::Maxent => {
            let cfg = match &args.config {
                Some(p) => merge_config(&MaxEntConfig::default(), p)?,
                None => MaxEntConfig::default(),
            };
            let (reward, diag) = maxent_irl(&mdp, &demos, &cfg).map_err(irl_err)?;
            println!("algo=maxent iterations={} converged={}", diag.grad_norms.len().saturating_sub(1), diag.converged);
            ("maxent", reward, to_json_pretty(&diag))
        }
        IrlAlgo::Bayesian => {
            let mut cfg = match &args.config {
                Some(p) => merge_config(&BirlConfig::default(), p)?,
                None => BirlConfig::default(),
            };
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            let (samples, reward) = bayesian_irl_policywalk(&mdp, &demos, &cfg).map_err(irl_err)?;
            let diag = BirlDiagnostics {
                acceptance_rate: samples.acceptance_rate,
                burn_in: samples.burn_in,
                kept_samples: samples.samples.len(),
                log_likelihood: samples.samples.iter().map(|(_, l)| *l).collect(),
            };
            println!("algo=bayesian kept={} acceptance={:.3}", diag.kept_samples, diag.acceptance_rate);
            ("bayesian", reward, to_json_pretty(&diag))
        }
    };
    write_output(out, &format!("reward_{name}.json"), &to_json_pretty(&reward.export(&mdp)))?;
    write_output(out, &format!("diagnostics_{name}.json"), &diagnostics)?;
    Ok(())
}
