use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;
use vrgl_core::datalog::{footprint_export, heatmap_accumulate, heatmap_average, HeatMap, LogEvent, SessionLog, PATCH_FACES, PATCH_U, PATCH_V};
use vrgl_core::envs::{FeatureSet, GridMDP};
use vrgl_core::irl::{demos_from_footprint, Demonstrations};
use vrgl_core::scene::{Outcome, Verb, DEFAULT_CELL_SIZE};

use crate::intent::load_session;
use crate::presets::{load_env, BuiltEnv};
use crate::{read_input, to_json_pretty, usage, write_output, CliResult, ExportArgs, ExportWhat, Features};

pub fn run(args: &ExportArgs, out: &Path) -> CliResult {
    match args.what {
        ExportWhat::Footprints => footprints(args, out),
        ExportWhat::Heatmap => heatmap(args, out),
        ExportWhat::Curves => curves(args, out),
        ExportWhat::Mdp => {
            let mdp = env_mdp(args)?;
            write_output(out, "mdp.json", &to_json_pretty(&mdp))?;
            println!("states={} actions={}", mdp.n_states(), mdp.n_actions());
            Ok(())
        }
        ExportWhat::Demos => demos(args, out),
    }
}

fn sessions(args: &ExportArgs) -> CliResult<Vec<SessionLog>> {
    if args.sessions.is_empty() {
        return Err(usage("--session is required"));
    }
    args.sessions.iter().map(|p| load_session(p)).collect()
}

fn one_session(args: &ExportArgs) -> CliResult<SessionLog> {
    let mut s = sessions(args)?;
    if s.len() != 1 {
        return Err(usage("exactly one --session expected"));
    }
    Ok(s.remove(0))
}

fn agent_of(args: &ExportArgs) -> CliResult<&str> {
    args.agent.as_deref().ok_or_else(|| usage("--agent is required"))
}

fn footprints(args: &ExportArgs, out: &Path) -> CliResult {
    let session = one_session(args)?;
    let agent = agent_of(args)?;
    let csv = footprint_export(&session, agent);
    let path = write_output(out, &format!("footprints_{agent}.csv"), &csv)?;
    println!("rows={} file={}", csv.lines().count() - 1, path.display());
    Ok(())
}

#[derive(Serialize)]
struct SessionMap {
    session: String,
    subject: String,
    map: HeatMap,
}

#[derive(Serialize)]
struct HeatmapExport {
    object: String,
    sessions: Vec<SessionMap>,
    average: HeatMap,
}

fn heatmap(args: &ExportArgs, out: &Path) -> CliResult {
    let object = args.object.as_deref().ok_or_else(|| usage("--object is required"))?;
    let dims = [PATCH_FACES, PATCH_U, PATCH_V];
    let mut maps = Vec::new();
    for s in sessions(args)? {
        let events: Vec<_> = s.contacts().filter(|c| c.object_id == object).collect();
        let map = heatmap_accumulate(&events, object, dims).map_err(|e| anyhow!(e))?;
        maps.push(SessionMap { session: s.session_id.clone(), subject: s.subject_id.clone(), map });
    }
    let average = heatmap_average(&maps.iter().map(|m| m.map.clone()).collect::<Vec<_>>()).map_err(|e| anyhow!(e))?;
    let export = HeatmapExport { object: object.to_owned(), sessions: maps, average };
    let path = write_output(out, &format!("heatmap_{object}.json"), &to_json_pretty(&export))?;
    println!("sessions={} contacts={} file={}", export.sessions.len(), export.average.total(), path.display());
    Ok(())
}

/// `train_dqn.csv` → `dqn`.
fn algo_of(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("train_").map(str::to_owned).unwrap_or(stem)
}

fn curves(args: &ExportArgs, out: &Path) -> CliResult {
    if args.reports.is_empty() {
        return Err(usage("--report is required"));
    }
    let mut header: Option<String> = None;
    let mut body = String::new();
    for p in &args.reports {
        let text = read_input(p)?;
        let mut lines = text.lines();
        let h = lines.next().ok_or_else(|| usage(format!("{}: empty report", p.display())))?;
        match &header {
            None => header = Some(h.to_owned()),
            Some(prev) if prev != h => return Err(usage(format!("{}: header differs from the first report", p.display()))),
            Some(_) => {}
        }
        let algo = algo_of(p);
        for l in lines.filter(|l| !l.is_empty()) {
            body.push_str(&format!("{algo},{l}\n"));
        }
    }
    let csv = format!("algo,{}\n{body}", header.expect("at least one report"));
    let path = write_output(out, "curves.csv", &csv)?;
    println!("rows={} file={}", csv.lines().count() - 1, path.display());
    Ok(())
}

fn env_mdp(args: &ExportArgs) -> CliResult<GridMDP> {
    let env = args.env.as_deref().ok_or_else(|| usage("--env is required"))?;
    let features = match args.features {
        Features::Onehot => FeatureSet::OneHot,
        Features::Handcrafted => FeatureSet::Handcrafted,
    };
    let (_, built) = load_env(env)?;
    let mdp = match built {
        BuiltEnv::Maze(m) => m.as_grid_mdp(args.resolution.unwrap_or(DEFAULT_CELL_SIZE), features, args.gamma),
        BuiltEnv::Grasp(g) => g.as_grid_mdp(args.gamma),
    };
    mdp.map_err(|e| usage(e.to_string()))
}

fn demos(args: &ExportArgs, out: &Path) -> CliResult {
    let env = args.env.as_deref().ok_or_else(|| usage("--env is required"))?;
    let (_, built) = load_env(env)?;
    let BuiltEnv::Maze(maze) = built else {
        return Err(usage("demonstrations are mapped onto maze environments only"));
    };
    let agent = agent_of(args)?;
    let mdp = env_mdp(args)?;
    let grid = maze.grid(args.resolution.unwrap_or(DEFAULT_CELL_SIZE));
    let mut all = Demonstrations::default();
    for s in sessions(args)? {
        let footprint: Vec<[f64; 2]> = s.odometry(agent).map(|o| [o.pose.x, o.pose.y]).collect();
        let grasped = s.records().iter().any(|r| {
            matches!(&r.event, LogEvent::Action { agent: a, verb: Verb::Grasp, outcome: Outcome::Ok, .. } if a == agent)
        });
        all.trajs.extend(demos_from_footprint(&mdp, &grid, &footprint, grasped).trajs);
    }
    write_output(out, "mdp.json", &to_json_pretty(&mdp))?;
    let path = write_output(out, "demos.jsonl", &all.to_jsonl())?;
    println!("trajectories={} file={}", all.trajs.len(), path.display());
    Ok(())
}
