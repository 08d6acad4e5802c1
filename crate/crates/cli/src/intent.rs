use std::path::Path;

use vrgl_core::datalog::{LogEvent, SessionLog};
use vrgl_core::intent::{goals_from_scene, predict_session, IntentError, IntentParams, TaskGrammar};
use vrgl_core::scene::load_scene;

use crate::{read_input, read_json, usage, write_output, CliError, CliResult, PredictArgs};

pub(crate) fn load_session(path: &Path) -> CliResult<SessionLog> {
    let text = read_input(path)?;
    SessionLog::from_jsonl(text.as_bytes()).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn intent_error(e: IntentError) -> CliError {
    match e {
        IntentError::NoConsistentParse => CliError::Runtime(e.into()),
        other => usage(other.to_string()),
    }
}

pub fn run(args: &PredictArgs, out: &Path) -> CliResult {
    let session = load_session(&args.session)?;
    let scene = load_scene(&read_input(&args.scene)?).map_err(|e| usage(format!("{}: {e}", args.scene.display())))?;
    let agent = match &args.agent {
        Some(a) => a.clone(),
        None => session
            .records()
            .iter()
            .find_map(|r| match &r.event {
                LogEvent::Odom { agent, .. } => Some(agent.clone()),
                _ => None,
            })
            .ok_or_else(|| usage("session has no odometry"))?,
    };
    let grammar = match &args.grammar {
        Some(p) => {
            let g: TaskGrammar = read_json(p)?;
            g.validate().map_err(|e| usage(format!("{}: {e}", p.display())))?;
            g
        }
        None => TaskGrammar::coffee(),
    };
    let ids = if args.goals.is_empty() { grammar.subgoals.clone() } else { args.goals.clone() };
    let goals = goals_from_scene(&scene, &ids).map_err(intent_error)?;
    let mut params = IntentParams { seed: args.seed, ..IntentParams::default() };
    if let Some(b) = args.beta {
        params.beta = b;
    }
    if let Some(l) = args.lambda {
        params.lambda = l;
    }
    let lines =
        predict_session(&session, &scene, &agent, args.algo.predictor(), &grammar, &goals, &params, args.resolution)
            .map_err(intent_error)?;
    let mut body = String::new();
    for l in &lines {
        body.push_str(&serde_json::to_string(l).expect("posterior serializes"));
        body.push('\n');
    }
    let path = write_output(out, &format!("posterior_{}.jsonl", args.algo.name()), &body)?;
    println!("agent={agent} lines={} file={}", lines.len(), path.display());
    Ok(())
}
