use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;
use vrgl_core::datalog::{replay, Divergence, LogError};

use crate::intent::load_session;
use crate::{read_input, to_json_pretty, usage, write_output, CliResult, ReplayArgs};

#[derive(Serialize)]
struct ReplaySummary<'a> {
    session: &'a str,
    clean: bool,
    records: usize,
    final_tick: u64,
    divergences: &'a [Divergence],
}

pub fn run(args: &ReplayArgs, out: &Path) -> CliResult {
    let session = load_session(&args.session)?;
    let doc = read_input(&args.scene)?;
    let report = replay(&session, &doc).map_err(|e| match e {
        LogError::SceneHashMismatch { .. } | LogError::Scene(_) => usage(format!("{}: {e}", args.scene.display())),
        other => anyhow!(other).into(),
    })?;
    let summary = ReplaySummary {
        session: &session.session_id,
        clean: report.is_clean(),
        records: session.len(),
        final_tick: report.final_scene.tick,
        divergences: &report.divergences,
    };
    write_output(out, "replay.json", &to_json_pretty(&summary))?;
    println!("clean={} divergences={} final_tick={}", summary.clean, report.divergences.len(), summary.final_tick);
    if !report.is_clean() {
        let d = &report.divergences[0];
        return Err(anyhow!("replay diverged at tick {} for agent {}", d.tick, d.agent).into());
    }
    Ok(())
}
