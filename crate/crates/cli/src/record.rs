use std::fs::OpenOptions;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context};
use log::{info, warn};
use vrgl_bridge::BridgeClient;
use vrgl_core::datalog::{LogRecord, SessionLog};

use crate::protocol::*;
use crate::{CliResult, RecordArgs};

const POLL: Duration = Duration::from_millis(50);
const STATUS_TIMEOUT: Duration = Duration::from_secs(10);

pub fn run(args: &RecordArgs, out: &Path) -> CliResult {
    let path = out.join(format!("{}.jsonl", args.session));
    if path.exists() {
        return Err(anyhow!("{} already exists", path.display()).into());
    }
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)).context("install Ctrl-C handler")?;
    }
    record(args, out, &path, &stop)?;
    Ok(())
}

fn record(args: &RecordArgs, out: &Path, path: &Path, stop: &AtomicBool) -> anyhow::Result<()> {
    let mut client = BridgeClient::connect(args.connect).with_context(|| format!("connect {}", args.connect))?;
    client.subscribe(&session_status(&args.session))?;
    client.subscribe(&session_log(&args.session))?;
    client.ping(STATUS_TIMEOUT).context("subscribe")?;
    let start = SessionRequest::Start { session: args.session.clone(), subject: args.subject.clone() };
    client.publish(SESSION_CONTROL, SESSION_CONTROL_TYPE, serde_json::to_value(&start).expect("request serializes"))?;

    let waited = Instant::now();
    let hash = loop {
        if waited.elapsed() > STATUS_TIMEOUT {
            bail!("server did not answer the start request");
        }
        let Some(env) = client.recv_timeout(POLL)? else { continue };
        if env.topic != session_status(&args.session) {
            continue;
        }
        match serde_json::from_value::<SessionStatus>(env.data).context("session status")? {
            SessionStatus::Recording { scene_hash, .. } => break scene_hash,
            SessionStatus::Error { message } => bail!("server refused session: {message}"),
            SessionStatus::Stopped { .. } => bail!("session stopped before it started"),
        }
    };

    std::fs::create_dir_all(out)?;
    let file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .with_context(|| format!("create {}", path.display()))?;
    let mut log = SessionLog::new(&args.session, &args.subject, hash).with_sink(Box::new(file))?;
    info!("recording into {}", path.display());

    let deadline = args.duration.map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0)));
    let mut stop_sent: Option<Instant> = None;
    loop {
        let asked = stop.load(Ordering::SeqCst) || deadline.is_some_and(|d| Instant::now() >= d);
        if asked && stop_sent.is_none() {
            let req = SessionRequest::Stop { session: args.session.clone() };
            client.publish(SESSION_CONTROL, SESSION_CONTROL_TYPE, serde_json::to_value(&req).expect("request serializes"))?;
            stop_sent = Some(Instant::now());
        }
        if stop_sent.is_some_and(|t| t.elapsed() > STATUS_TIMEOUT) {
            bail!("server did not confirm the stop; {} holds {} records", path.display(), log.len());
        }
        let Some(env) = client.recv_timeout(POLL)? else { continue };
        if env.topic == session_log(&args.session) {
            let record: LogRecord = serde_json::from_value(env.data).context("log record")?;
            log.record(record)?;
        } else if env.topic == session_status(&args.session) {
            match serde_json::from_value::<SessionStatus>(env.data).context("session status")? {
                SessionStatus::Stopped { records } => {
                    if records != log.len() as u64 {
                        warn!("server logged {records} records, received {}", log.len());
                    }
                    break;
                }
                SessionStatus::Error { message } => warn!("server: {message}"),
                SessionStatus::Recording { .. } => {}
            }
        }
    }
    client.shutdown();
    println!("session={} records={} file={}", args.session, log.len(), path.display());
    Ok(())
}
