//! Session logging: append-only JSON Lines event streams, footprint export,
//! grasp heat maps and deterministic replay.

mod heatmap;
mod recorder;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Outcome, Pose, SceneError, Verb};

pub use heatmap::{heatmap_accumulate, heatmap_average, HeatMap, Patch, PATCH_FACES, PATCH_U, PATCH_V};
pub use recorder::{replay, Divergence, Recorder, ReplayReport, IDLE_ODOM_PERIOD};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("tick regression: record at tick {got} after tick {last}")]
    TickRegression { last: u64, got: u64 },
    #[error("patch {patch:?} outside the {dims:?} patch grid")]
    PatchOutOfRange { patch: Patch, dims: [usize; 3] },
    #[error("contact event references `{got}`, expected `{want}`")]
    WrongObject { want: String, got: String },
    #[error("heat maps disagree on object or dimensions")]
    DimensionMismatch,
    #[error("cannot average an empty list of heat maps")]
    EmptyList,
    #[error("scene hash mismatch: log has {logged}, document hashes to {actual}")]
    SceneHashMismatch { logged: String, actual: String },
    #[error("malformed log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One JSONL line: `{"t":tick,"kind":...,"agent":...,...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEvent {
    /// First line of every log file.
    Session { session: String, subject: String, scene_hash: String },
    Odom { agent: String, x: f64, y: f64, yaw: f64 },
    /// Velocity command applied during the step leaving tick `t`.
    Cmd { agent: String, v: f64, omega: f64 },
    Action {
        agent: String,
        verb: Verb,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<String>,
        outcome: Outcome,
    },
    Contact { agent: String, object: String, face: usize, u: usize, v: usize },
    Collision { agent: String, other: String },
}

impl LogEvent {
    pub fn agent(&self) -> Option<&str> {
        match self {
            LogEvent::Session { .. } => None,
            LogEvent::Odom { agent, .. }
            | LogEvent::Cmd { agent, .. }
            | LogEvent::Action { agent, .. }
            | LogEvent::Contact { agent, .. }
            | LogEvent::Collision { agent, .. } => Some(agent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdometrySample {
    pub tick: u64,
    pub agent_id: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspContactEvent {
    pub tick: u64,
    pub agent_id: String,
    pub object_id: String,
    pub patch: Patch,
}

/// In-memory session with optional line sink. Every record is written and
/// flushed as it is appended.
pub struct SessionLog {
    pub session_id: String,
    pub subject_id: String,
    pub scene_hash: String,
    records: Vec<LogRecord>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for SessionLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionLog")
            .field("session_id", &self.session_id)
            .field("subject_id", &self.subject_id)
            .field("scene_hash", &self.scene_hash)
            .field("records", &self.records.len())
            .finish()
    }
}

impl SessionLog {
    pub fn new(session_id: impl Into<String>, subject_id: impl Into<String>, scene_hash: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            subject_id: subject_id.into(),
            scene_hash: scene_hash.into(),
            records: Vec::new(),
            sink: None,
        }
    }

    /// Attach a sink; the header line is written immediately.
    pub fn with_sink(mut self, mut sink: Box<dyn Write + Send>) -> Result<Self, LogError> {
        write_line(&mut sink, &self.header())?;
        for r in &self.records {
            write_line(&mut sink, r)?;
        }
        self.sink = Some(sink);
        Ok(self)
    }

    pub fn header(&self) -> LogRecord {
        LogRecord {
            t: 0,
            event: LogEvent::Session {
                session: self.session_id.clone(),
                subject: self.subject_id.clone(),
                scene_hash: self.scene_hash.clone(),
            },
        }
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_tick(&self) -> Option<u64> {
        self.records.last().map(|r| r.t)
    }

    /// Append one record; ticks may not go backwards.
    pub fn record(&mut self, record: LogRecord) -> Result<(), LogError> {
        if let Some(last) = self.last_tick() {
            if record.t < last {
                return Err(LogError::TickRegression { last, got: record.t });
            }
        }
        if let Some(sink) = self.sink.as_mut() {
            write_line(sink, &record)?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn odometry(&self, agent_id: &str) -> impl Iterator<Item = OdometrySample> + '_ {
        let agent_id = agent_id.to_owned();
        self.records.iter().filter_map(move |r| match &r.event {
            LogEvent::Odom { agent, x, y, yaw } if *agent == agent_id => Some(OdometrySample {
                tick: r.t,
                agent_id: agent.clone(),
                pose: Pose { x: *x, y: *y, yaw: *yaw },
            }),
            _ => None,
        })
    }

    pub fn contacts(&self) -> impl Iterator<Item = GraspContactEvent> + '_ {
        self.records.iter().filter_map(|r| match &r.event {
            LogEvent::Contact { agent, object, face, u, v } => Some(GraspContactEvent {
                tick: r.t,
                agent_id: agent.clone(),
                object_id: object.clone(),
                patch: Patch { face: *face, u: *u, v: *v },
            }),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        write_line(&mut out, &self.header()).expect("vec write");
        for r in &self.records {
            write_line(&mut out, r).expect("vec write");
        }
        String::from_utf8(out).expect("json is utf-8")
    }

    /// Parse a log written by [`SessionLog::to_jsonl`] or a live sink.
    pub fn from_jsonl(reader: impl BufRead) -> Result<SessionLog, LogError> {
        let mut log: Option<SessionLog> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::Parse { line: i + 1, message: e.to_string() })?;
            match (&mut log, rec.event) {
                (None, LogEvent::Session { session, subject, scene_hash }) => {
                    log = Some(SessionLog::new(session, subject, scene_hash));
                }
                (None, _) => return Err(LogError::Parse { line: i + 1, message: "missing session header".into() }),
                (Some(_), LogEvent::Session { .. }) => {
                    return Err(LogError::Parse { line: i + 1, message: "duplicate session header".into() })
                }
                (Some(l), event) => l.record(LogRecord { t: rec.t, event })?,
            }
        }
        log.ok_or(LogError::Parse { line: 0, message: "empty log".into() })
    }
}

fn write_line(w: &mut impl Write, r: &LogRecord) -> Result<(), LogError> {
    serde_json::to_writer(&mut *w, r).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// CSV `tick,x,y,yaw` of one agent's odometry, in tick order.
pub fn footprint_export(session: &SessionLog, agent_id: &str) -> String {
    let mut out = String::from("tick,x,y,yaw\n");
    for s in session.odometry(agent_id) {
        out.push_str(&format!("{},{},{},{}\n", s.tick, s.pose.x, s.pose.y, s.pose.yaw));
    }
    out
}
