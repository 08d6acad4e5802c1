//! Payloads the server speaks on the bridge besides the bridge's own
//! control messages.

use serde::{Deserialize, Serialize};
use vrgl_core::scene::Verb;

/// Requests to start and stop recording.
pub const SESSION_CONTROL: &str = "/session/control";
pub const SESSION_CONTROL_TYPE: &str = "SessionControl";
pub const SESSION_STATUS_TYPE: &str = "SessionStatus";
pub const LOG_RECORD_TYPE: &str = "LogRecord";

pub const CMD_TYPE: &str = "Cmd";
pub const ACTION_REQUEST_TYPE: &str = "ActionRequest";
pub const ACTION_EVENT_TYPE: &str = "ActionEvent";
pub const ODOM_TYPE: &str = "Odometry";
pub const SNAPSHOT_TYPE: &str = "SceneSnapshot";
pub const SIM_EVENT_TYPE: &str = "SimEvent";
pub const POSTERIOR_TYPE: &str = "GoalPosterior";

pub fn session_log(id: &str) -> String {
    format!("/session/{id}/log")
}

pub fn session_status(id: &str) -> String {
    format!("/session/{id}/status")
}

pub fn posterior(agent: &str) -> String {
    format!("/intent/{agent}/posterior")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum SessionRequest {
    Start { session: String, subject: String },
    Stop { session: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase", deny_unknown_fields)]
pub enum SessionStatus {
    /// The world was reset to the scene document at `tick`.
    Recording { scene_hash: String, tick: u64 },
    /// Sent after the last log record.
    Stopped { records: u64 },
    Error { message: String },
}

/// `/agent/<id>/cmd` payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmdPayload {
    pub v: f64,
    pub omega: f64,
}

/// `/agent/<id>/action` request payload. Without a target the nearest
/// eligible entity in reach is used (the held object for `release`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionPayload {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// `/agent/<id>/odom` payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdomPayload {
    pub tick: u64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}
