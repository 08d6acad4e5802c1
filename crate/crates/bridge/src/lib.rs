//! Topic bridge between the simulator, agent controllers and the browser UI:
//! length-prefixed JSON envelopes over TCP, mirrored over WebSocket.

mod bench;
mod broker;
mod client;
pub mod codec;
mod social;
mod stats;
mod ws;

pub use bench::{benchmark_throughput, random_payload, BENCH_TYPE};
pub use broker::{Broker, BrokerStats, SLOW_SUBSCRIBER_LIMIT};
pub use client::{BridgeClient, BridgeError};
pub use codec::{
    decode_body, decode_frame, encode_body, encode_frame, parse_header, ControlMessage, ControlOp, CodecError,
    Envelope, FrameDecoder, MAX_FRAME_BYTES,
};
pub use social::{run_peer, run_peer_with, signal_sender, PeerConfig, PeerHandle, PeerStatus, RESPONSE_TYPE, SIGNAL_TYPE};
pub use stats::{SeqTracker, StreamStats};
pub use ws::{resolve_static, WS_PATH};

pub const DEFAULT_TCP_PORT: u16 = 9763;
pub const DEFAULT_WS_PORT: u16 = 9764;

pub mod topics {
    pub const SNAPSHOT: &str = "/scene/snapshot";
    pub const EVENTS: &str = "/scene/events";
    pub const BENCH: &str = "/bench";
    pub const ANY_SIGNAL: &str = "/agent/*/signal";

    pub fn agent_cmd(id: &str) -> String {
        format!("/agent/{id}/cmd")
    }

    pub fn agent_odom(id: &str) -> String {
        format!("/agent/{id}/odom")
    }

    pub fn agent_action(id: &str) -> String {
        format!("/agent/{id}/action")
    }

    pub fn agent_signal(id: &str) -> String {
        format!("/agent/{id}/signal")
    }
}
