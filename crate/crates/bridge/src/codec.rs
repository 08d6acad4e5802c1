use std::borrow::Cow;
use std::io::{self, Read};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;
use thiserror::Error;

/// Upper bound on a whole frame, length prefix included.
pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;
pub const MAX_BODY_BYTES: usize = MAX_FRAME_BYTES - 4;
pub const CONTROL_TYPE: &str = "Control";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("frame incomplete, {needed} more bytes needed")]
    Incomplete { needed: usize },
    #[error("frame body of {0} bytes exceeds the {MAX_BODY_BYTES} byte cap")]
    Oversize(usize),
    #[error("frame is not valid UTF-8")]
    Utf8,
    #[error("malformed envelope: {0}")]
    Json(String),
    #[error("crc mismatch: header {expected:#010x}, data {actual:#010x}")]
    CrcMismatch { expected: u32, actual: u32 },
    #[error("invalid envelope: {0}")]
    Invalid(String),
}

/// One bridge message. `crc32` is the IEEE CRC of the serialized `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub topic: String,
    pub seq: u64,
    pub stamp_ns: u64,
    #[serde(rename = "type")]
    pub msg_type: String,
    pub crc32: u32,
    pub data: Value,
}

pub fn now_ns() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0)
}

pub fn crc_of(data: &Value) -> u32 {
    crc32fast::hash(&serde_json::to_vec(data).expect("JSON values always serialize"))
}

impl Envelope {
    /// Envelope stamped now, with the checksum filled in.
    pub fn new(topic: impl Into<String>, seq: u64, msg_type: impl Into<String>, data: Value) -> Self {
        let crc32 = crc_of(&data);
        Self { topic: topic.into(), seq, stamp_ns: now_ns(), msg_type: msg_type.into(), crc32, data }
    }

    pub fn control(msg: &ControlMessage, seq: u64, stamp_ns: u64) -> Self {
        let data = serde_json::to_value(msg).expect("control messages serialize");
        let crc32 = crc_of(&data);
        Self { topic: String::new(), seq, stamp_ns, msg_type: CONTROL_TYPE.into(), crc32, data }
    }

    pub fn is_control(&self) -> bool {
        self.topic.is_empty()
    }

    pub fn as_control(&self) -> Result<ControlMessage, CodecError> {
        if !self.is_control() {
            return Err(CodecError::Invalid("not a control envelope".into()));
        }
        let msg: ControlMessage = serde_json::from_value(self.data.clone()).map_err(|e| CodecError::Json(e.to_string()))?;
        msg.validate()?;
        Ok(msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ControlOp {
    Advertise,
    Unadvertise,
    Subscribe,
    Unsubscribe,
    Ping,
    Pong,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlMessage {
    pub op: ControlOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub msg_type: Option<String>,
}

impl ControlMessage {
    pub fn new(op: ControlOp, topic: Option<&str>) -> Self {
        Self { op, topic: topic.map(str::to_owned), msg_type: None }
    }

    pub fn advertise(topic: &str, msg_type: &str) -> Self {
        Self { op: ControlOp::Advertise, topic: Some(topic.into()), msg_type: Some(msg_type.into()) }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: &str| Err(CodecError::Invalid(format!("{:?}: {m}", self.op)));
        match self.op {
            ControlOp::Ping | ControlOp::Pong if self.topic.is_some() || self.msg_type.is_some() => bad("takes no topic or type"),
            ControlOp::Ping | ControlOp::Pong => Ok(()),
            _ if self.topic.is_none() => bad("topic required"),
            ControlOp::Advertise if self.msg_type.is_none() => bad("type required"),
            ControlOp::Advertise => validate_topic(self.topic.as_deref().unwrap_or_default(), false),
            ControlOp::Unadvertise | ControlOp::Subscribe | ControlOp::Unsubscribe if self.msg_type.is_some() => {
                bad("type only allowed on ADVERTISE")
            }
            ControlOp::Unadvertise => validate_topic(self.topic.as_deref().unwrap_or_default(), false),
            ControlOp::Subscribe | ControlOp::Unsubscribe => validate_topic(self.topic.as_deref().unwrap_or_default(), true),
        }
    }
}

/// Topics are `/`-led with non-empty segments; `*` stands for one whole
/// segment and is allowed only in subscription patterns.
pub fn validate_topic(topic: &str, pattern: bool) -> Result<(), CodecError> {
    let Some(rest) = topic.strip_prefix('/') else {
        return Err(CodecError::Invalid(format!("topic `{topic}` must start with '/'")));
    };
    for seg in rest.split('/') {
        if seg.is_empty() {
            return Err(CodecError::Invalid(format!("topic `{topic}` has an empty segment")));
        }
        if seg.contains('*') && !(pattern && seg == "*") {
            return Err(CodecError::Invalid(format!("wildcard not allowed in `{topic}`")));
        }
    }
    Ok(())
}

pub fn topic_matches(pattern: &str, topic: &str) -> bool {
    let mut p = pattern.split('/');
    let mut t = topic.split('/');
    loop {
        match (p.next(), t.next()) {
            (None, None) => return true,
            (Some(a), Some(b)) if a == "*" || a == b => {}
            _ => return false,
        }
    }
}

/// Envelope fields borrowed from a frame body, checksum already verified.
#[derive(Debug)]
pub struct Header<'a> {
    pub topic: Cow<'a, str>,
    pub seq: u64,
    pub stamp_ns: u64,
    pub msg_type: Cow<'a, str>,
    pub crc32: u32,
    pub data: &'a RawValue,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEnvelope<'a> {
    #[serde(borrow)]
    topic: Cow<'a, str>,
    seq: u64,
    stamp_ns: u64,
    #[serde(rename = "type", borrow)]
    msg_type: Cow<'a, str>,
    crc32: u32,
    #[serde(borrow)]
    data: &'a RawValue,
}

/// Parse and check a frame body (the JSON text, without length prefix).
pub fn parse_header(body: &[u8]) -> Result<Header<'_>, CodecError> {
    if body.len() > MAX_BODY_BYTES {
        return Err(CodecError::Oversize(body.len()));
    }
    let text = std::str::from_utf8(body).map_err(|_| CodecError::Utf8)?;
    let w: WireEnvelope = serde_json::from_str(text).map_err(|e| CodecError::Json(e.to_string()))?;
    if w.topic.is_empty() {
        if w.msg_type != CONTROL_TYPE {
            return Err(CodecError::Invalid("empty topic is reserved for Control envelopes".into()));
        }
    } else {
        validate_topic(&w.topic, false)?;
    }
    let actual = crc32fast::hash(w.data.get().as_bytes());
    if actual != w.crc32 {
        return Err(CodecError::CrcMismatch { expected: w.crc32, actual });
    }
    Ok(Header { topic: w.topic, seq: w.seq, stamp_ns: w.stamp_ns, msg_type: w.msg_type, crc32: w.crc32, data: w.data })
}

pub fn decode_body(body: &[u8]) -> Result<Envelope, CodecError> {
    let h = parse_header(body)?;
    let data = serde_json::from_str(h.data.get()).map_err(|e| CodecError::Json(e.to_string()))?;
    Ok(Envelope {
        topic: h.topic.into_owned(),
        seq: h.seq,
        stamp_ns: h.stamp_ns,
        msg_type: h.msg_type.into_owned(),
        crc32: h.crc32,
        data,
    })
}

/// The JSON text of an envelope, keys in declaration order.
pub fn encode_body(e: &Envelope) -> Result<Vec<u8>, CodecError> {
    if e.topic.is_empty() {
        if e.msg_type != CONTROL_TYPE {
            return Err(CodecError::Invalid("empty topic is reserved for Control envelopes".into()));
        }
    } else {
        validate_topic(&e.topic, false)?;
    }
    let data = serde_json::to_vec(&e.data).map_err(|err| CodecError::Json(err.to_string()))?;
    let actual = crc32fast::hash(&data);
    if actual != e.crc32 {
        return Err(CodecError::CrcMismatch { expected: e.crc32, actual });
    }
    let mut out = Vec::with_capacity(data.len() + e.topic.len() + e.msg_type.len() + 96);
    out.extend_from_slice(b"{\"topic\":");
    serde_json::to_writer(&mut out, &e.topic).expect("string serializes");
    out.extend_from_slice(format!(",\"seq\":{},\"stamp_ns\":{},\"type\":", e.seq, e.stamp_ns).as_bytes());
    serde_json::to_writer(&mut out, &e.msg_type).expect("string serializes");
    out.extend_from_slice(format!(",\"crc32\":{},\"data\":", e.crc32).as_bytes());
    out.extend_from_slice(&data);
    out.push(b'}');
    if out.len() > MAX_BODY_BYTES {
        return Err(CodecError::Oversize(out.len()));
    }
    Ok(out)
}

pub fn frame_body(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

pub fn encode_frame(e: &Envelope) -> Result<Vec<u8>, CodecError> {
    Ok(frame_body(&encode_body(e)?))
}

/// Decode the frame at the start of `bytes`; returns the envelope and the
/// number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Envelope, usize), CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Incomplete { needed: 4 - bytes.len() });
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_BODY_BYTES {
        return Err(CodecError::Oversize(len));
    }
    if bytes.len() < 4 + len {
        return Err(CodecError::Incomplete { needed: 4 + len - bytes.len() });
    }
    Ok((decode_body(&bytes[4..4 + len])?, 4 + len))
}

/// Blocking read of one frame body. `Ok(None)` on clean EOF at a frame
/// boundary.
pub fn read_body(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_BODY_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, CodecError::Oversize(len)));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

/// Incremental decoder for a byte stream cut at arbitrary positions.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    start: usize,
    broken: Option<CodecError>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start * 2 >= self.buf.len() {
            self.buf.drain(..self.start);
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len() - self.start
    }

    /// Next complete frame body. An oversize length poisons the stream since
    /// the next boundary can no longer be found.
    pub fn next_body(&mut self) -> Option<Result<Vec<u8>, CodecError>> {
        if let Some(e) = &self.broken {
            return Some(Err(e.clone()));
        }
        let avail = &self.buf[self.start..];
        if avail.len() < 4 {
            return None;
        }
        let len = u32::from_be_bytes([avail[0], avail[1], avail[2], avail[3]]) as usize;
        if len > MAX_BODY_BYTES {
            self.broken = Some(CodecError::Oversize(len));
            return Some(Err(CodecError::Oversize(len)));
        }
        if avail.len() < 4 + len {
            return None;
        }
        let body = avail[4..4 + len].to_vec();
        self.start += 4 + len;
        Some(Ok(body))
    }

    /// Next envelope. A corrupt frame yields its error once and is skipped.
    pub fn next_frame(&mut self) -> Option<Result<Envelope, CodecError>> {
        Some(self.next_body()?.and_then(|b| decode_body(&b)))
    }
}
