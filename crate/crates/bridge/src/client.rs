use std::collections::{HashMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

use crate::codec::{
    decode_body, encode_frame, now_ns, CodecError, ControlMessage, ControlOp, Envelope, FrameDecoder,
};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("connection closed by peer")]
    Closed,
    #[error("timed out")]
    Timeout,
}

/// Blocking TCP endpoint: publishes with per-topic sequence numbers and
/// receives routed envelopes.
pub struct BridgeClient {
    stream: TcpStream,
    decoder: FrameDecoder,
    pending: VecDeque<Vec<u8>>,
    seqs: HashMap<String, u64>,
    chunk: Vec<u8>,
}

impl BridgeClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, BridgeError> {
        Self::from_stream(TcpStream::connect(addr)?)
    }

    pub fn connect_timeout(addr: &SocketAddr, timeout: Duration) -> Result<Self, BridgeError> {
        Self::from_stream(TcpStream::connect_timeout(addr, timeout)?)
    }

    fn from_stream(stream: TcpStream) -> Result<Self, BridgeError> {
        stream.set_nodelay(true)?;
        Ok(Self { stream, decoder: FrameDecoder::new(), pending: VecDeque::new(), seqs: HashMap::new(), chunk: vec![0; 256 * 1024] })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.stream.local_addr()
    }

    pub fn send(&mut self, e: &Envelope) -> Result<(), BridgeError> {
        self.stream.write_all(&encode_frame(e)?)?;
        Ok(())
    }

    /// Raw bytes, sent as-is; for tests of the broker's error handling.
    pub fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), BridgeError> {
        self.stream.write_all(bytes)?;
        Ok(())
    }

    fn next_seq(&mut self, topic: &str) -> u64 {
        let s = self.seqs.entry(topic.to_owned()).or_insert(0);
        let seq = *s;
        *s += 1;
        seq
    }

    /// Publish `data` on `topic`; returns the sequence number used.
    pub fn publish(&mut self, topic: &str, msg_type: &str, data: Value) -> Result<u64, BridgeError> {
        let seq = self.next_seq(topic);
        self.send(&Envelope::new(topic, seq, msg_type, data))?;
        Ok(seq)
    }

    pub fn control(&mut self, msg: &ControlMessage) -> Result<(), BridgeError> {
        msg.validate()?;
        let seq = self.next_seq("");
        self.send(&Envelope::control(msg, seq, now_ns()))
    }

    pub fn subscribe(&mut self, pattern: &str) -> Result<(), BridgeError> {
        self.control(&ControlMessage::new(ControlOp::Subscribe, Some(pattern)))
    }

    pub fn unsubscribe(&mut self, pattern: &str) -> Result<(), BridgeError> {
        self.control(&ControlMessage::new(ControlOp::Unsubscribe, Some(pattern)))
    }

    pub fn advertise(&mut self, topic: &str, msg_type: &str) -> Result<(), BridgeError> {
        self.control(&ControlMessage::advertise(topic, msg_type))
    }

    pub fn unadvertise(&mut self, topic: &str) -> Result<(), BridgeError> {
        self.control(&ControlMessage::new(ControlOp::Unadvertise, Some(topic)))
    }

    /// Round trip of a PING. Since the broker handles one connection's
    /// frames in order, a returned PONG also confirms every earlier control
    /// op took effect. Envelopes arriving meanwhile are kept for `recv`.
    pub fn ping(&mut self, timeout: Duration) -> Result<Duration, BridgeError> {
        let stamp = now_ns();
        let seq = self.next_seq("");
        let start = Instant::now();
        self.send(&Envelope::control(&ControlMessage::new(ControlOp::Ping, None), seq, stamp))?;
        let deadline = start + timeout;
        let mut held = Vec::new();
        let result = loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break Err(BridgeError::Timeout);
            }
            match self.read_body(Some(left)) {
                Ok(Some(body)) => {
                    let is_pong = decode_body(&body)
                        .ok()
                        .filter(|e| e.stamp_ns == stamp)
                        .and_then(|e| e.as_control().ok())
                        .is_some_and(|c| c.op == ControlOp::Pong);
                    if is_pong {
                        break Ok(start.elapsed());
                    }
                    held.push(body);
                }
                Ok(None) => {}
                Err(e) => break Err(e),
            }
        };
        for b in held.into_iter().rev() {
            self.pending.push_front(b);
        }
        result
    }

    fn read_body(&mut self, timeout: Option<Duration>) -> Result<Option<Vec<u8>>, BridgeError> {
        if let Some(b) = self.pending.pop_front() {
            return Ok(Some(b));
        }
        let deadline = timeout.map(|t| Instant::now() + t);
        loop {
            if let Some(r) = self.decoder.next_body() {
                return Ok(Some(r?));
            }
            let wait = match deadline {
                Some(d) => {
                    let left = d.saturating_duration_since(Instant::now());
                    if left.is_zero() {
                        return Ok(None);
                    }
                    Some(left.max(Duration::from_micros(100)))
                }
                None => None,
            };
            self.stream.set_read_timeout(wait)?;
            match self.stream.read(&mut self.chunk) {
                Ok(0) => return Err(BridgeError::Closed),
                Ok(n) => self.decoder.push(&self.chunk[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => return Ok(None),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Next frame body without decoding; `Ok(None)` on timeout.
    pub fn recv_body_timeout(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, BridgeError> {
        self.read_body(Some(timeout))
    }

    /// Next envelope, `Ok(None)` on timeout. A corrupt frame is reported as
    /// `Codec` once and the stream stays usable.
    pub fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>, BridgeError> {
        match self.read_body(Some(timeout))? {
            Some(b) => Ok(Some(decode_body(&b)?)),
            None => Ok(None),
        }
    }

    pub fn recv(&mut self) -> Result<Envelope, BridgeError> {
        loop {
            if let Some(b) = self.read_body(None)? {
                return Ok(decode_body(&b)?);
            }
        }
    }

    pub fn shutdown(&self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}
