use std::collections::{HashMap, VecDeque};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::codec::{encode_body, parse_header, read_body, CodecError, ControlMessage, ControlOp, Envelope};

/// Pending outbound bytes per connection before it is cut off.
pub const SLOW_SUBSCRIBER_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokerStats {
    pub connections: u64,
    pub accepted: u64,
    pub published: u64,
    pub delivered: u64,
    pub dropped_no_subscribers: u64,
    pub crc_failures: u64,
    pub protocol_errors: u64,
    pub slow_disconnects: u64,
}

#[derive(Default)]
struct Counters {
    accepted: AtomicU64,
    published: AtomicU64,
    delivered: AtomicU64,
    dropped: AtomicU64,
    crc: AtomicU64,
    protocol: AtomicU64,
    slow: AtomicU64,
}

struct QueueState {
    items: VecDeque<Arc<Vec<u8>>>,
    bytes: usize,
    closed: bool,
}

/// Bounded outbound queue of frame bodies for one connection.
pub(crate) struct OutQueue {
    state: Mutex<QueueState>,
    cv: Condvar,
    limit: usize,
}

impl OutQueue {
    fn new(limit: usize) -> Self {
        Self { state: Mutex::new(QueueState { items: VecDeque::new(), bytes: 0, closed: false }), cv: Condvar::new(), limit }
    }

    /// False when the queue is closed or would exceed its limit.
    fn push(&self, body: Arc<Vec<u8>>) -> bool {
        let mut s = self.state.lock().unwrap();
        if s.closed || s.bytes + body.len() > self.limit {
            return false;
        }
        s.bytes += body.len();
        s.items.push_back(body);
        self.cv.notify_one();
        true
    }

    pub(crate) fn pop(&self, block: bool) -> Option<Arc<Vec<u8>>> {
        let mut s = self.state.lock().unwrap();
        loop {
            if s.closed {
                return None;
            }
            if let Some(b) = s.items.pop_front() {
                s.bytes -= b.len();
                return Some(b);
            }
            if !block {
                return None;
            }
            s = self.cv.wait(s).unwrap();
        }
    }

    pub(crate) fn is_closed(&self) -> bool {
        self.state.lock().unwrap().closed
    }

    fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.cv.notify_all();
    }
}

struct Peer {
    subs: Vec<String>,
    adverts: HashMap<String, String>,
    out: Arc<OutQueue>,
    socket: TcpStream,
}

pub(crate) struct Shared {
    peers: RwLock<HashMap<u64, Peer>>,
    next_id: AtomicU64,
    counters: Counters,
    pong_seq: AtomicU64,
    pub(crate) stop: AtomicBool,
    queue_limit: usize,
}

pub(crate) enum Handled {
    Ok,
    Violation(String),
}

impl Shared {
    pub(crate) fn register(&self, socket: TcpStream) -> (u64, Arc<OutQueue>) {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let out = Arc::new(OutQueue::new(self.queue_limit));
        self.counters.accepted.fetch_add(1, Ordering::Relaxed);
        let peer = Peer { subs: Vec::new(), adverts: HashMap::new(), out: out.clone(), socket };
        self.peers.write().unwrap().insert(id, peer);
        (id, out)
    }

    pub(crate) fn disconnect(&self, id: u64) {
        if let Some(p) = self.peers.write().unwrap().remove(&id) {
            p.out.close();
            let _ = p.socket.shutdown(Shutdown::Both);
            debug!("connection {id} closed");
        }
    }

    pub(crate) fn handle_body(&self, id: u64, body: Vec<u8>) -> Handled {
        let h = match parse_header(&body) {
            Ok(h) => h,
            Err(CodecError::CrcMismatch { .. }) => {
                self.counters.crc.fetch_add(1, Ordering::Relaxed);
                return Handled::Ok;
            }
            Err(e) => {
                self.counters.protocol.fetch_add(1, Ordering::Relaxed);
                return Handled::Violation(e.to_string());
            }
        };
        if !h.topic.is_empty() {
            let topic = h.topic.into_owned();
            self.publish(&topic, Arc::new(body));
            return Handled::Ok;
        }
        let msg: ControlMessage = match serde_json::from_str(h.data.get()) {
            Ok(m) => m,
            Err(e) => {
                self.counters.protocol.fetch_add(1, Ordering::Relaxed);
                return Handled::Violation(format!("bad control message: {e}"));
            }
        };
        if let Err(e) = msg.validate() {
            self.counters.protocol.fetch_add(1, Ordering::Relaxed);
            return Handled::Violation(e.to_string());
        }
        let stamp = h.stamp_ns;
        let mut peers = self.peers.write().unwrap();
        let Some(peer) = peers.get_mut(&id) else { return Handled::Ok };
        let topic = msg.topic.clone().unwrap_or_default();
        match msg.op {
            ControlOp::Subscribe => {
                if !peer.subs.contains(&topic) {
                    peer.subs.push(topic);
                }
            }
            ControlOp::Unsubscribe => peer.subs.retain(|s| *s != topic),
            ControlOp::Advertise => {
                peer.adverts.insert(topic, msg.msg_type.unwrap_or_default());
            }
            ControlOp::Unadvertise => {
                peer.adverts.remove(&topic);
            }
            ControlOp::Ping => {
                let seq = self.pong_seq.fetch_add(1, Ordering::Relaxed);
                let pong = Envelope::control(&ControlMessage::new(ControlOp::Pong, None), seq, stamp);
                let body = encode_body(&pong).expect("pong encodes");
                let out = peer.out.clone();
                drop(peers);
                if !out.push(Arc::new(body)) {
                    self.slow(id);
                }
            }
            ControlOp::Pong => {}
        }
        Handled::Ok
    }

    fn publish(&self, topic: &str, body: Arc<Vec<u8>>) {
        self.counters.published.fetch_add(1, Ordering::Relaxed);
        let targets: Vec<(u64, Arc<OutQueue>)> = self
            .peers
            .read()
            .unwrap()
            .iter()
            .filter(|(_, p)| p.subs.iter().any(|s| crate::codec::topic_matches(s, topic)))
            .map(|(id, p)| (*id, p.out.clone()))
            .collect();
        if targets.is_empty() {
            self.counters.dropped.fetch_add(1, Ordering::Relaxed);
            return;
        }
        for (id, q) in targets {
            if q.push(body.clone()) {
                self.counters.delivered.fetch_add(1, Ordering::Relaxed);
            } else if !q.is_closed() {
                self.slow(id);
            }
        }
    }

    fn slow(&self, id: u64) {
        warn!("connection {id} exceeded its outbound queue limit, disconnecting");
        self.counters.slow.fetch_add(1, Ordering::Relaxed);
        self.disconnect(id);
    }

    pub(crate) fn stats(&self) -> BrokerStats {
        let c = &self.counters;
        BrokerStats {
            connections: self.peers.read().unwrap().len() as u64,
            accepted: c.accepted.load(Ordering::Relaxed),
            published: c.published.load(Ordering::Relaxed),
            delivered: c.delivered.load(Ordering::Relaxed),
            dropped_no_subscribers: c.dropped.load(Ordering::Relaxed),
            crc_failures: c.crc.load(Ordering::Relaxed),
            protocol_errors: c.protocol.load(Ordering::Relaxed),
            slow_disconnects: c.slow.load(Ordering::Relaxed),
        }
    }
}

/// Topic router accepting length-prefixed envelope streams over TCP, with an
/// optional WebSocket mirror sharing the same routing table.
pub struct Broker {
    pub(crate) shared: Arc<Shared>,
    tcp_addr: SocketAddr,
    ws_addr: Mutex<Option<SocketAddr>>,
}

impl Broker {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Self::bind_with_limit(addr, SLOW_SUBSCRIBER_LIMIT)
    }

    pub fn bind_with_limit(addr: impl ToSocketAddrs, queue_limit: usize) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let tcp_addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            peers: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            counters: Counters::default(),
            pong_seq: AtomicU64::new(0),
            stop: AtomicBool::new(false),
            queue_limit,
        });
        let s = shared.clone();
        thread::Builder::new().name("bridge-accept".into()).spawn(move || accept_loop(listener, s))?;
        Ok(Self { shared, tcp_addr, ws_addr: Mutex::new(None) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    /// Start the WebSocket mirror; `static_dir`, when given, is served over
    /// plain HTTP on the same port.
    pub fn serve_ws(&self, addr: impl ToSocketAddrs, static_dir: Option<PathBuf>) -> io::Result<SocketAddr> {
        let a = crate::ws::serve(self.shared.clone(), addr, static_dir)?;
        *self.ws_addr.lock().unwrap() = Some(a);
        Ok(a)
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        *self.ws_addr.lock().unwrap()
    }

    pub fn stats(&self) -> BrokerStats {
        self.shared.stats()
    }

    pub fn shutdown(&self) {
        if self.shared.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept calls
        let _ = TcpStream::connect(self.tcp_addr);
        if let Some(a) = self.ws_addr() {
            let _ = TcpStream::connect(a);
        }
        let ids: Vec<u64> = self.shared.peers.read().unwrap().keys().copied().collect();
        for id in ids {
            self.shared.disconnect(id);
        }
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        if let Err(e) = spawn_tcp_peer(stream, shared.clone()) {
            warn!("could not start connection: {e}");
        }
    }
}

fn spawn_tcp_peer(stream: TcpStream, shared: Arc<Shared>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (id, out) = shared.register(stream.try_clone()?);
    let write_half = stream.try_clone()?;
    let s = shared.clone();
    thread::Builder::new().name(format!("bridge-write-{id}")).spawn(move || {
        let mut w = BufWriter::with_capacity(256 * 1024, write_half);
        let write = |body: &[u8], w: &mut BufWriter<TcpStream>| -> io::Result<()> {
            w.write_all(&(body.len() as u32).to_be_bytes())?;
            w.write_all(body)
        };
        while let Some(body) = out.pop(true) {
            let mut res = write(&body, &mut w);
            while res.is_ok() {
                match out.pop(false) {
                    Some(b) => res = write(&b, &mut w),
                    None => break,
                }
            }
            if res.and_then(|_| w.flush()).is_err() {
                break;
            }
        }
        s.disconnect(id);
    })?;
    thread::Builder::new().name(format!("bridge-read-{id}")).spawn(move || {
        let mut r = BufReader::with_capacity(256 * 1024, stream);
        loop {
            match read_body(&mut r) {
                Ok(Some(body)) => {
                    if let Handled::Violation(msg) = shared.handle_body(id, body) {
                        warn!("connection {id}: {msg}");
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    if e.kind() == io::ErrorKind::InvalidData {
                        shared.counters.protocol.fetch_add(1, Ordering::Relaxed);
                    }
                    debug!("connection {id}: {e}");
                    break;
                }
            }
        }
        shared.disconnect(id);
    })?;
    Ok(())
}
