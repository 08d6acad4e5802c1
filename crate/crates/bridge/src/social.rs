use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};
use vrgl_core::social::{ResponsePrimitive, SignalPayload, SocialFsm, SocialSignal};

use crate::client::{BridgeClient, BridgeError};
use crate::codec::{topic_matches, Envelope};
use crate::topics;

pub const RESPONSE_TYPE: &str = "ResponsePrimitive";
pub const SIGNAL_TYPE: &str = "SocialSignal";

#[derive(Debug, Clone)]
pub struct PeerConfig {
    pub agent_id: String,
    /// FSM clock rate; durations are counted in these ticks.
    pub tick_hz: f64,
    pub backoff_initial: Duration,
    pub backoff_max: Duration,
}

impl PeerConfig {
    pub fn new(agent_id: &str) -> Self {
        Self {
            agent_id: agent_id.to_owned(),
            tick_hz: vrgl_core::scene::TICK_HZ as f64,
            backoff_initial: Duration::from_millis(20),
            backoff_max: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PeerStatus {
    pub connected: bool,
    pub connections: u64,
    pub signals: u64,
    pub published: u64,
    pub fsm: SocialFsm,
}

pub struct PeerHandle {
    stop: Arc<AtomicBool>,
    status: Arc<Mutex<PeerStatus>>,
    thread: Option<JoinHandle<()>>,
}

impl PeerHandle {
    pub fn status(&self) -> PeerStatus {
        self.status.lock().unwrap().clone()
    }

    /// Block until connected and subscribed, or the timeout passes.
    pub fn wait_connected(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while Instant::now() < deadline {
            if self.status.lock().unwrap().connected {
                return true;
            }
            thread::sleep(Duration::from_millis(2));
        }
        false
    }

    pub fn stop(mut self) -> PeerStatus {
        self.halt();
        self.status()
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for PeerHandle {
    fn drop(&mut self) {
        self.halt();
    }
}

pub fn run_peer(endpoint: SocketAddr, agent_id: &str) -> PeerHandle {
    run_peer_with(endpoint, PeerConfig::new(agent_id))
}

/// Reactive peer: answers `/agent/*/signal` gestures from other agents with
/// response primitives on its own action topic. Reconnects with exponential
/// backoff; the state machine and sequence numbers survive reconnects.
pub fn run_peer_with(endpoint: SocketAddr, cfg: PeerConfig) -> PeerHandle {
    let stop = Arc::new(AtomicBool::new(false));
    let status = Arc::new(Mutex::new(PeerStatus::default()));
    let (s, st) = (stop.clone(), status.clone());
    let thread = thread::Builder::new()
        .name(format!("social-{}", cfg.agent_id))
        .spawn(move || peer_loop(endpoint, cfg, &s, &st))
        .expect("spawn social peer");
    PeerHandle { stop, status, thread: Some(thread) }
}

struct PeerState {
    fsm: SocialFsm,
    start: Instant,
    ticks: u64,
    seq: u64,
    action_topic: String,
}

impl PeerState {
    fn now_tick(&self, hz: f64) -> u64 {
        (self.start.elapsed().as_secs_f64() * hz) as u64
    }

    fn publish(&mut self, client: &mut BridgeClient, p: &ResponsePrimitive, status: &Mutex<PeerStatus>) -> Result<(), BridgeError> {
        let data = serde_json::to_value(p).expect("primitive serializes");
        client.send(&Envelope::new(self.action_topic.clone(), self.seq, RESPONSE_TYPE, data))?;
        self.seq += 1;
        status.lock().unwrap().published += 1;
        Ok(())
    }
}

fn sleep_unless(stop: &AtomicBool, d: Duration) {
    let end = Instant::now() + d;
    while !stop.load(Ordering::SeqCst) && Instant::now() < end {
        thread::sleep(Duration::from_millis(5).min(end.saturating_duration_since(Instant::now())));
    }
}

fn peer_loop(endpoint: SocketAddr, cfg: PeerConfig, stop: &AtomicBool, status: &Mutex<PeerStatus>) {
    let mut st = PeerState {
        fsm: SocialFsm::new(),
        start: Instant::now(),
        ticks: 0,
        seq: 0,
        action_topic: topics::agent_action(&cfg.agent_id),
    };
    let mut backoff = cfg.backoff_initial;
    while !stop.load(Ordering::SeqCst) {
        let mut client = match connect(endpoint, &cfg) {
            Ok(c) => c,
            Err(e) => {
                debug!("social peer connect failed: {e}; retrying in {backoff:?}");
                sleep_unless(stop, backoff);
                backoff = (backoff * 2).min(cfg.backoff_max);
                continue;
            }
        };
        backoff = cfg.backoff_initial;
        {
            let mut s = status.lock().unwrap();
            s.connected = true;
            s.connections += 1;
        }
        if let Err(e) = serve(&mut client, &mut st, &cfg, stop, status) {
            warn!("social peer lost connection: {e}");
        }
        status.lock().unwrap().connected = false;
        client.shutdown();
    }
}

fn connect(endpoint: SocketAddr, cfg: &PeerConfig) -> Result<BridgeClient, BridgeError> {
    let mut c = BridgeClient::connect_timeout(&endpoint, Duration::from_secs(1))?;
    c.advertise(&topics::agent_action(&cfg.agent_id), RESPONSE_TYPE)?;
    c.subscribe(topics::ANY_SIGNAL)?;
    c.ping(Duration::from_secs(2))?;
    Ok(c)
}

fn serve(
    client: &mut BridgeClient,
    st: &mut PeerState,
    cfg: &PeerConfig,
    stop: &AtomicBool,
    status: &Mutex<PeerStatus>,
) -> Result<(), BridgeError> {
    while !stop.load(Ordering::SeqCst) {
        advance(client, st, cfg, status)?;
        let env = match client.recv_timeout(Duration::from_millis(2)) {
            Ok(Some(env)) => env,
            Ok(None) => continue,
            Err(BridgeError::Codec(e)) => {
                debug!("social peer dropped a frame: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let Some(sender) = signal_sender(&env.topic) else { continue };
        if sender == cfg.agent_id {
            continue;
        }
        let payload: SignalPayload = match serde_json::from_value(env.data) {
            Ok(p) => p,
            Err(e) => {
                debug!("ignoring malformed signal from {sender}: {e}");
                continue;
            }
        };
        advance(client, st, cfg, status)?;
        let signal = SocialSignal { agent_id: sender.to_owned(), kind: payload.kind, tick: st.ticks };
        let response = st.fsm.on_signal(signal);
        {
            // before publishing, so a client that saw the response never reads a stale state
            let mut s = status.lock().unwrap();
            s.signals += 1;
            s.fsm = st.fsm.clone();
        }
        st.publish(client, &response, status)?;
    }
    Ok(())
}

fn advance(client: &mut BridgeClient, st: &mut PeerState, cfg: &PeerConfig, status: &Mutex<PeerStatus>) -> Result<(), BridgeError> {
    let now = st.now_tick(cfg.tick_hz);
    if now <= st.ticks {
        return Ok(());
    }
    let started = st.fsm.advance(now - st.ticks);
    st.ticks = now;
    status.lock().unwrap().fsm = st.fsm.clone();
    for p in &started {
        st.publish(client, p, status)?;
    }
    Ok(())
}

/// `/agent/<id>/signal` → `<id>`.
pub fn signal_sender(topic: &str) -> Option<&str> {
    if !topic_matches(topics::ANY_SIGNAL, topic) {
        return None;
    }
    topic.split('/').nth(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sender_from_topic() {
        assert_eq!(signal_sender("/agent/h1/signal"), Some("h1"));
        assert_eq!(signal_sender("/agent/h1/action"), None);
        assert_eq!(signal_sender("/agent/h1/x/signal"), None);
    }
}
