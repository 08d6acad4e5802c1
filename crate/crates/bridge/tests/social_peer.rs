use std::time::{Duration, Instant};

use serde_json::json;
use vrgl_bridge::{run_peer, run_peer_with, BridgeClient, Broker, PeerConfig, SIGNAL_TYPE};
use vrgl_core::social::{ResponseKind, ResponsePrimitive};

const T: Duration = Duration::from_secs(5);

fn observer(addr: std::net::SocketAddr, robot: &str) -> BridgeClient {
    let mut c = BridgeClient::connect(addr).unwrap();
    c.subscribe(&format!("/agent/{robot}/action")).unwrap();
    c.ping(T).unwrap();
    c
}

fn response(c: &mut BridgeClient, timeout: Duration) -> Option<ResponsePrimitive> {
    c.recv_timeout(timeout).unwrap().map(|e| serde_json::from_value(e.data).unwrap())
}

#[test]
fn wave_gets_wave_back() {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let peer = run_peer(b.local_addr(), "robot");
    assert!(peer.wait_connected(T));
    let mut obs = observer(b.local_addr(), "robot");
    let mut human = BridgeClient::connect(b.local_addr()).unwrap();
    human.publish("/agent/human1/signal", SIGNAL_TYPE, json!({"kind": "wave"})).unwrap();
    let r = response(&mut obs, T).unwrap();
    assert_eq!(r, ResponsePrimitive { kind: ResponseKind::WaveBack, duration: 120, target: "human1".into() });
}

#[test]
fn silence_means_no_publishes() {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let peer = run_peer(b.local_addr(), "robot");
    assert!(peer.wait_connected(T));
    let mut obs = observer(b.local_addr(), "robot");
    assert!(response(&mut obs, Duration::from_millis(300)).is_none());
    assert_eq!(peer.stop().published, 0);
}

#[test]
fn two_wavers_each_targeted() {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let mut cfg = PeerConfig::new("robot");
    // 1200 Hz: a wave-back lasts 100 ms
    cfg.tick_hz = 1200.0;
    let peer = run_peer_with(b.local_addr(), cfg);
    assert!(peer.wait_connected(T));
    let mut obs = observer(b.local_addr(), "robot");
    let mut h1 = BridgeClient::connect(b.local_addr()).unwrap();
    let mut h2 = BridgeClient::connect(b.local_addr()).unwrap();
    h1.publish("/agent/h1/signal", SIGNAL_TYPE, json!({"kind": "wave"})).unwrap();
    h2.publish("/agent/h2/signal", SIGNAL_TYPE, json!({"kind": "wave"})).unwrap();
    let mut got = Vec::new();
    let end = Instant::now() + T;
    while got.len() < 3 && Instant::now() < end {
        if let Some(r) = response(&mut obs, Duration::from_millis(50)) {
            got.push(r);
        }
    }
    // the first waver is answered at once; the second is acknowledged while
    // queued, then answered when the first wave-back ends
    let first = got[0].target.clone();
    let second = if first == "h1" { "h2" } else { "h1" };
    assert_eq!(got[0].kind, ResponseKind::WaveBack);
    assert_eq!(got[1], ResponsePrimitive { kind: ResponseKind::Idle, duration: 0, target: second.into() });
    assert_eq!(got[2], ResponsePrimitive { kind: ResponseKind::WaveBack, duration: 120, target: second.into() });
}

#[test]
fn own_and_malformed_signals_ignored() {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let peer = run_peer(b.local_addr(), "robot");
    assert!(peer.wait_connected(T));
    let mut obs = observer(b.local_addr(), "robot");
    let mut c = BridgeClient::connect(b.local_addr()).unwrap();
    c.publish("/agent/robot/signal", SIGNAL_TYPE, json!({"kind": "wave"})).unwrap();
    c.publish("/agent/h/signal", SIGNAL_TYPE, json!({"kind": "bow"})).unwrap();
    assert!(response(&mut obs, Duration::from_millis(200)).is_none());
}

#[test]
fn reconnects_with_state_preserved() {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let addr = b.local_addr();
    let peer = run_peer(addr, "robot");
    assert!(peer.wait_connected(T));
    let mut h = BridgeClient::connect(addr).unwrap();
    let mut obs = observer(addr, "robot");
    h.publish("/agent/h/signal", SIGNAL_TYPE, json!({"kind": "stretch"})).unwrap();
    h.publish("/agent/h/signal", SIGNAL_TYPE, json!({"kind": "wave"})).unwrap();
    assert_eq!(response(&mut obs, T).unwrap().kind, ResponseKind::HandshakeReach);
    assert_eq!(response(&mut obs, T).unwrap().kind, ResponseKind::Idle);
    drop(b);
    let end = Instant::now() + T;
    while peer.status().connected && Instant::now() < end {
        std::thread::sleep(Duration::from_millis(5));
    }
    assert!(!peer.status().connected);
    let b2 = Broker::bind(addr).unwrap();
    let end = Instant::now() + T;
    while peer.status().connections < 2 && Instant::now() < end {
        std::thread::sleep(Duration::from_millis(5));
    }
    let st = peer.status();
    assert_eq!(st.connections, 2);
    // the queued wave is still pending behind the handshake
    assert_eq!(st.fsm.queue.len() + usize::from(!st.fsm.is_idle()), 2);
    drop(b2);
}
