use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use serde_json::json;
use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::{connect, Message};
use vrgl_bridge::{decode_body, encode_body, BridgeClient, Broker, ControlMessage, ControlOp, Envelope};

const T: Duration = Duration::from_secs(5);

fn setup(static_dir: Option<std::path::PathBuf>) -> (Broker, SocketAddr, SocketAddr) {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let ws = b.serve_ws("127.0.0.1:0", static_dir).unwrap();
    let tcp = b.local_addr();
    (b, tcp, ws)
}

type Ws = tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>;

fn ws_client(addr: SocketAddr) -> Ws {
    let (ws, _) = connect(format!("ws://{addr}/bridge")).unwrap();
    if let tungstenite::stream::MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(T)).unwrap();
    }
    ws
}

fn send_env(ws: &mut Ws, e: &Envelope) {
    ws.send(Message::text(String::from_utf8(encode_body(e).unwrap()).unwrap())).unwrap();
}

fn recv_env(ws: &mut Ws) -> Envelope {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return decode_body(t.as_bytes()).unwrap(),
            Message::Ping(_) | Message::Pong(_) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}

/// Subscribe and wait for the PONG that confirms it.
fn ws_subscribe(ws: &mut Ws, topic: &str) {
    send_env(ws, &Envelope::control(&ControlMessage::new(ControlOp::Subscribe, Some(topic)), 0, 1));
    send_env(ws, &Envelope::control(&ControlMessage::new(ControlOp::Ping, None), 1, 42));
    let pong = recv_env(ws);
    assert_eq!(pong.as_control().unwrap().op, ControlOp::Pong);
    assert_eq!(pong.stamp_ns, 42);
}

#[test]
fn tcp_publish_reaches_ws_subscriber() {
    let (_b, tcp, ws_addr) = setup(None);
    let mut ws = ws_client(ws_addr);
    ws_subscribe(&mut ws, "/scene/snapshot");
    let mut sim = BridgeClient::connect(tcp).unwrap();
    let e = Envelope::new("/scene/snapshot", 0, "SceneSnapshot", json!({"tick": 3, "entities": []}));
    sim.send(&e).unwrap();
    assert_eq!(recv_env(&mut ws), e);
}

#[test]
fn ws_publish_reaches_tcp_subscriber() {
    let (_b, tcp, ws_addr) = setup(None);
    let mut sub = BridgeClient::connect(tcp).unwrap();
    sub.subscribe("/agent1/cmd").unwrap();
    sub.ping(T).unwrap();
    let mut ws = ws_client(ws_addr);
    let e = Envelope::new("/agent1/cmd", 0, "Cmd", json!({"v": 0.5, "w": 0.0}));
    send_env(&mut ws, &e);
    assert_eq!(sub.recv_timeout(T).unwrap().unwrap(), e);
}

fn expect_close(ws: &mut Ws, code: CloseCode) {
    loop {
        match ws.read() {
            Ok(Message::Close(Some(f))) => {
                assert_eq!(f.code, code);
                return;
            }
            Ok(_) => {}
            Err(e) => panic!("connection ended without a close frame: {e}"),
        }
    }
}

#[test]
fn binary_frame_closes_with_protocol_error() {
    let (b, _tcp, ws_addr) = setup(None);
    let mut ws = ws_client(ws_addr);
    ws.send(Message::binary(vec![1, 2, 3])).unwrap();
    expect_close(&mut ws, CloseCode::Protocol);
    drop(ws);
    std::thread::sleep(Duration::from_millis(50));
    assert_eq!(b.stats().connections, 0);
}

#[test]
fn malformed_json_closes_client() {
    let (_b, _tcp, ws_addr) = setup(None);
    let mut ws = ws_client(ws_addr);
    ws.send(Message::text("{\"topic\":")).unwrap();
    expect_close(&mut ws, CloseCode::Protocol);
}

fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\n\r\n").unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn static_assets_on_ws_port() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let (_b, _tcp, ws_addr) = setup(Some(dir.path().to_path_buf()));
    let r = http_get(ws_addr, "/");
    assert!(r.starts_with("HTTP/1.1 200"));
    assert!(r.contains("text/html"));
    assert!(r.ends_with("<html>ui</html>"));
    assert!(http_get(ws_addr, "/nope.js").starts_with("HTTP/1.1 404"));
    assert!(http_get(ws_addr, "/../Cargo.toml").starts_with("HTTP/1.1 404"));
}
