use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use tungstenite::handshake::derive_accept_key;
use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::protocol::{CloseFrame, Role, WebSocketConfig};
use tungstenite::{Error as WsError, Message, WebSocket};

use crate::broker::{Handled, Shared};
use crate::codec::MAX_BODY_BYTES;

pub const WS_PATH: &str = "/bridge";
const MAX_HEAD: usize = 16 * 1024;
const POLL: Duration = Duration::from_millis(2);

pub(crate) fn serve(shared: Arc<Shared>, addr: impl ToSocketAddrs, static_dir: Option<PathBuf>) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let static_dir = static_dir.map(Arc::new);
    thread::Builder::new().name("bridge-ws-accept".into()).spawn(move || {
        for stream in listener.incoming() {
            if shared.stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let (s, dir) = (shared.clone(), static_dir.clone());
            let _ = thread::Builder::new().name("bridge-ws".into()).spawn(move || {
                if let Err(e) = handle_connection(stream, s, dir.as_deref().map(PathBuf::as_path)) {
                    debug!("ws connection: {e}");
                }
            });
        }
    })?;
    Ok(local)
}

struct Request {
    method: String,
    path: String,
    headers: Vec<(String, String)>,
    rest: Vec<u8>,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

fn read_head(stream: &mut TcpStream) -> io::Result<Request> {
    let mut buf = Vec::with_capacity(1024);
    let mut chunk = [0u8; 1024];
    let end = loop {
        if let Some(p) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break p;
        }
        if buf.len() > MAX_HEAD {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "request head too large"));
        }
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let head = std::str::from_utf8(&buf[..end]).map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "non-UTF-8 head"))?;
    let mut lines = head.split("\r\n");
    let mut first = lines.next().unwrap_or_default().split(' ');
    let method = first.next().unwrap_or_default().to_owned();
    let path = first.next().unwrap_or_default().to_owned();
    let headers = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_owned()))
        .collect();
    Ok(Request { method, path, headers, rest: buf[end + 4..].to_vec() })
}

fn respond(stream: &mut TcpStream, status: &str, ctype: &str, body: &[u8]) -> io::Result<()> {
    write!(stream, "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len())?;
    stream.write_all(body)?;
    stream.flush()
}

fn handle_connection(mut stream: TcpStream, shared: Arc<Shared>, static_dir: Option<&Path>) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let req = read_head(&mut stream)?;
    let path = req.path.split('?').next().unwrap_or_default().to_owned();
    let upgrade = req.header("upgrade").is_some_and(|v| v.eq_ignore_ascii_case("websocket"));
    if path == WS_PATH && upgrade {
        let Some(key) = req.header("sec-websocket-key") else {
            return respond(&mut stream, "400 Bad Request", "text/plain", b"missing Sec-WebSocket-Key");
        };
        let accept = derive_accept_key(key.as_bytes());
        write!(stream, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {accept}\r\n\r\n")?;
        stream.flush()?;
        return run_ws(stream, req.rest, shared);
    }
    if req.method != "GET" {
        return respond(&mut stream, "405 Method Not Allowed", "text/plain", b"method not allowed");
    }
    match static_dir.and_then(|d| resolve_static(d, &path)) {
        Some(file) => match std::fs::read(&file) {
            Ok(bytes) => respond(&mut stream, "200 OK", content_type(&file), &bytes),
            Err(_) => respond(&mut stream, "404 Not Found", "text/plain", b"not found"),
        },
        None => respond(&mut stream, "404 Not Found", "text/plain", b"not found"),
    }
}

/// Map a URL path under `dir`; `..` and absolute components are refused.
pub fn resolve_static(dir: &Path, url_path: &str) -> Option<PathBuf> {
    let rel = url_path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    let full = dir.join(rel);
    full.is_file().then_some(full)
}

fn content_type(p: &Path) -> &'static str {
    match p.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("wasm") => "application/wasm",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

fn close_with(ws: &mut WebSocket<TcpStream>, code: CloseCode, reason: &str) {
    let _ = ws.close(Some(CloseFrame { code, reason: reason.to_owned().into() }));
    let deadline = Instant::now() + Duration::from_millis(500);
    // let the close handshake finish
    while Instant::now() < deadline {
        match ws.read() {
            Err(WsError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => break,
            Ok(_) => {}
        }
    }
}

fn run_ws(stream: TcpStream, rest: Vec<u8>, shared: Arc<Shared>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(POLL))?;
    let (id, out) = shared.register(stream.try_clone()?);
    let config = WebSocketConfig::default().max_message_size(Some(MAX_BODY_BYTES)).max_frame_size(Some(MAX_BODY_BYTES));
    let mut ws = WebSocket::from_partially_read(stream, rest, Role::Server, Some(config));
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => {
                if let Handled::Violation(msg) = shared.handle_body(id, t.as_bytes().to_vec()) {
                    warn!("ws connection {id}: {msg}");
                    close_with(&mut ws, CloseCode::Protocol, "malformed envelope");
                    break;
                }
            }
            Ok(Message::Binary(_)) => {
                close_with(&mut ws, CloseCode::Protocol, "binary frames are not accepted");
                break;
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                break;
            }
            Ok(_) => {}
            Err(WsError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => {
                debug!("ws connection {id}: {e}");
                break;
            }
        }
        let mut wrote = false;
        while let Some(body) = out.pop(false) {
            let text = String::from_utf8(body.to_vec()).expect("routed bodies are validated UTF-8");
            if ws.write(Message::text(text)).is_err() {
                break;
            }
            wrote = true;
        }
        if (wrote && ws.flush().is_err()) || out.is_closed() {
            break;
        }
    }
    shared.disconnect(id);
    Ok(())
}
