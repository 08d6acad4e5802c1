use std::net::SocketAddr;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::client::{BridgeClient, BridgeError};
use crate::codec::{parse_header, CodecError};
use crate::stats::{SeqTracker, StreamStats};
use crate::topics::BENCH;

pub const BENCH_TYPE: &str = "BenchPayload";
/// Bytes allowed in flight between publisher and subscriber, well under the
/// broker's slow-subscriber limit.
const IN_FLIGHT_BYTES: usize = 16 * 1024 * 1024;
const IDLE_TIMEOUT: Duration = Duration::from_secs(10);
const ALPHABET: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

/// A random string of `len` bytes that needs no JSON escaping.
pub fn random_payload(rng: &mut impl RngCore, len: usize) -> String {
    let mut bytes = vec![0u8; len];
    rng.fill_bytes(&mut bytes);
    bytes.iter_mut().for_each(|b| *b = ALPHABET[(*b & 63) as usize]);
    String::from_utf8(bytes).expect("alphabet is ASCII")
}

struct Progress {
    received: Mutex<u64>,
    cv: Condvar,
}

/// Publish `count` envelopes of `payload_bytes` random characters on the
/// bench topic while a second connection subscribes and checks order and
/// checksums. Failures are reported in `error`, never raised.
pub fn benchmark_throughput(payload_bytes: usize, count: u64, endpoint: SocketAddr, seed: u64) -> StreamStats {
    let mut stats = StreamStats::default();
    if count == 0 {
        return stats;
    }
    let mut sub = match setup_subscriber(endpoint) {
        Ok(s) => s,
        Err(e) => {
            stats.error = Some(format!("subscriber setup: {e}"));
            return stats;
        }
    };
    let progress = Arc::new(Progress { received: Mutex::new(0), cv: Condvar::new() });
    let window = (IN_FLIGHT_BYTES / (payload_bytes + 128)).max(1) as u64;
    let start = Instant::now();
    let p = progress.clone();
    let publisher = thread::spawn(move || publish_all(endpoint, payload_bytes, count, seed, window, &p));

    let mut tracker = SeqTracker::expecting(0);
    let mut last_rx = start;
    loop {
        if tracker.received >= count {
            break;
        }
        match sub.recv_body_timeout(IDLE_TIMEOUT) {
            Ok(Some(body)) => match parse_header(&body) {
                Ok(h) if h.topic == BENCH => {
                    tracker.observe(h.seq);
                    stats.bytes += h.data.get().len() as u64;
                    last_rx = Instant::now();
                }
                Ok(_) => {}
                Err(CodecError::CrcMismatch { .. }) => stats.crc_failures += 1,
                Err(e) => {
                    stats.error = Some(format!("subscriber: {e}"));
                    break;
                }
            },
            Ok(None) => {
                stats.error = Some("subscriber idle timeout".into());
                break;
            }
            Err(BridgeError::Codec(CodecError::CrcMismatch { .. })) => stats.crc_failures += 1,
            Err(e) => {
                stats.error = Some(format!("subscriber: {e}"));
                break;
            }
        }
        *progress.received.lock().unwrap() = tracker.received + stats.crc_failures;
        progress.cv.notify_all();
    }
    // unblock a publisher still waiting on the window
    *progress.received.lock().unwrap() = u64::MAX;
    progress.cv.notify_all();
    let (sent, pub_err) = publisher.join().unwrap_or((0, Some("publisher panicked".into())));
    if let (Some(e), None) = (pub_err, &stats.error) {
        stats.error = Some(e);
    }
    tracker.finish(sent.checked_sub(1));
    stats.messages_sent = sent;
    stats.messages_received = tracker.received;
    stats.loss = tracker.loss;
    stats.out_of_order = tracker.out_of_order;
    stats.elapsed = last_rx.duration_since(start).as_secs_f64();
    stats.throughput = if stats.elapsed > 0.0 { stats.bytes as f64 / stats.elapsed } else { 0.0 };
    sub.shutdown();
    stats
}

fn setup_subscriber(endpoint: SocketAddr) -> Result<BridgeClient, BridgeError> {
    let mut sub = BridgeClient::connect(endpoint)?;
    sub.subscribe(BENCH)?;
    sub.ping(Duration::from_secs(5))?;
    Ok(sub)
}

fn publish_all(endpoint: SocketAddr, payload: usize, count: u64, seed: u64, window: u64, p: &Progress) -> (u64, Option<String>) {
    let mut client = match BridgeClient::connect(endpoint) {
        Ok(c) => c,
        Err(e) => return (0, Some(format!("publisher connect: {e}"))),
    };
    if let Err(e) = client.advertise(BENCH, BENCH_TYPE) {
        return (0, Some(format!("publisher: {e}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        {
            let mut got = p.received.lock().unwrap();
            while *got != u64::MAX && i >= *got + window {
                got = p.cv.wait(got).unwrap();
            }
            if *got == u64::MAX {
                return (i, None);
            }
        }
        let data = Value::String(random_payload(&mut rng, payload));
        if let Err(e) = client.publish(BENCH, BENCH_TYPE, data) {
            return (i, Some(format!("publisher: {e}")));
        }
    }
    (count, None)
}
