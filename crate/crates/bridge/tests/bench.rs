use vrgl_bridge::{benchmark_throughput, Broker};

#[test]
fn half_mebibyte_stream_is_clean() {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let s = benchmark_throughput(512 * 1024, 100, b.local_addr(), 1);
    assert_eq!(s.error, None);
    assert_eq!((s.messages_sent, s.messages_received), (100, 100));
    assert_eq!((s.loss, s.out_of_order, s.crc_failures), (0, 0, 0));
    // each payload serializes with its two quotes
    assert_eq!(s.bytes, 100 * (512 * 1024 + 2));
    assert!(s.throughput > 0.0);
}

#[test]
fn empty_payload_single_message() {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let s = benchmark_throughput(0, 1, b.local_addr(), 0);
    assert_eq!((s.messages_sent, s.messages_received), (1, 1));
    assert!(s.throughput >= 0.0);
}

#[test]
fn zero_count_is_empty() {
    let b = Broker::bind("127.0.0.1:0").unwrap();
    let s = benchmark_throughput(1024, 0, b.local_addr(), 0);
    assert_eq!(s.messages_sent, 0);
    assert_eq!(s.elapsed, 0.0);
}

#[test]
fn unreachable_broker_reported_not_thrown() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let s = benchmark_throughput(16, 10, addr, 0);
    assert!(s.error.is_some());
    assert_eq!(s.messages_received, 0);
}
