use proptest::prelude::*;
use serde_json::{json, Map, Value};
use vrgl_bridge::codec::crc_of;
use vrgl_bridge::{decode_frame, encode_frame, Envelope, FrameDecoder};

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(|n| json!(n)),
        any::<u64>().prop_map(|n| json!(n)),
        (-1e300f64..1e300).prop_map(|f| json!(f)),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(|f| json!(f)),
        ".{0,24}".prop_map(Value::String),
    ]
}

fn value() -> impl Strategy<Value = Value> {
    leaf().prop_recursive(3, 32, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..6).prop_map(|m| Value::Object(m.into_iter().collect::<Map<_, _>>())),
        ]
    })
}

fn envelope() -> impl Strategy<Value = Envelope> {
    (prop::collection::vec("[a-z0-9_]{1,6}", 1..4), any::<u64>(), any::<u64>(), "[A-Za-z]{1,12}", value()).prop_map(
        |(segs, seq, stamp_ns, msg_type, data)| Envelope {
            topic: format!("/{}", segs.join("/")),
            seq,
            stamp_ns,
            msg_type,
            crc32: crc_of(&data),
            data,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip(e in envelope()) {
        let f = encode_frame(&e).unwrap();
        let (d, used) = decode_frame(&f).unwrap();
        prop_assert_eq!(used, f.len());
        prop_assert_eq!(&d, &e);
        // re-encoding is stable
        prop_assert_eq!(encode_frame(&d).unwrap(), f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn arbitrary_chunking(es in prop::collection::vec(envelope(), 1..8), cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..12)) {
        let stream: Vec<u8> = es.iter().flat_map(|e| encode_frame(e).unwrap()).collect();
        let mut points: Vec<usize> = cuts.iter().map(|i| i.index(stream.len() + 1)).collect();
        points.push(0);
        points.push(stream.len());
        points.sort_unstable();
        let mut dec = FrameDecoder::new();
        let mut out = Vec::new();
        for w in points.windows(2) {
            dec.push(&stream[w[0]..w[1]]);
            while let Some(r) = dec.next_frame() {
                out.push(r.unwrap());
            }
        }
        prop_assert_eq!(out, es);
        prop_assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn single_byte_corruption_detected(e in envelope(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let f = encode_frame(&e).unwrap();
        let text = std::str::from_utf8(&f[4..]).unwrap();
        let start = 4 + text.find("\"data\":").unwrap() + 7;
        let end = f.len() - 1;
        let i = start + pos.index(end - start);
        let mut g = f.clone();
        g[i] ^= flip;
        prop_assert!(decode_frame(&g).is_err());
    }
}

#[test]
fn half_mebibyte_payload_round_trip() {
    let s: String = (0..512 * 1024).map(|i| (b'a' + (i * 7 % 26) as u8) as char).collect();
    let e = Envelope::new("/bench", 7, "BenchPayload", Value::String(s));
    let f = encode_frame(&e).unwrap();
    assert_eq!(decode_frame(&f).unwrap().0, e);
}
