//! Message generators, fault injection and the transport conformance suite.

use std::net::TcpListener;
use std::thread;
use std::time::{Duration, Instant};

use fedkit::coordinator::{AggregationMode, RoundPlan};
use fedkit::nn::{build_model, ArchitectureSpec, ModelWeights, OptimConfig, StageSpec, Tensor};
use fedkit::trainer::{DeviceClass, NodeProfile};
use fedkit::wire::{
    client_config, decode, decode_frame, encode, in_process_pair, ClientMetrics, Identity,
    Message, SecureClientTransport, SecureServerTransport, SessionConfig, TcpTransport,
    Transport, TransportMode, WireError, CHECKSUM_LEN, HEADER_LEN, PROTOCOL_VERSION,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn word(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => 'é',
            1 => '✓',
            _ => rng.random_range('a'..='z'),
        })
        .collect()
}

/// Arbitrary bit patterns, NaNs and infinities included.
pub fn weights(rng: &mut ChaCha8Rng) -> ModelWeights {
    let count = rng.random_range(0..4);
    let entries = (0..count)
        .map(|i| {
            let rank = rng.random_range(1..=3);
            let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..5)).collect();
            let len = shape.iter().product();
            let data = (0..len).map(|_| f32::from_bits(rng.random())).collect();
            (format!("{}{i}", word(rng, 6)), Tensor::new(shape, data).unwrap())
        })
        .collect();
    ModelWeights::new(entries).unwrap()
}

pub fn profile(rng: &mut ChaCha8Rng) -> NodeProfile {
    NodeProfile {
        client_id: word(rng, 12),
        epochs_per_round: rng.random_range(1..20),
        batch_size: rng.random_range(1..64),
        train_fraction: rng.random_range(0.05..1.0),
        device_class: [DeviceClass::Gpu, DeviceClass::Cpu, DeviceClass::Raspberry][rng.random_range(0..3)],
        speed_iters_per_s: rng.random_range(0.01..100.0),
    }
}

pub fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..6) {
        0 => Message::Register {
            client_id: word(rng, 16),
            profile: profile(rng),
        },
        1 => Message::ConfigPush(Box::new(SessionConfig {
            profile: profile(rng),
            arch: ArchitectureSpec {
                input_size: rng.random_range(8..64),
                channels: rng.random_range(1..4),
                num_classes: rng.random_range(2..10),
                stem_stride: rng.random_range(1..3),
                stages: (0..rng.random_range(1..4))
                    .map(|_| StageSpec {
                        blocks: rng.random_range(1..3),
                        width: rng.random_range(1..64),
                    })
                    .collect(),
            },
            plan: RoundPlan {
                total_rounds: rng.random_range(1..100),
                round_timeout: Duration::new(rng.random_range(0..10_000), rng.random_range(0..1_000_000_000)),
                aggregation: if rng.random() { AggregationMode::Weighted } else { AggregationMode::Uniform },
            },
            optim: OptimConfig {
                learning_rate: rng.random_range(1e-4..1.0),
                momentum: rng.random_range(0.0..0.99),
                patience: rng.random_range(0..10),
                factor: rng.random_range(0.1..0.9),
                min_lr: rng.random_range(0.0..1e-3),
                threshold: rng.random_range(0.0..0.1),
                clip_norm: if rng.random() { Some(rng.random_range(0.1..10.0)) } else { None },
            },
            seed: rng.random(),
        })),
        2 => Message::WeightsDown {
            round: rng.random(),
            weights: weights(rng),
        },
        3 => Message::TrainResult {
            round: rng.random(),
            weights: weights(rng),
            sample_count: rng.random_range(1..u64::MAX),
            metrics: ClientMetrics {
                iterations_per_second: f64::from_bits(rng.random()),
                epoch_losses: (0..rng.random_range(0..12)).map(|_| rng.random()).collect(),
                wall_time_s: rng.random(),
                steps: rng.random(),
            },
        },
        4 => Message::EvalResult {
            round: rng.random(),
            accuracy: rng.random(),
            loss: f64::from_bits(rng.random()),
        },
        _ => Message::Finish {
            reason: word(rng, 40),
        },
    }
}

/// Rewrites the trailing checksum so only the intended field is wrong.
pub fn reseal(frame: &mut [u8]) {
    let body = frame.len() - CHECKSUM_LEN;
    let crc = crc32fast::hash(&frame[..body]);
    frame[body..].copy_from_slice(&crc.to_le_bytes());
}

pub fn every_bit_flip_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let frame = encode(&random_message(&mut rng));
        for byte in HEADER_LEN..frame.len() {
            for bit in 0..8 {
                let mut bad = frame.clone();
                bad[byte] ^= 1 << bit;
                match decode(&bad) {
                    Err(WireError::Corruption { .. }) => {}
                    other => panic!("flip at {byte}.{bit}: {other:?}"),
                }
            }
        }
    }
}

pub fn every_truncation_is_incomplete() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let frame = encode(&random_message(&mut rng));
        for cut in 0..frame.len() {
            match decode(&frame[..cut]) {
                Err(WireError::Incomplete { needed, available }) => {
                    assert_eq!(available, cut);
                    assert!(needed > cut);
                }
                other => panic!("cut at {cut} of {}: {other:?}", frame.len()),
            }
        }
    }
}

pub fn header_faults_are_protocol_errors() {
    let frame = encode(&Message::finish("done"));

    let mut bad = frame.clone();
    bad[0] = b'X';
    assert!(matches!(decode(&bad), Err(WireError::Protocol(_))));

    let mut bad = frame.clone();
    bad[4..6].copy_from_slice(&999u16.to_le_bytes());
    match decode(&bad) {
        Err(WireError::Protocol(m)) => {
            assert!(m.contains("999") && m.contains(&PROTOCOL_VERSION.to_string()), "{m}");
        }
        other => panic!("{other:?}"),
    }

    let mut bad = frame.clone();
    bad[6] = 42;
    reseal(&mut bad);
    assert!(matches!(decode(&bad), Err(WireError::Protocol(_))));

    let mut bad = frame.clone();
    bad[7..15].copy_from_slice(&(1u64 << 40).to_le_bytes());
    assert!(matches!(decode(&bad), Err(WireError::Protocol(_))));
    assert!(matches!(decode_frame(&frame, 4), Err(WireError::Protocol(_))));
}

pub fn malawi_train_result_round_trips() {
    let msg = Message::TrainResult {
        round: 7,
        weights: build_model(&ArchitectureSpec::desk(), 1).unwrap(),
        sample_count: 240,
        metrics: ClientMetrics {
            iterations_per_second: 0.3,
            epoch_losses: vec![1.2, 0.9, 0.7],
            wall_time_s: 2400.0,
            steps: 360,
        },
    };
    assert_eq!(decode(&encode(&msg)).unwrap(), msg);
}

pub fn concatenated_frames_split_cleanly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let msgs: Vec<Message> = (0..30).map(|_| random_message(&mut rng)).collect();
    let stream: Vec<u8> = msgs.iter().flat_map(encode).collect();
    let mut at = 0;
    for m in &msgs {
        let (got, used) = decode_frame(&stream[at..], usize::MAX).unwrap();
        assert_eq!(encode(&got), encode(m));
        at += used;
    }
    assert_eq!(at, stream.len());
}

fn ordered_delivery<A: Transport, B: Transport>(a: &mut A, b: &mut B) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let msgs: Vec<Message> = (0..1000).map(|_| random_message(&mut rng)).collect();
    thread::scope(|s| {
        let sent = &msgs;
        s.spawn(move || {
            for m in sent {
                a.send(m).unwrap();
            }
        });
        for (i, m) in msgs.iter().enumerate() {
            let got = b.recv(Some(Duration::from_secs(10))).unwrap();
            assert_eq!(encode(&got), encode(m), "message {i}");
        }
    });
}

fn default_model_round_trips<A: Transport, B: Transport>(a: &mut A, b: &mut B) {
    let weights = build_model(&ArchitectureSpec::default(), 9).unwrap();
    let msg = Message::WeightsDown { round: 3, weights: weights.clone() };
    thread::scope(|s| {
        s.spawn(|| a.send(&msg).unwrap());
        match b.recv(Some(Duration::from_secs(30))).unwrap() {
            Message::WeightsDown { round, weights: got } => {
                assert_eq!(round, 3);
                assert_eq!(got.value_bytes(), weights.value_bytes());
                assert_eq!(got.manifest_hash(), weights.manifest_hash());
            }
            other => panic!("{}", other.kind()),
        }
    });
}

fn silent_peer_times_out<B: Transport>(b: &mut B) {
    let start = Instant::now();
    match b.recv(Some(Duration::from_millis(10))) {
        Err(WireError::Timeout(elapsed)) => {
            assert!(elapsed >= Duration::from_millis(9), "{elapsed:?}");
            assert!(start.elapsed() < Duration::from_millis(500));
        }
        other => panic!("{other:?}"),
    }
}

fn disconnect_is_reported<A: Transport, B: Transport>(a: A, b: &mut B) {
    drop(a);
    match b.recv(Some(Duration::from_secs(5))) {
        Err(WireError::ConnectionLost(_)) => {}
        other => panic!("{other:?}"),
    }
}

pub fn conformance<A: Transport, B: Transport>(mut a: A, mut b: B, mode: TransportMode) {
    assert_eq!(a.mode(), mode);
    assert_eq!(b.mode(), mode);
    ordered_delivery(&mut a, &mut b);
    ordered_delivery(&mut b, &mut a);
    default_model_round_trips(&mut a, &mut b);
    silent_peer_times_out(&mut b);
    a.send(&Message::finish("after timeout")).unwrap();
    assert_eq!(b.recv(Some(Duration::from_secs(5))).unwrap(), Message::finish("after timeout"));
    disconnect_is_reported(a, &mut b);
}

pub fn in_process_conformance() {
    let (a, b) = in_process_pair();
    conformance(a, b, TransportMode::InProcess);
}

pub fn tcp_plain_conformance() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let client = thread::spawn(move || TcpTransport::connect(addr).unwrap());
    let server = TcpTransport::accept(&listener).unwrap();
    conformance(client.join().unwrap(), server, TransportMode::TcpPlain);
}

pub fn tcp_secure_conformance() {
    let identity = Identity::self_signed(&["localhost"]).unwrap();
    let server_cfg = identity.server_config().unwrap();
    let client_cfg = client_config(std::slice::from_ref(&identity.cert_der)).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let client = thread::spawn(move || SecureClientTransport::connect_tls(addr, "localhost", client_cfg).unwrap());
    let server = SecureServerTransport::accept_tls(&listener, server_cfg).unwrap();
    conformance(client.join().unwrap(), server, TransportMode::TcpSecure);
}

pub fn tcp_secure_rejects_untrusted_server() {
    let identity = Identity::self_signed(&["localhost"]).unwrap();
    let impostor = Identity::self_signed(&["localhost"]).unwrap();
    let server_cfg = identity.server_config().unwrap();
    let client_cfg = client_config(std::slice::from_ref(&impostor.cert_der)).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || SecureServerTransport::accept_tls(&listener, server_cfg).map(|_| ()));
    let client = SecureClientTransport::connect_tls(addr, "localhost", client_cfg);
    assert!(matches!(client, Err(WireError::Tls(_))), "client accepted an untrusted certificate");
    assert!(server.join().unwrap().is_err());
}

pub fn tcp_secure_traffic_is_not_plaintext() {
    use std::io::Read;
    // a relay that records what crosses the socket
    let identity = Identity::self_signed(&["localhost"]).unwrap();
    let server_cfg = identity.server_config().unwrap();
    let client_cfg = client_config(std::slice::from_ref(&identity.cert_der)).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let relay = TcpListener::bind("127.0.0.1:0").unwrap();
    let (server_addr, relay_addr) = (listener.local_addr().unwrap(), relay.local_addr().unwrap());

    let tap = thread::spawn(move || {
        let (mut inbound, _) = relay.accept().unwrap();
        let mut outbound = std::net::TcpStream::connect(server_addr).unwrap();
        let mut back_in = inbound.try_clone().unwrap();
        let mut back_out = outbound.try_clone().unwrap();
        let reverse = thread::spawn(move || std::io::copy(&mut back_out, &mut back_in).ok());
        let mut seen = Vec::new();
        let mut chunk = [0u8; 4096];
        loop {
            match inbound.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    seen.extend_from_slice(&chunk[..n]);
                    std::io::Write::write_all(&mut outbound, &chunk[..n]).unwrap();
                }
            }
        }
        let _ = outbound.shutdown(std::net::Shutdown::Both);
        reverse.join().unwrap();
        seen
    });

    let client = thread::spawn(move || {
        let mut c = SecureClientTransport::connect_tls(relay_addr, "localhost", client_cfg).unwrap();
        c.send(&Message::finish("plaintext-marker-0123456789")).unwrap();
        c
    });
    let mut server = SecureServerTransport::accept_tls(&listener, server_cfg).unwrap();
    let got = server.recv(Some(Duration::from_secs(5))).unwrap();
    assert_eq!(got, Message::finish("plaintext-marker-0123456789"));
    drop(client.join().unwrap());
    drop(server);
    let seen = tap.join().unwrap();
    assert!(!seen.is_empty());
    assert!(!seen.windows(4).any(|w| w == b"FEDW"), "frame magic visible on the wire");
    assert!(!seen.windows(16).any(|w| w == b"plaintext-marker"));
}

/// Encodes, decodes and re-encodes `cases` random messages; panics on the
/// first one that does not come back bit-exact.
pub fn round_trips(cases: u64) {
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msg = random_message(&mut rng);
        let bytes = encode(&msg);
        let back = decode(&bytes).unwrap_or_else(|e| panic!("case {seed}: {e}"));
        assert_eq!(encode(&back), bytes, "case {seed}");
    }
}
