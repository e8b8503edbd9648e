mod common;

use std::io::Write;
use std::net::TcpStream;
use std::time::{Duration, Instant};

use buildnet::client::{client_predict, Client, ClientError, DEFAULT_TIMEOUT};
use buildnet::protocol::*;
use buildnet_core::encoder::EncoderContext;
use buildnet_core::forward_model::MacroState;
use buildnet_core::policy::SelectionMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TIMEOUT: Duration = Duration::from_secs(2);

fn vector_request(id: &str, v: Vec<f64>) -> PredictRequest {
    PredictRequest { protocol: PROTOCOL_VERSION, request_id: id.into(), state: RequestState::Vector(v), policy: None }
}

fn random_vector(rng: &mut impl Rng) -> Vec<f64> {
    (0..210).map(|_| if rng.gen_bool(0.3) { rng.gen() } else { 0.0 }).collect()
}

#[test]
fn valid_request_gets_a_normalized_named_distribution() {
    let server = common::start(SelectionMode::Greedy, 0);
    let mut client = Client::connect(server.addr, TIMEOUT).unwrap();
    let reply = client.predict(&vector_request("r1", vec![0.1; 210])).unwrap();
    assert_eq!(reply.request_id, "r1");
    assert_eq!(reply.distribution.len(), 58);
    assert_eq!(reply.distribution[0].build, "probe");
    let total: f64 = reply.distribution.iter().map(|b| b.p).sum();
    assert!((total - 1.0).abs() < 1e-6);
    assert_eq!(reply.model_version, server.version);
    let carrier = reply.distribution.iter().find(|b| b.build == "carrier").unwrap();
    assert_eq!(carrier.p, 0.0);
    assert_eq!(reply.distribution[reply.chosen_build.index].build, reply.chosen_build.name);
    server.stop();
}

#[test]
fn bad_requests_get_errors_and_the_connection_survives() {
    let server = common::start(SelectionMode::Greedy, 0);
    let mut client = Client::connect(server.addr, TIMEOUT).unwrap();
    let short = client.exchange(&vector_request("short", vec![0.0; 209])).unwrap();
    assert!(matches!(&short, Reply::Error(e) if e.code == ErrorCode::InvalidRequest && e.request_id == "short"));
    let out_of_range = client.exchange(&vector_request("big", vec![2.0; 210])).unwrap();
    assert!(matches!(out_of_range, Reply::Error(e) if e.code == ErrorCode::InvalidRequest));
    let garbage = client.exchange_raw(b"not json").unwrap();
    assert!(matches!(garbage, Reply::Error(e) if e.code == ErrorCode::Malformed));
    let wrong_shape = client.exchange_raw(br#"{"request_id":"w","state":{}}"#).unwrap();
    assert!(matches!(wrong_shape, Reply::Error(e) if e.code == ErrorCode::Malformed && e.request_id == "w"));
    let mut future = vector_request("v", vec![0.0; 210]);
    future.protocol = 9;
    assert!(matches!(client.exchange(&future).unwrap(), Reply::Error(e) if e.code == ErrorCode::UnsupportedProtocol));
    let mut bad_policy = vector_request("p", vec![0.0; 210]);
    bad_policy.policy = Some(PolicyOverride { exclude: Some(vec!["battlecruiser".into()]), ..Default::default() });
    assert!(matches!(client.exchange(&bad_policy).unwrap(), Reply::Error(_)));
    assert!(client.predict(&vector_request("ok", vec![0.0; 210])).is_ok());
    server.stop();
}

#[test]
fn structured_states_match_their_encoding() {
    let server = common::start(SelectionMode::Greedy, 0);
    let ctx = EncoderContext::default_pvt();
    let state = MacroState::initial(&ctx.catalog);
    let mut client = Client::connect(server.addr, TIMEOUT).unwrap();
    let structured = PredictRequest {
        protocol: PROTOCOL_VERSION,
        request_id: "m".into(),
        state: RequestState::Macro(state.clone()),
        policy: None,
    };
    let a = client.predict(&structured).unwrap();
    let b = client.predict(&vector_request("v", ctx.encode(&state).0.to_vec())).unwrap();
    assert_eq!(a.distribution, b.distribution);
    let mut broken = state;
    broken.own_count.pop();
    let bad = PredictRequest { state: RequestState::Macro(broken), ..structured };
    assert!(matches!(client.exchange(&bad).unwrap(), Reply::Error(e) if e.code == ErrorCode::InvalidRequest));
    server.stop();
}

#[test]
fn greedy_is_repeatable_across_restarts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let requests: Vec<_> = (0..50).map(|i| vector_request(&i.to_string(), random_vector(&mut rng))).collect();
    let run = || {
        let server = common::start(SelectionMode::Greedy, 0);
        let mut client = Client::connect(server.addr, TIMEOUT).unwrap();
        let out: Vec<_> = requests.iter().map(|r| client.predict(r).unwrap()).collect();
        server.stop();
        out
    };
    let (first, second) = (run(), run());
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.chosen_build, b.chosen_build);
        assert_eq!(a.distribution, b.distribution);
    }
}

#[test]
fn probabilistic_choices_replay_per_connection() {
    let req = vector_request("x", vec![0.2; 210]);
    let run = || {
        let server = common::start(SelectionMode::Probabilistic, 42);
        let mut client = Client::connect(server.addr, TIMEOUT).unwrap();
        let picks: Vec<usize> = (0..40).map(|_| client.predict(&req).unwrap().chosen_build.index).collect();
        server.stop();
        picks
    };
    let picks = run();
    assert_eq!(picks, run());
    assert!(picks.iter().any(|&p| p != picks[0]), "an untrained net should not always pick the same build");
}

#[test]
fn concurrent_clients_never_see_interleaved_replies() {
    let server = common::start(SelectionMode::Greedy, 0);
    let threads: Vec<_> = (0..4)
        .map(|t| {
            let addr = server.addr;
            std::thread::spawn(move || {
                let mut client = Client::connect(addr, TIMEOUT).unwrap();
                for i in 0..100 {
                    let id = format!("{t}-{i}");
                    let len = if i % 7 == 0 { 10 } else { 210 };
                    match client.exchange(&vector_request(&id, vec![0.05; len])).unwrap() {
                        Reply::Prediction(p) => assert_eq!(p.request_id, id),
                        Reply::Error(e) => {
                            assert_eq!(e.request_id, id);
                            assert_eq!(len, 10);
                        }
                    }
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    server.stop();
}

#[test]
fn sequential_latency_stays_low() {
    let server = common::start(SelectionMode::Greedy, 0);
    let mut client = Client::connect(server.addr, DEFAULT_TIMEOUT).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut times: Vec<Duration> = (0..1000)
        .map(|i| {
            let req = vector_request(&i.to_string(), random_vector(&mut rng));
            let t = Instant::now();
            client.predict(&req).unwrap();
            t.elapsed()
        })
        .collect();
    times.sort();
    let p99 = times[989];
    assert!(p99 < Duration::from_millis(10), "p99 {p99:?}");
    server.stop();
}

#[test]
fn unreachable_server_is_a_connection_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = client_predict(("127.0.0.1", port), &vector_request("x", vec![0.0; 210]), DEFAULT_TIMEOUT).unwrap_err();
    assert!(matches!(err, ClientError::Connect(_)), "{err:?}");
}

#[test]
fn silent_server_is_a_timeout() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let mut client = Client::connect(addr, Duration::from_millis(50)).unwrap();
    let err = client.predict(&vector_request("x", vec![0.0; 210])).unwrap_err();
    assert!(matches!(err, ClientError::Timeout(_)), "{err:?}");
}

#[test]
fn garbage_reply_is_malformed() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let t = std::thread::spawn(move || {
        let (mut s, _): (TcpStream, _) = listener.accept().unwrap();
        let _ = read_frame(&mut s);
        s.write_all(&[0, 0, 0, 3, b'x', b'y', b'z']).unwrap();
    });
    let mut client = Client::connect(addr, TIMEOUT).unwrap();
    let err = client.predict(&vector_request("x", vec![0.0; 210])).unwrap_err();
    assert!(matches!(err, ClientError::Malformed(_)), "{err:?}");
    t.join().unwrap();
}

#[test]
fn oversized_frames_are_refused() {
    let server = common::start(SelectionMode::Greedy, 0);
    let mut s = TcpStream::connect(server.addr).unwrap();
    s.write_all(&(MAX_MESSAGE_BYTES + 1).to_be_bytes()).unwrap();
    let reply: Reply = serde_json::from_slice(&read_frame(&mut s).unwrap()).unwrap();
    assert!(matches!(reply, Reply::Error(e) if e.code == ErrorCode::TooLarge));
    server.stop();
}

#[test]
fn incompatible_model_fails_at_startup() {
    use buildnet::server::{Server, ServiceConfig};
    use buildnet_core::norms::NormalizationTable;
    let ctx = EncoderContext::default_pvt();
    let mut norms: NormalizationTable = ctx.norms.clone();
    norms.supply = 100.0;
    let other = EncoderContext::new(ctx.catalog.clone(), norms);
    let policy = Default::default();
    let result = Server::bind("127.0.0.1:0", ServiceConfig { model: common::model(&ctx, 0), ctx: other, policy, seed: 0 });
    assert!(result.is_err());
}
