//! Threaded TCP decision service: one thread per connection, a shared
//! read-only model, and a per-connection random stream.

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use buildnet_core::encoder::{EncoderContext, StateVector, STATE_DIM};
use buildnet_core::error::PolicyError;
use buildnet_core::nn::Model;
use buildnet_core::policy::{decide_vector, DecisionPolicy, ExclusionSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::protocol::*;

const POLL: Duration = Duration::from_millis(50);
const FRAME_DEADLINE: Duration = Duration::from_secs(5);

pub struct ServiceConfig {
    pub model: Model,
    pub ctx: EncoderContext,
    pub policy: DecisionPolicy,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("model does not fit the loaded tables: {0}")]
    Incompatible(#[from] PolicyError),
}

struct Shared {
    model: Model,
    ctx: EncoderContext,
    policy: DecisionPolicy,
    seed: u64,
    version: String,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
    shutdown: Arc<AtomicBool>,
}

/// Stops the accept loop; connections finish the request they are on.
#[derive(Clone)]
pub struct ShutdownHandle(Arc<AtomicBool>);

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_shutdown(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

impl Server {
    pub fn bind(addr: &str, config: ServiceConfig) -> Result<Server, ServeError> {
        config.model.check_compatible(&config.ctx)?;
        let bind_err = |source| ServeError::Bind { addr: addr.to_string(), source };
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(bind_err)?.collect();
        let listener = TcpListener::bind(&addrs[..]).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        let version = config.model.fingerprint();
        Ok(Server {
            listener,
            shared: Arc::new(Shared {
                model: config.model,
                ctx: config.ctx,
                policy: config.policy,
                seed: config.seed,
                version,
            }),
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle(self.shutdown.clone())
    }

    pub fn model_version(&self) -> &str {
        &self.shared.version
    }

    /// Accepts until shut down, then waits for open connections to close
    /// or notice the shutdown.
    pub fn run(self) -> io::Result<()> {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        let mut next_id = 0u64;
        while !self.shutdown.load(Ordering::SeqCst) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    let (shared, flag, id) = (self.shared.clone(), self.shutdown.clone(), next_id);
                    next_id += 1;
                    log::debug!("connection {id} from {peer}");
                    workers.push(thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, &shared, &flag, id) {
                            log::debug!("connection {id} ended: {e}");
                        }
                    }));
                    workers.retain(|w| !w.is_finished());
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }
}

/// Waits for the next frame to start, checking the shutdown flag between
/// polls. `false` means stop serving this connection.
fn await_frame(stream: &TcpStream, flag: &AtomicBool) -> io::Result<bool> {
    stream.set_read_timeout(Some(POLL))?;
    let mut byte = [0u8; 1];
    loop {
        if flag.load(Ordering::SeqCst) {
            return Ok(false);
        }
        match stream.peek(&mut byte) {
            Ok(0) => return Ok(false),
            Ok(_) => return Ok(true),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {}
            Err(e) => return Err(e),
        }
    }
}

fn serve_connection(mut stream: TcpStream, shared: &Shared, flag: &AtomicBool, id: u64) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(shared.seed);
    rng.set_stream(id);
    while await_frame(&stream, flag)? {
        stream.set_read_timeout(Some(FRAME_DEADLINE))?;
        let payload = match read_frame(&mut stream) {
            Ok(p) => p,
            Err(FrameError::Closed) => return Ok(()),
            Err(FrameError::TooLarge(n)) => {
                let reply = error_reply(String::new(), ErrorCode::TooLarge, format!("{n} byte message exceeds the limit"));
                write_frame(&mut stream, &serde_json::to_vec(&reply).expect("replies serialize"))?;
                return Ok(());
            }
            Err(FrameError::Io(e)) => return Err(e),
        };
        let reply = handle_payload(&payload, shared, &mut rng);
        write_frame(&mut stream, &serde_json::to_vec(&reply).expect("replies serialize"))?;
    }
    Ok(())
}

fn error_reply(request_id: String, code: ErrorCode, message: String) -> Reply {
    Reply::Error(ErrorResponse { request_id, code, message })
}

fn handle_payload(payload: &[u8], shared: &Shared, rng: &mut ChaCha8Rng) -> Reply {
    let started = Instant::now();
    let request: PredictRequest = match serde_json::from_slice(payload) {
        Ok(r) => r,
        Err(e) => {
            // Echo the id when the payload is JSON but not a valid request.
            let id = serde_json::from_slice::<serde_json::Value>(payload)
                .ok()
                .and_then(|v| v.get("request_id").and_then(|i| i.as_str()).map(String::from))
                .unwrap_or_default();
            return error_reply(id, ErrorCode::Malformed, e.to_string());
        }
    };
    let id = request.request_id.clone();
    if request.protocol != PROTOCOL_VERSION {
        return error_reply(id, ErrorCode::UnsupportedProtocol, format!("protocol {} is not supported", request.protocol));
    }
    match predict(&request, shared, rng) {
        Ok((build, distribution)) => {
            let builds = shared.ctx.catalog.builds();
            Reply::Prediction(PredictResponse {
                request_id: id,
                chosen_build: ChosenBuild { name: builds[build].name.clone(), index: build },
                distribution: builds
                    .iter()
                    .zip(distribution)
                    .map(|(b, p)| BuildProbability { build: b.name.clone(), p })
                    .collect(),
                model_version: shared.version.clone(),
                latency_micros: started.elapsed().as_micros() as u64,
            })
        }
        Err(message) => error_reply(id, ErrorCode::InvalidRequest, message),
    }
}

/// Applies a request's policy override on top of the server default.
pub fn resolve_policy(
    base: &DecisionPolicy,
    over: Option<&PolicyOverride>,
    ctx: &EncoderContext,
) -> Result<DecisionPolicy, String> {
    let mut policy = base.clone();
    if let Some(o) = over {
        if let Some(mode) = &o.mode {
            policy.mode = mode.parse()?;
        }
        if let Some(blind) = o.blind {
            policy.blind = blind;
        }
        if let Some(names) = &o.exclude {
            policy.exclusions = ExclusionSet::from_names(&ctx.catalog, names.iter().map(String::as_str))?;
        }
    }
    Ok(policy)
}

fn predict(request: &PredictRequest, shared: &Shared, rng: &mut ChaCha8Rng) -> Result<(usize, Vec<f64>), String> {
    let policy = resolve_policy(&shared.policy, request.policy.as_ref(), &shared.ctx)?;
    let vector = match &request.state {
        RequestState::Vector(v) => {
            if v.len() != STATE_DIM {
                return Err(format!("state vector has {} entries, expected {STATE_DIM}", v.len()));
            }
            if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
                return Err(format!("state vector entry {i} is {} (outside [0, 1])", v[i]));
            }
            StateVector::from_slice(v).expect("length checked")
        }
        RequestState::Macro(state) => {
            if !state.is_well_formed() {
                return Err("structured state has wrong lengths or progress outside [0, 1]".into());
            }
            shared.ctx.encode(state)
        }
    };
    let decision = decide_vector(&shared.model, &vector, &policy, rng).map_err(|e| e.to_string())?;
    Ok((decision.build.index(), decision.distribution.into_vec()))
}
