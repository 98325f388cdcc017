//! Threaded TCP policy server, one thread per connection.
//!
//! Sessions are keyed by `session_id` and may span connections. Within a
//! session requests are handled one at a time and `seq` must strictly
//! increase.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{self, codes, ErrorBody, ErrorResponse, NavRequest, NavResponse};
use crate::grammar::ActionUnits;
use crate::sim::{ExecMode, Policy, World};

/// Creates the world and policy for a new session id.
pub type PolicyFactory = Arc<dyn Fn(&str) -> Result<(Arc<World>, Box<dyn Policy>), String> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServerConfig {
    pub exec_mode: ExecMode,
    pub units: ActionUnits,
    pub k_max: usize,
    /// Idle connections are dropped after this long.
    pub read_timeout: Option<Duration>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            exec_mode: ExecMode::Entropy,
            units: ActionUnits::default(),
            k_max: crate::ids::DEFAULT_K_MAX,
            read_timeout: Some(Duration::from_secs(300)),
        }
    }
}

struct Session {
    world: Arc<World>,
    policy: Box<dyn Policy>,
    last_seq: Option<u64>,
}

struct Shared {
    config: ServerConfig,
    factory: PolicyFactory,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    stop: AtomicBool,
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    fn stop_accepting(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

pub fn serve<A: ToSocketAddrs>(addr: A, config: ServerConfig, factory: PolicyFactory) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        config,
        factory,
        sessions: Mutex::new(HashMap::new()),
        stop: AtomicBool::new(false),
    });
    let accept_shared = Arc::clone(&shared);
    let accept = thread::Builder::new()
        .name("chunknav-accept".into())
        .spawn(move || accept_loop(listener, accept_shared))?;
    Ok(ServerHandle {
        addr,
        shared,
        accept: Some(accept),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let conn_shared = Arc::clone(&shared);
        let _ = thread::Builder::new()
            .name("chunknav-conn".into())
            .spawn(move || {
                let _ = handle_connection(stream, &conn_shared);
            });
    }
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(shared.config.read_timeout)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(body) = wire::read_frame(&mut reader)? {
        let reply = handle_frame(&body, shared);
        wire::write_frame(&mut writer, &reply)?;
    }
    Ok(())
}

fn error_reply(session_id: Option<String>, seq: Option<u64>, code: &str, message: String) -> Vec<u8> {
    wire::encode(&ErrorResponse {
        session_id,
        seq,
        error: ErrorBody {
            code: code.to_owned(),
            message,
        },
    })
}

/// Handles one request body and returns the encoded reply.
fn handle_frame(body: &[u8], shared: &Shared) -> Vec<u8> {
    let started = Instant::now();
    let req: NavRequest = match wire::decode(body) {
        Ok(r) => r,
        Err(e) => {
            // echo what we can recover
            let loose: Option<serde_json::Value> = serde_json::from_slice(body).ok();
            let seq = loose.as_ref().and_then(|v| v.get("seq")).and_then(|s| s.as_u64());
            let sid = loose
                .as_ref()
                .and_then(|v| v.get("session_id"))
                .and_then(|s| s.as_str())
                .map(str::to_owned);
            return error_reply(sid, seq, codes::MALFORMED, e.to_string());
        }
    };
    let sid = Some(req.session_id.clone());
    let session = {
        let mut sessions = shared.sessions.lock().expect("session map poisoned");
        match sessions.get(&req.session_id) {
            Some(s) => Arc::clone(s),
            None => match (shared.factory)(&req.session_id) {
                Ok((world, policy)) => {
                    let s = Arc::new(Mutex::new(Session {
                        world,
                        policy,
                        last_seq: None,
                    }));
                    sessions.insert(req.session_id.clone(), Arc::clone(&s));
                    s
                }
                Err(msg) => return error_reply(sid, Some(req.seq), codes::SESSION_REJECTED, msg),
            },
        }
    };
    let mut session = match session.lock() {
        Ok(s) => s,
        Err(_) => {
            return error_reply(sid, Some(req.seq), codes::POLICY_FAILURE, "session state poisoned".into())
        }
    };
    if let Some(last) = session.last_seq {
        if req.seq <= last {
            return error_reply(
                sid,
                Some(req.seq),
                codes::OUT_OF_ORDER,
                format!("seq {} does not follow {last}", req.seq),
            );
        }
    }
    session.last_seq = Some(req.seq);
    let cfg = &shared.config;
    let pose = req.observation.pose();
    let Session { world, policy, .. } = &mut *session;
    let out = match policy.predict(world, &pose, cfg.k_max) {
        Ok(o) if !o.predictions.is_empty() => o,
        Ok(_) => return error_reply(sid, Some(req.seq), codes::POLICY_FAILURE, "empty prediction".into()),
        Err(e) => return error_reply(sid, Some(req.seq), codes::POLICY_FAILURE, e.to_string()),
    };
    let (entropies, t_star) = match cfg.exec_mode.horizon(&out.predictions) {
        Ok(h) => h,
        Err(e) => return error_reply(sid, Some(req.seq), codes::POLICY_FAILURE, e.to_string()),
    };
    let chunks = out.predictions.iter().map(|p| p.chunk.render(&cfg.units).text).collect();
    wire::encode(&NavResponse {
        session_id: req.session_id,
        seq: req.seq,
        chunks,
        entropies,
        t_star,
        server_latency_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
