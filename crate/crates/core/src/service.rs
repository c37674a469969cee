//! Local HTTP control surface and live-state subscription stream.
//!
//! One engine thread owns the [`Session`]. HTTP handlers, input sockets and
//! subscribers talk to it through a command channel, so every mutation lands
//! between two engine steps.

use std::fs;
use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use tiny_http::{Header, Method, Response, Server};

use crate::engine::{Cursor, EngineError, InputEvent, Session};
use crate::grammar::TranscriptToken;
use crate::harness::live::handshake_line;
use crate::harness::{listen_persistent, DeviceEvent, HarnessError, LiveSource, StreamRecord};
use crate::mapper::sink::{EventSink, NullSink};
use crate::mapper::validate_document;
use crate::skeleton::SkeletonFrame;

pub const DEFAULT_PORT: u16 = 7878;
pub const LIVE_STREAM: &str = "livestate";
const PUSH_INTERVAL: Duration = Duration::from_millis(50);
const HEARTBEAT_INTERVAL: Duration = Duration::from_secs(1);
const ENGINE_POLL: Duration = Duration::from_millis(10);
const HTTP_WORKERS: usize = 4;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {what} port {port}: {source}")]
    Bind {
        what: &'static str,
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ports are on 127.0.0.1; 0 picks a free port.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub http_port: u16,
    pub live_port: u16,
    pub skeleton_port: Option<u16>,
    pub transcript_port: Option<u16>,
    pub buttons_port: Option<u16>,
    pub fixtures_dir: Option<PathBuf>,
}

impl ServiceConfig {
    /// HTTP on `port`, live state on `port + 1`, skeleton, transcript and
    /// button inputs on `port + 2..=port + 4`. Port 0 makes every one of
    /// them ephemeral.
    pub fn on_port(port: u16) -> Self {
        let next = |k: u16| if port == 0 { 0 } else { port.saturating_add(k) };
        Self {
            http_port: port,
            live_port: next(1),
            skeleton_port: Some(next(2)),
            transcript_port: Some(next(3)),
            buttons_port: Some(next(4)),
            fixtures_dir: None,
        }
    }

    pub fn without_inputs(mut self) -> Self {
        self.skeleton_port = None;
        self.transcript_port = None;
        self.buttons_port = None;
        self
    }

    pub fn with_fixtures(mut self, dir: impl Into<PathBuf>) -> Self {
        self.fixtures_dir = Some(dir.into());
        self
    }
}

type Job = Box<dyn FnOnce(&mut Session) + Send>;

enum Command {
    Job(Job),
    Input(InputEvent),
    Subscribe(TcpStream),
    Shutdown,
}

/// Cloneable access to the engine thread.
#[derive(Clone)]
pub struct EngineHandle {
    tx: Sender<Command>,
}

impl EngineHandle {
    /// Runs `f` on the engine thread between steps and returns its result.
    pub fn call<T: Send + 'static>(&self, f: impl FnOnce(&mut Session) -> T + Send + 'static) -> Option<T> {
        let (reply_tx, reply_rx) = mpsc::channel();
        let job: Job = Box::new(move |s| {
            let _ = reply_tx.send(f(s));
        });
        self.tx.send(Command::Job(job)).ok()?;
        reply_rx.recv().ok()
    }

    pub fn push(&self, input: InputEvent) -> bool {
        self.tx.send(Command::Input(input)).is_ok()
    }
}

struct Subscriber {
    stream: TcpStream,
}

struct EngineThread {
    session: Session,
    sink: Box<dyn EventSink>,
    subscribers: Vec<Subscriber>,
    cursor: Cursor,
    pushed_tick: u64,
    last_push: Instant,
    last_input: Option<(Instant, u64)>,
}

impl EngineThread {
    fn run(mut self, rx: Receiver<Command>) {
        loop {
            match rx.recv_timeout(ENGINE_POLL) {
                Ok(Command::Job(job)) => job(&mut self.session),
                Ok(Command::Input(input)) => self.input(input),
                Ok(Command::Subscribe(stream)) => self.subscribe(stream),
                Ok(Command::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                Err(RecvTimeoutError::Timeout) => self.idle_tick(),
            }
            self.publish();
        }
        if let Ok(step) = self.session.finish() {
            let _ = self.sink.emit(&step.outputs);
        }
        let _ = self.sink.close();
    }

    fn input(&mut self, input: InputEvent) {
        match self.session.on_input(input) {
            Ok(step) => {
                if let Err(e) = self.sink.emit(&step.outputs) {
                    warn!("sink rejected events: {e}");
                }
            }
            Err(EngineError::StaleFrame { timestamp_ms, last_ms }) => {
                debug!("stale frame at {timestamp_ms} ms after {last_ms} ms");
                self.session.add_dropped_frames(1);
            }
            Err(e) => warn!("input rejected: {e}"),
        }
        if let Some(now) = self.session.now_ms() {
            self.last_input = Some((Instant::now(), now));
        }
    }

    fn idle_tick(&mut self) {
        let Some((at, t)) = self.last_input else {
            return;
        };
        let now = t + at.elapsed().as_millis() as u64;
        match self.session.tick(now) {
            Ok(step) => {
                let _ = self.sink.emit(&step.outputs);
            }
            Err(e) => warn!("tick failed: {e}"),
        }
    }

    fn subscribe(&mut self, mut stream: TcpStream) {
        if self.session.tick_count() != self.pushed_tick {
            self.push_delta();
        }
        let _ = stream.set_write_timeout(Some(Duration::from_secs(1)));
        let snapshot = serde_json::to_string(&self.session.snapshot()).expect("snapshot serializes");
        let hello = format!("{}\n{snapshot}\n", handshake_line(LIVE_STREAM));
        if stream.write_all(hello.as_bytes()).is_ok() {
            self.subscribers.push(Subscriber { stream });
        }
    }

    fn publish(&mut self) {
        let changed = self.session.tick_count() != self.pushed_tick;
        let since = self.last_push.elapsed();
        if changed && since >= PUSH_INTERVAL || since >= HEARTBEAT_INTERVAL {
            self.push_delta();
        }
    }

    fn push_delta(&mut self) {
        let delta = self.session.delta(&self.cursor);
        self.cursor = self.session.cursor();
        self.pushed_tick = self.session.tick_count();
        self.last_push = Instant::now();
        if self.subscribers.is_empty() {
            return;
        }
        let mut line = serde_json::to_string(&delta).expect("snapshot serializes");
        line.push('\n');
        self.subscribers
            .retain_mut(|s| s.stream.write_all(line.as_bytes()).is_ok());
    }
}

/// A running service; dropping it shuts everything down.
pub struct ServiceHandle {
    pub http_addr: SocketAddr,
    pub live_addr: SocketAddr,
    pub skeleton_addr: Option<SocketAddr>,
    pub transcript_addr: Option<SocketAddr>,
    pub buttons_addr: Option<SocketAddr>,
    engine: EngineHandle,
    server: Arc<Server>,
    stopping: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    closers: Vec<Box<dyn FnOnce() + Send>>,
}

impl ServiceHandle {
    pub fn engine(&self) -> &EngineHandle {
        &self.engine
    }

    /// Blocks until the HTTP workers exit.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        self.server.unblock();
        for _ in 0..HTTP_WORKERS {
            self.server.unblock();
        }
        for close in self.closers.drain(..) {
            close();
        }
        let _ = TcpStream::connect_timeout(&self.live_addr, Duration::from_millis(200));
        let _ = self.engine.tx.send(Command::Shutdown);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts the engine thread, HTTP workers, the live-state listener and the
/// optional input sockets. Output events go to a [`NullSink`].
pub fn serve(session: Session, config: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    serve_with_sink(session, config, Box::new(NullSink::default()))
}

pub fn serve_with_sink(
    session: Session,
    config: ServiceConfig,
    sink: Box<dyn EventSink>,
) -> Result<ServiceHandle, ServiceError> {
    let server = Server::http((Ipv4Addr::LOCALHOST, config.http_port)).map_err(|e| ServiceError::Bind {
        what: "http",
        port: config.http_port,
        source: std::io::Error::other(e.to_string()),
    })?;
    let http_addr = server
        .server_addr()
        .to_ip()
        .expect("tcp listener has an ip address");
    let live = TcpListener::bind((Ipv4Addr::LOCALHOST, config.live_port)).map_err(|source| ServiceError::Bind {
        what: "live state",
        port: config.live_port,
        source,
    })?;
    let live_addr = live.local_addr()?;

    let (tx, rx) = mpsc::channel();
    let engine = EngineHandle { tx };
    let stopping = Arc::new(AtomicBool::new(false));
    let server = Arc::new(server);
    let mut threads = Vec::new();
    let mut closers: Vec<Box<dyn FnOnce() + Send>> = Vec::new();

    let host = EngineThread {
        session,
        sink,
        subscribers: Vec::new(),
        cursor: Cursor::default(),
        pushed_tick: 0,
        last_push: Instant::now(),
        last_input: None,
    };
    threads.push(thread::Builder::new().name("engine".into()).spawn(move || host.run(rx))?);

    {
        let engine = engine.clone();
        let stopping = Arc::clone(&stopping);
        threads.push(thread::Builder::new().name("livestate".into()).spawn(move || {
            for conn in live.incoming() {
                if stopping.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = conn {
                    if engine.tx.send(Command::Subscribe(stream)).is_err() {
                        break;
                    }
                }
            }
        })?);
    }

    let mut input_addrs = [None, None, None];
    if let Some(port) = config.skeleton_port {
        let (addr, close, t) = forward_input::<SkeletonFrame>(port, &engine, InputEvent::Frame)?;
        input_addrs[0] = Some(addr);
        closers.push(close);
        threads.push(t);
    }
    if let Some(port) = config.transcript_port {
        let (addr, close, t) = forward_input::<TranscriptToken>(port, &engine, InputEvent::Token)?;
        input_addrs[1] = Some(addr);
        closers.push(close);
        threads.push(t);
    }
    if let Some(port) = config.buttons_port {
        let (addr, close, t) = forward_input::<DeviceEvent>(port, &engine, InputEvent::Device)?;
        input_addrs[2] = Some(addr);
        closers.push(close);
        threads.push(t);
    }

    let api = Arc::new(Api {
        engine: engine.clone(),
        fixtures_dir: config.fixtures_dir.clone(),
    });
    for i in 0..HTTP_WORKERS {
        let server = Arc::clone(&server);
        let api = Arc::clone(&api);
        let stopping = Arc::clone(&stopping);
        threads.push(thread::Builder::new().name(format!("http-{i}")).spawn(move || {
            while !stopping.load(Ordering::SeqCst) {
                match server.recv() {
                    Ok(request) => api.handle(request),
                    Err(_) => break,
                }
            }
        })?);
    }
    info!("serving http on {http_addr}, live state on {live_addr}");
    Ok(ServiceHandle {
        http_addr,
        live_addr,
        skeleton_addr: input_addrs[0],
        transcript_addr: input_addrs[1],
        buttons_addr: input_addrs[2],
        engine,
        server,
        stopping,
        threads,
        closers,
    })
}

type Forwarder = (SocketAddr, Box<dyn FnOnce() + Send>, JoinHandle<()>);

fn forward_input<R: StreamRecord>(
    port: u16,
    engine: &EngineHandle,
    wrap: fn(R) -> InputEvent,
) -> Result<Forwarder, ServiceError> {
    let mut source: LiveSource<R> = listen_persistent(port)?;
    let addr = source.local_addr();
    let (close_tx, close_rx) = mpsc::channel::<()>();
    let engine = engine.clone();
    let t = thread::Builder::new()
        .name(format!("input-{}", R::KIND.as_str()))
        .spawn(move || loop {
            if close_rx.try_recv().is_ok() {
                source.close();
                break;
            }
            if let Some(r) = source.recv_timeout(Duration::from_millis(50)) {
                if !engine.push(wrap(r)) {
                    break;
                }
            } else if source.is_finished() {
                break;
            }
        })?;
    let close: Box<dyn FnOnce() + Send> = Box::new(move || {
        let _ = close_tx.send(());
    });
    Ok((addr, close, t))
}

struct Api {
    engine: EngineHandle,
    fixtures_dir: Option<PathBuf>,
}

/// A response body with its status code.
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    fn json(status: u16, value: Value) -> Self {
        Reply {
            status,
            body: value.to_string(),
        }
    }

    fn raw(status: u16, body: String) -> Self {
        Reply { status, body }
    }

    fn error(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self::json(status, json!({"error": {"code": code, "message": message.into()}}))
    }

    fn not_found(what: &str) -> Self {
        Self::error(404, "NotFound", format!("no such {what}"))
    }

    fn engine_gone() -> Self {
        Self::error(503, "EngineStopped", "the engine is shutting down")
    }
}

fn engine_error(e: &EngineError) -> Reply {
    let status = match e {
        EngineError::IllegalTransition { .. } | EngineError::DuplicatePose(_) => 409,
        EngineError::InvalidScheme(errors) => {
            return Reply::json(400, json!({ "errors": errors }));
        }
        _ => 400,
    };
    Reply::error(status, e.code(), e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordingRequest {
    pose_id: String,
}

impl Api {
    fn handle(&self, mut request: tiny_http::Request) {
        let mut body = String::new();
        let reply = match request.as_reader().read_to_string(&mut body) {
            Ok(_) => {
                let path = request.url().split('?').next().unwrap_or("").to_string();
                self.route(request.method(), &path, &body)
            }
            Err(_) => Reply::error(400, "BadRequest", "request body is not UTF-8"),
        };
        let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
        let response = Response::from_string(reply.body)
            .with_status_code(reply.status)
            .with_header(header);
        if let Err(e) = request.respond(response) {
            debug!("client went away: {e}");
        }
    }

    fn route(&self, method: &Method, path: &str, body: &str) -> Reply {
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (method, segments.as_slice()) {
            (Method::Get, ["scheme"]) => self.get_scheme(),
            (Method::Put, ["scheme"]) => self.put_scheme(body),
            (Method::Post, ["scheme", "validate"]) => validate(body),
            (Method::Get, ["poses", id]) => self.get_pose(id),
            (Method::Post, ["session", "start"]) => self.control(|s| s.start()),
            (Method::Post, ["session", "stop"]) => self.control(|s| s.stop()),
            (Method::Post, ["recording", "start"]) => match serde_json::from_str::<RecordingRequest>(body) {
                Ok(req) => self.control(move |s| s.start_recording(&req.pose_id)),
                Err(e) => Reply::error(400, "BadRequest", e.to_string()),
            },
            (Method::Post, ["recording", "finish"]) => self.finish_recording(),
            (Method::Get, ["state"]) => self.state(),
            (Method::Get, ["fixtures"]) => self.list_fixtures(),
            (Method::Get, ["fixtures", name]) => self.fixture(name),
            (_, ["scheme"] | ["scheme", "validate"] | ["poses", _] | ["session", "start" | "stop"])
            | (_, ["recording", "start" | "finish"] | ["state"] | ["fixtures"] | ["fixtures", _]) => {
                Reply::error(405, "MethodNotAllowed", format!("{method} not allowed on {path}"))
            }
            _ => Reply::not_found("route"),
        }
    }

    fn get_scheme(&self) -> Reply {
        match self.engine.call(|s| s.scheme().to_canonical_json()) {
            Some(doc) => Reply::raw(200, doc),
            None => Reply::engine_gone(),
        }
    }

    fn put_scheme(&self, body: &str) -> Reply {
        let scheme = match validate_document(body) {
            Ok(s) => s,
            Err(errors) => return Reply::json(400, json!({ "errors": errors })),
        };
        let applied = self.engine.call(move |s| {
            s.set_scheme(scheme)
                .map(|_| s.scheme().to_canonical_json())
                .map_err(|e| engine_error(&e))
        });
        match applied {
            Some(Ok(doc)) => Reply::raw(200, doc),
            Some(Err(reply)) => reply,
            None => Reply::engine_gone(),
        }
    }

    fn get_pose(&self, id: &str) -> Reply {
        let id = id.to_string();
        match self.engine.call(move |s| s.scheme().pose(&id).cloned()) {
            Some(Some(pose)) => Reply::json(200, serde_json::to_value(pose).expect("pose serializes")),
            Some(None) => Reply::not_found("pose"),
            None => Reply::engine_gone(),
        }
    }

    fn control(
        &self,
        op: impl FnOnce(&mut Session) -> Result<crate::engine::Step, EngineError> + Send + 'static,
    ) -> Reply {
        let result = self.engine.call(move |s| {
            op(s).map(|_| s.mode().clone()).map_err(|e| engine_error(&e))
        });
        match result {
            Some(Ok(mode)) => Reply::json(200, json!({ "mode": mode })),
            Some(Err(reply)) => reply,
            None => Reply::engine_gone(),
        }
    }

    fn finish_recording(&self) -> Reply {
        match self.engine.call(|s| s.finish_recording().map_err(|e| engine_error(&e))) {
            Some(Ok(pose)) => Reply::json(200, json!({ "pose": pose })),
            Some(Err(reply)) => reply,
            None => Reply::engine_gone(),
        }
    }

    fn state(&self) -> Reply {
        match self.engine.call(|s| serde_json::to_value(s.snapshot()).expect("snapshot serializes")) {
            Some(v) => Reply::json(200, v),
            None => Reply::engine_gone(),
        }
    }

    fn list_fixtures(&self) -> Reply {
        let mut names = Vec::new();
        if let Some(entries) = self.fixtures_dir.as_ref().and_then(|d| fs::read_dir(d).ok()) {
            for entry in entries.flatten() {
                if entry.path().is_file() {
                    names.push(entry.file_name().to_string_lossy().into_owned());
                }
            }
        }
        names.sort();
        Reply::json(200, json!({ "fixtures": names }))
    }

    fn fixture(&self, name: &str) -> Reply {
        let Some(dir) = &self.fixtures_dir else {
            return Reply::not_found("fixture");
        };
        if name.is_empty() || name.starts_with('.') || name.contains(['/', '\\']) {
            return Reply::not_found("fixture");
        }
        match fs::read_to_string(dir.join(name)) {
            Ok(text) => Reply::raw(200, text),
            Err(_) => Reply::not_found("fixture"),
        }
    }
}

fn validate(body: &str) -> Reply {
    match validate_document(body) {
        Ok(_) => Reply::json(200, json!({"ok": true, "errors": []})),
        Err(errors) => Reply::json(200, json!({"ok": false, "errors": errors})),
    }
}
