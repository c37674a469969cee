//! Live socket ingestion: one TCP client, handshake line, then records.

use std::io::{BufRead, BufReader};
use std::marker::PhantomData;
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{info, warn};
use serde::Deserialize;

use super::queue::{BoundedQueue, DEFAULT_CAPACITY};
use super::{HarnessError, StreamRecord};

pub const STREAM_FORMAT_VERSION: u64 = 1;

#[derive(Deserialize)]
struct Handshake {
    stream: String,
    format_version: u64,
}

/// Checks a handshake line against the expected stream name.
pub fn check_handshake(line: &str, stream: &str) -> Result<(), String> {
    let h: Handshake = serde_json::from_str(line).map_err(|e| format!("bad handshake: {e}"))?;
    if h.stream != stream {
        return Err(format!("handshake announces `{}`, expected `{stream}`", h.stream));
    }
    if h.format_version != STREAM_FORMAT_VERSION {
        return Err(format!("unsupported format_version {}", h.format_version));
    }
    Ok(())
}

pub fn handshake_line(stream: &str) -> String {
    format!(r#"{{"stream":"{stream}","format_version":{STREAM_FORMAT_VERSION}}}"#)
}

struct Shared<R> {
    queue: BoundedQueue<R>,
    diagnostics: Mutex<Vec<String>>,
    client: Mutex<Option<TcpStream>>,
}

impl<R> Shared<R> {
    fn diagnose(&self, message: String) {
        warn!("{message}");
        self.diagnostics.lock().expect("diagnostics lock").push(message);
    }
}

/// A bound listener feeding a bounded queue. The stream ends when the
/// client disconnects.
pub struct LiveSource<R> {
    addr: SocketAddr,
    shared: Arc<Shared<R>>,
    worker: Option<JoinHandle<()>>,
    _marker: PhantomData<R>,
}

/// Binds `127.0.0.1:port` (0 picks a free port) and serves one client.
pub fn listen<R: StreamRecord>(port: u16) -> Result<LiveSource<R>, HarnessError> {
    bind(port, false)
}

/// Like [`listen`] but accepts the next client after each disconnect; the
/// stream only ends on [`LiveSource::close`].
pub fn listen_persistent<R: StreamRecord>(port: u16) -> Result<LiveSource<R>, HarnessError> {
    bind(port, true)
}

fn bind<R: StreamRecord>(port: u16, persistent: bool) -> Result<LiveSource<R>, HarnessError> {
    let listener = TcpListener::bind((Ipv4Addr::LOCALHOST, port))
        .map_err(|source| HarnessError::BindFailure { port, source })?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        queue: BoundedQueue::new(DEFAULT_CAPACITY),
        diagnostics: Mutex::new(Vec::new()),
        client: Mutex::new(None),
    });
    let worker = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name(format!("live-{}", R::KIND.as_str()))
            .spawn(move || accept_loop::<R>(listener, &shared, persistent))?
    };
    info!("listening for {} on {addr}", R::KIND.as_str());
    Ok(LiveSource {
        addr,
        shared,
        worker: Some(worker),
        _marker: PhantomData,
    })
}

fn accept_loop<R: StreamRecord>(listener: TcpListener, shared: &Shared<R>, persistent: bool) {
    for conn in listener.incoming() {
        if shared.queue.is_closed() {
            return;
        }
        match conn {
            Ok(stream) => {
                if serve_client::<R>(stream, shared) && !persistent {
                    shared.queue.close();
                    return;
                }
            }
            Err(e) => shared.diagnose(format!("accept failed: {e}")),
        }
    }
}

/// Returns true once a client completed the handshake and then disconnected.
fn serve_client<R: StreamRecord>(stream: TcpStream, shared: &Shared<R>) -> bool {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    *shared.client.lock().expect("client lock") = stream.try_clone().ok();
    let mut lines = BufReader::new(stream).lines();
    let stream_name = R::KIND.as_str();
    match lines.next() {
        Some(Ok(line)) => {
            if let Err(msg) = check_handshake(&line, stream_name) {
                shared.diagnose(format!("{peer}: {msg}"));
                return false;
            }
        }
        _ => return false,
    }
    let mut last: Option<u64> = None;
    for (i, line) in lines.enumerate() {
        let record = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                shared.diagnose(format!("{peer}: read failed: {e}"));
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let r = match R::decode_record(&line) {
            Ok(r) => r,
            Err(msg) => {
                shared.diagnose(format!("{stream_name} record {record} skipped: {msg}"));
                continue;
            }
        };
        let t = r.timestamp_ms();
        if let Some(p) = last {
            if t < p || (R::STRICT && t == p) {
                shared.diagnose(format!(
                    "{stream_name} record {record} skipped: timestamp {t} does not follow {p}"
                ));
                continue;
            }
        }
        last = Some(t);
        if !shared.queue.push(r) {
            break;
        }
    }
    true
}

impl<R: StreamRecord> LiveSource<R> {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks for the next record; `None` after the client disconnects.
    pub fn recv(&self) -> Option<R> {
        self.shared.queue.pop()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<R> {
        self.shared.queue.pop_timeout(timeout)
    }

    pub fn is_finished(&self) -> bool {
        self.shared.queue.is_closed() && self.shared.queue.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.shared.queue.dropped()
    }

    /// A counter readable from other threads while this source is consumed.
    pub fn dropped_handle(&self) -> impl Fn() -> u64 + Send + Sync + 'static {
        let shared = Arc::clone(&self.shared);
        move || shared.queue.dropped()
    }

    pub fn diagnostics(&self) -> Vec<String> {
        self.shared.diagnostics.lock().expect("diagnostics lock").clone()
    }

    /// Stops accepting, disconnects the current client and ends the stream.
    pub fn close(&mut self) {
        self.shared.queue.close();
        if let Some(client) = self.shared.client.lock().expect("client lock").take() {
            let _ = client.shutdown(std::net::Shutdown::Both);
        }
        // Unblock the accept call.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl<R> Drop for LiveSource<R> {
    fn drop(&mut self) {
        self.shared.queue.close();
        if let Ok(mut client) = self.shared.client.lock() {
            if let Some(c) = client.take() {
                let _ = c.shutdown(std::net::Shutdown::Both);
            }
        }
        if self.worker.is_some() {
            let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        }
    }
}

impl<R: StreamRecord> Iterator for LiveSource<R> {
    type Item = R;

    fn next(&mut self) -> Option<R> {
        self.recv()
    }
}
