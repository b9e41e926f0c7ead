//! A minimal in-process embedding server for tests and local experiments.
//!
//! It speaks just enough HTTP/1.1 for `POST /embed`, one request per
//! connection.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum StubMode {
    /// The same vector for every input.
    Fixed(Vec<f64>),
    /// `[i + 1, 1, 0, ...]` of the given dimension, where `i` is the integer
    /// the input text ends with (0 if none).
    Tagged(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubConfig {
    pub mode: StubMode,
    /// Answer the first this-many requests with HTTP 500.
    pub fail_first: usize,
    /// Sleep before answering the n-th request (by arrival).
    pub delays_ms: Vec<u64>,
}

impl StubConfig {
    pub fn fixed(v: Vec<f64>) -> Self {
        Self {
            mode: StubMode::Fixed(v),
            fail_first: 0,
            delays_ms: Vec::new(),
        }
    }

    pub fn tagged(dim: usize) -> Self {
        Self {
            mode: StubMode::Tagged(dim.max(2)),
            ..Self::fixed(Vec::new())
        }
    }
}

#[derive(Default)]
struct Shared {
    requests: AtomicUsize,
    inputs: Mutex<Vec<String>>,
    auth: Mutex<Vec<String>>,
    stop: AtomicBool,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

fn trailing_index(text: &str) -> usize {
    let digits: String = text
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().unwrap_or(0)
}

fn vector_for(mode: &StubMode, text: &str) -> Vec<f64> {
    match mode {
        StubMode::Fixed(v) => v.clone(),
        StubMode::Tagged(dim) => {
            let mut v = vec![0.0; *dim];
            v[0] = (trailing_index(text) + 1) as f64;
            v[1] = 1.0;
            v
        }
    }
}

struct Request {
    auth: Option<String>,
    body: Vec<u8>,
}

fn read_request(stream: &TcpStream) -> std::io::Result<Request> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut length = 0usize;
    let mut chunked = false;
    let mut auth = None;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.trim_end().split_once(':') {
            let v = v.trim();
            match k.to_ascii_lowercase().as_str() {
                "content-length" => length = v.parse().unwrap_or(0),
                "transfer-encoding" => chunked = v.eq_ignore_ascii_case("chunked"),
                "authorization" => auth = Some(v.to_string()),
                _ => {}
            }
        }
    }
    let mut body = Vec::new();
    if chunked {
        loop {
            line.clear();
            reader.read_line(&mut line)?;
            let size = usize::from_str_radix(line.trim(), 16).unwrap_or(0);
            if size == 0 {
                break;
            }
            let start = body.len();
            body.resize(start + size, 0);
            reader.read_exact(&mut body[start..])?;
            line.clear();
            reader.read_line(&mut line)?;
        }
    } else {
        body.resize(length, 0);
        reader.read_exact(&mut body)?;
    }
    Ok(Request { auth, body })
}

fn respond(mut stream: &TcpStream, status: u16, body: &Value) -> std::io::Result<()> {
    let payload = body.to_string();
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        _ => "Internal Server Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}

fn handle(stream: TcpStream, cfg: &StubConfig, shared: &Shared) -> std::io::Result<()> {
    let req = read_request(&stream)?;
    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    if let Some(a) = req.auth {
        shared.auth.lock().expect("auth log").push(a);
    }
    if let Some(&ms) = cfg.delays_ms.get(n) {
        thread::sleep(Duration::from_millis(ms));
    }
    if n < cfg.fail_first {
        return respond(&stream, 500, &json!({"error": "injected failure"}));
    }
    let inputs: Vec<String> = match serde_json::from_slice::<Value>(&req.body)
        .ok()
        .and_then(|v| serde_json::from_value(v["inputs"].clone()).ok())
    {
        Some(i) => i,
        None => return respond(&stream, 400, &json!({"error": "expected {\"inputs\": [str]}"})),
    };
    let vectors: Vec<Vec<f64>> = inputs.iter().map(|t| vector_for(&cfg.mode, t)).collect();
    shared.inputs.lock().expect("input log").extend(inputs);
    respond(&stream, 200, &json!({ "vectors": vectors }))
}

impl StubServer {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub fn start(cfg: StubConfig) -> Result<Self> {
        Self::bind("127.0.0.1:0", cfg)
    }

    pub fn bind(addr: &str, cfg: StubConfig) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Transport(format!("cannot bind {addr}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?;
        let shared = Arc::new(Shared::default());
        let state = Arc::clone(&shared);
        let cfg = Arc::new(cfg);
        let handle = thread::spawn(move || {
            for conn in listener.incoming() {
                if state.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let (cfg, state) = (Arc::clone(&cfg), Arc::clone(&state));
                thread::spawn(move || {
                    if let Err(e) = handle(stream, &cfg, &state) {
                        log::debug!("stub connection error: {e}");
                    }
                });
            }
        });
        Ok(Self {
            addr,
            shared,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received so far, including failed ones.
    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    /// Inputs of all successfully answered requests, in arrival order.
    pub fn inputs(&self) -> Vec<String> {
        self.shared.inputs.lock().expect("input log").clone()
    }

    pub fn auth_headers(&self) -> Vec<String> {
        self.shared.auth.lock().expect("auth log").clone()
    }

    /// A localhost URL with nothing listening on it.
    pub fn dead_url() -> String {
        let l = TcpListener::bind("127.0.0.1:0").expect("bind ephemeral port");
        let addr = l.local_addr().expect("local addr");
        drop(l);
        format!("http://{addr}")
    }

    /// Blocks until the server stops (it never does on its own).
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = TcpStream::connect(self.addr);
            let _ = h.join();
        }
    }
}
