//! Minimal in-process model server speaking the wire protocol.
//!
//! Backed by the mock providers unless fixed responses are configured. Used
//! for protocol conformance tests and for trying live mode without models.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::imagecore::ImageBuffer;
use crate::text_channel::sanitize;

use super::mock::{MockCaptioner, MockEmbedder, MockGenerator};
use super::wire::{
    CaptionResponse, EmbedResponse, ErrorBody, GenerateRequestBody, ImagePayload, CAPTION_PATH,
    EMBED_PATH, GENERATE_PATH,
};
use super::GenerationRequest;

#[derive(Debug, Clone, Default)]
pub struct StubConfig {
    pub caption: Option<String>,
    pub image: Option<ImageBuffer>,
    pub vector: Option<Vec<f64>>,
    /// Sleep before answering each request.
    pub delay: Duration,
    /// Answer every request with this status and error message.
    pub fail: Option<(u16, String)>,
    /// Require `Authorization: Bearer <token>`; 401 otherwise.
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

#[derive(Default)]
struct Shared {
    requests: Mutex<Vec<RecordedRequest>>,
    active: AtomicUsize,
    peak: AtomicUsize,
}

pub struct StubServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    shared: Arc<Shared>,
    accept_thread: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds an ephemeral port on 127.0.0.1.
    pub fn start(config: StubConfig) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", config)
    }

    pub fn bind(addr: &str, config: StubConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let shared = Arc::new(Shared::default());
        let config = Arc::new(config);
        let accept_thread = {
            let stop = stop.clone();
            let shared = shared.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let shared = shared.clone();
                    let config = config.clone();
                    std::thread::spawn(move || {
                        let _ = handle(stream, &config, &shared);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            shared,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.requests.lock().expect("poisoned").clone()
    }

    /// Highest number of requests handled at the same time.
    pub fn peak_concurrency(&self) -> usize {
        self.shared.peak.load(Ordering::SeqCst)
    }

    /// Blocks until the server is stopped (used by the CLI).
    pub fn join(mut self) {
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

struct ActiveGuard<'a>(&'a Shared);

impl Drop for ActiveGuard<'_> {
    fn drop(&mut self) {
        self.0.active.fetch_sub(1, Ordering::SeqCst);
    }
}

fn handle(stream: TcpStream, config: &StubConfig, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_owned();
    let path = parts.next().unwrap_or_default().to_owned();

    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.parse().unwrap_or(0);
            } else if name.eq_ignore_ascii_case("authorization") {
                authorization = Some(value.to_owned());
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let body = String::from_utf8_lossy(&body).into_owned();

    let now = shared.active.fetch_add(1, Ordering::SeqCst) + 1;
    shared.peak.fetch_max(now, Ordering::SeqCst);
    let _guard = ActiveGuard(shared);

    shared.requests.lock().expect("poisoned").push(RecordedRequest {
        method: method.clone(),
        path: path.clone(),
        authorization: authorization.clone(),
        body: body.clone(),
    });

    if !config.delay.is_zero() {
        std::thread::sleep(config.delay);
    }

    let (status, payload) = respond(config, &method, &path, authorization.as_deref(), &body);
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        404 => "Not Found",
        405 => "Method Not Allowed",
        _ => "Error",
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        payload.len()
    )?;
    out.write_all(payload.as_bytes())?;
    out.flush()
}

fn error_json(message: impl Into<String>) -> String {
    serde_json::to_string(&ErrorBody {
        error: message.into(),
    })
    .expect("serializable")
}

fn respond(
    config: &StubConfig,
    method: &str,
    path: &str,
    authorization: Option<&str>,
    body: &str,
) -> (u16, String) {
    if let Some((code, message)) = &config.fail {
        return (*code, error_json(message.clone()));
    }
    if let Some(token) = &config.token {
        if authorization != Some(format!("Bearer {token}").as_str()) {
            return (401, error_json("missing or invalid bearer token"));
        }
    }
    if method != "POST" {
        return (405, error_json("only POST is supported"));
    }
    let bad = |e: String| (400, error_json(e));
    match path {
        CAPTION_PATH => {
            let req: ImagePayload = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return bad(e.to_string()),
            };
            let text = match &config.caption {
                Some(fixed) => fixed.clone(),
                None => match req.decode() {
                    Ok(img) => MockCaptioner::describe(&img).into_string(),
                    Err(e) => return bad(e),
                },
            };
            ok(&CaptionResponse { text })
        }
        GENERATE_PATH => {
            let req: GenerateRequestBody = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return bad(e.to_string()),
            };
            let img = match &config.image {
                Some(fixed) => fixed.clone(),
                None => {
                    match GenerationRequest::new(sanitize(&req.prompt), req.seed, req.width, req.height) {
                        Ok(g) => MockGenerator::render(&g),
                        Err(e) => return bad(e),
                    }
                }
            };
            ok(&ImagePayload::encode(&img))
        }
        EMBED_PATH => {
            let req: ImagePayload = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return bad(e.to_string()),
            };
            let vector = match &config.vector {
                Some(fixed) => fixed.clone(),
                None => match req.decode() {
                    Ok(img) => MockEmbedder::features(&img),
                    Err(e) => return bad(e),
                },
            };
            ok(&EmbedResponse { vector })
        }
        _ => (404, error_json(format!("no such endpoint {path}"))),
    }
}

fn ok<T: serde::Serialize>(value: &T) -> (u16, String) {
    (200, serde_json::to_string(value).expect("serializable"))
}
