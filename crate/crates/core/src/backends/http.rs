//! Blocking HTTP client for the model-server protocol in [`super::wire`].

use std::sync::{Condvar, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::imagecore::ImageBuffer;
use crate::metrics::Embedding;
use crate::text_channel::{sanitize, TextMessage};

use super::wire::{
    CaptionResponse, EmbedResponse, ErrorBody, GenerateRequestBody, ImagePayload, CAPTION_PATH,
    EMBED_PATH, GENERATE_PATH,
};
use super::{
    BackendEndpoint, BackendError, BackendErrorKind, Captioner, Embedder, GenerationRequest,
    Generator,
};

const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    limit: usize,
    state: Mutex<GateState>,
    freed: Condvar,
}

#[derive(Debug, Default)]
struct GateState {
    in_flight: usize,
    peak: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Self {
            limit,
            state: Mutex::new(GateState::default()),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("gate poisoned");
        while st.in_flight >= self.limit {
            st = self.freed.wait(st).expect("gate poisoned");
        }
        st.in_flight += 1;
        st.peak = st.peak.max(st.in_flight);
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().expect("gate poisoned");
        st.in_flight -= 1;
        self.0.freed.notify_one();
    }
}

/// Whether a request may be re-sent after a failure that happened once the
/// request could already have reached the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Idempotence {
    Idempotent,
    NonIdempotent,
}

/// One model server. Serves all three provider roles.
pub struct HttpBackend {
    endpoint: BackendEndpoint,
    agent: ureq::Agent,
    gate: Gate,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint.base_url)
            .finish()
    }
}

impl HttpBackend {
    pub fn new(endpoint: BackendEndpoint) -> Result<Self, String> {
        endpoint.validate()?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout_duration()))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            gate: Gate::new(endpoint.max_parallel),
            agent: config.into(),
            endpoint,
        })
    }

    pub fn endpoint(&self) -> &BackendEndpoint {
        &self.endpoint
    }

    /// Highest number of simultaneous requests observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.gate.state.lock().expect("gate poisoned").peak
    }

    fn provider(&self, path: &str) -> String {
        format!("{}{}", self.endpoint.base_url.trim_end_matches('/'), path)
    }

    fn err(&self, path: &str, kind: BackendErrorKind) -> BackendError {
        BackendError::new(self.provider(path), kind)
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
        idempotence: Idempotence,
    ) -> Result<R, BackendError> {
        let payload = serde_json::to_string(body).map_err(|e| {
            self.err(path, BackendErrorKind::InvalidRequest { message: e.to_string() })
        })?;
        let mut attempt = 0;
        loop {
            match self.post_once(path, &payload) {
                Err(e) if attempt < self.endpoint.retries && self.retryable(&e, idempotence) => {
                    attempt += 1;
                }
                Err(e) => return Err(e),
                Ok((200, text)) => {
                    return serde_json::from_str(&text).map_err(|e| {
                        self.err(
                            path,
                            BackendErrorKind::Protocol {
                                message: format!("bad response body: {e}"),
                            },
                        )
                    })
                }
                Ok((code, text)) => {
                    let message = serde_json::from_str::<ErrorBody>(&text)
                        .map(|b| b.error)
                        .unwrap_or(text);
                    return Err(self.err(path, BackendErrorKind::Status { code, message }));
                }
            }
        }
    }

    fn retryable(&self, e: &BackendError, idempotence: Idempotence) -> bool {
        match e.kind {
            BackendErrorKind::Unreachable { .. } => true,
            BackendErrorKind::Timeout | BackendErrorKind::Transport { .. } => {
                idempotence == Idempotence::Idempotent
            }
            _ => false,
        }
    }

    fn post_once(&self, path: &str, payload: &str) -> Result<(u16, String), BackendError> {
        let _permit = self.gate.acquire();
        let url = self.provider(path);
        let mut req = self
            .agent
            .post(&url)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.endpoint.auth_token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send(payload).map_err(|e| self.map_error(path, e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string()
            .map_err(|e| self.map_error(path, e))?;
        Ok((status, text))
    }

    fn map_error(&self, path: &str, e: ureq::Error) -> BackendError {
        use std::io::ErrorKind;
        let kind = match e {
            ureq::Error::Timeout(_) => BackendErrorKind::Timeout,
            ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
                BackendErrorKind::Unreachable { message: e.to_string() }
            }
            ureq::Error::Io(ref io)
                if matches!(
                    io.kind(),
                    ErrorKind::ConnectionRefused | ErrorKind::AddrNotAvailable | ErrorKind::NotFound
                ) =>
            {
                BackendErrorKind::Unreachable { message: e.to_string() }
            }
            ureq::Error::Io(ref io) if io.kind() == ErrorKind::TimedOut => BackendErrorKind::Timeout,
            ureq::Error::Io(_) => BackendErrorKind::Transport { message: e.to_string() },
            ureq::Error::BadUri(_) => BackendErrorKind::InvalidRequest { message: e.to_string() },
            other => BackendErrorKind::Protocol {
                message: other.to_string(),
            },
        };
        self.err(path, kind)
    }

    fn decode_image(&self, path: &str, payload: &ImagePayload) -> Result<ImageBuffer, BackendError> {
        payload
            .decode()
            .map_err(|message| self.err(path, BackendErrorKind::Protocol { message }))
    }
}

impl Captioner for HttpBackend {
    fn identity(&self) -> String {
        self.provider(CAPTION_PATH)
    }

    fn caption(&self, img: &ImageBuffer) -> Result<TextMessage, BackendError> {
        let resp: CaptionResponse =
            self.post(CAPTION_PATH, &ImagePayload::encode(img), Idempotence::Idempotent)?;
        Ok(sanitize(&resp.text))
    }
}

impl Generator for HttpBackend {
    fn identity(&self) -> String {
        self.provider(GENERATE_PATH)
    }

    fn generate(&self, req: &GenerationRequest) -> Result<ImageBuffer, BackendError> {
        let body = GenerateRequestBody {
            prompt: req.prompt.as_str().to_owned(),
            seed: req.seed,
            width: req.width,
            height: req.height,
        };
        let resp: ImagePayload = self.post(GENERATE_PATH, &body, Idempotence::NonIdempotent)?;
        self.decode_image(GENERATE_PATH, &resp)
    }
}

impl Embedder for HttpBackend {
    fn identity(&self) -> String {
        self.provider(EMBED_PATH)
    }

    fn embed(&self, img: &ImageBuffer) -> Result<Embedding, BackendError> {
        let resp: EmbedResponse =
            self.post(EMBED_PATH, &ImagePayload::encode(img), Idempotence::Idempotent)?;
        if resp.vector.is_empty() || resp.vector.iter().any(|v| !v.is_finite()) {
            return Err(self.err(
                EMBED_PATH,
                BackendErrorKind::Protocol {
                    message: "embedding must be a non-empty vector of finite numbers".into(),
                },
            ));
        }
        let e = Embedding::new(resp.vector);
        if e.is_zero() {
            return Err(self.err(
                EMBED_PATH,
                BackendErrorKind::Protocol {
                    message: "zero-norm embedding".into(),
                },
            ));
        }
        Ok(e)
    }
}
