mod common;

use std::sync::Arc;
use std::time::Duration;

use aquasem::backends::wire::{CAPTION_PATH, EMBED_PATH, GENERATE_PATH};
use aquasem::backends::{
    BackendEndpoint, BackendErrorKind, Captioner, Embedder, GenerationRequest, Generator,
    HttpBackend, Providers, StubConfig, StubServer,
};
use aquasem::imagecore::ImageBuffer;
use aquasem::pipeline::{builtin_control, run_trial, TrialCache, TrialInput};
use aquasem::text_channel::{sanitize, ErrorSpec, ErrorType};

use common::raw_post;

// base64("P5\n1 1\n255\n\x07") and base64("P6\n2 1\n255\n" ff 00 00 00 00 ff).
const GRAY7_BODY: &str = r#"{"image_ppm_b64":"UDUKMSAxCjI1NQoH"}"#;
const RED_BLUE_BODY: &str = r#"{"image_ppm_b64":"UDYKMiAxCjI1NQr/AAAAAP8="}"#;
const GENERATE_BODY: &str = r#"{"prompt":"a blue fish","seed":7,"width":16,"height":16}"#;

fn gray7() -> ImageBuffer {
    ImageBuffer::new(1, 1, 1, vec![7]).unwrap()
}

fn red_blue() -> ImageBuffer {
    ImageBuffer::new(2, 1, 3, vec![255, 0, 0, 0, 0, 255]).unwrap()
}

fn fixed_stub() -> StubServer {
    StubServer::start(StubConfig {
        caption: Some("a teal  reef\n".into()),
        image: Some(gray7()),
        vector: Some(vec![0.6, 0.8]),
        ..StubConfig::default()
    })
    .unwrap()
}

fn client(server: &StubServer) -> HttpBackend {
    HttpBackend::new(BackendEndpoint::new(server.url())).unwrap()
}

#[test]
fn request_bodies_match_golden_bytes() {
    let server = fixed_stub();
    let http = client(&server);
    http.caption(&gray7()).unwrap();
    let req = GenerationRequest::new(sanitize("a blue fish"), 7, 16, 16).unwrap();
    http.generate(&req).unwrap();
    http.embed(&red_blue()).unwrap();

    let seen = server.requests();
    let got: Vec<(&str, &str, &str)> = seen
        .iter()
        .map(|r| (r.method.as_str(), r.path.as_str(), r.body.as_str()))
        .collect();
    assert_eq!(
        got,
        vec![
            ("POST", CAPTION_PATH, GRAY7_BODY),
            ("POST", GENERATE_PATH, GENERATE_BODY),
            ("POST", EMBED_PATH, RED_BLUE_BODY),
        ]
    );
    assert!(seen.iter().all(|r| r.authorization.is_none()));
}

#[test]
fn response_bodies_match_golden_bytes() {
    let server = fixed_stub();
    let addr = server.addr();
    assert_eq!(raw_post(addr, CAPTION_PATH, GRAY7_BODY, None), (200, r#"{"text":"a teal  reef\n"}"#.into()));
    assert_eq!(raw_post(addr, GENERATE_PATH, GENERATE_BODY, None), (200, GRAY7_BODY.into()));
    assert_eq!(raw_post(addr, EMBED_PATH, RED_BLUE_BODY, None), (200, r#"{"vector":[0.6,0.8]}"#.into()));
    assert_eq!(
        raw_post(addr, "/nope", "{}", None),
        (404, r#"{"error":"no such endpoint /nope"}"#.into())
    );
    let (code, body) = raw_post(addr, CAPTION_PATH, "not json", None);
    assert_eq!(code, 400);
    assert!(body.starts_with(r#"{"error":"#));
}

#[test]
fn client_decodes_responses() {
    let server = fixed_stub();
    let http = client(&server);
    // Sanitized: the newline becomes a space, printable spacing is kept.
    assert_eq!(http.caption(&gray7()).unwrap().as_str(), "a teal  reef ");
    let req = GenerationRequest::new(sanitize("x"), 0, 16, 16).unwrap();
    assert_eq!(http.generate(&req).unwrap(), gray7());
    assert_eq!(http.embed(&gray7()).unwrap().values(), &[0.6, 0.8]);
}

#[test]
fn mock_backed_stub_matches_in_process_mocks() {
    let server = StubServer::start(StubConfig::default()).unwrap();
    let http = Providers::http(BackendEndpoint::new(server.url())).unwrap();
    let original = aquasem::experiment::synthetic_image(4, 48, 48);
    let control = builtin_control(48, 48);
    let input = TrialInput {
        image_id: "s4",
        original: &original,
        control: &control,
        spec: ErrorSpec::new(ErrorType::CharSubstitution, 0.2, 11).unwrap(),
        gen_seed: 3,
        gen_width: 32,
        gen_height: 32,
    };
    let over_http = run_trial(&input, &http, &TrialCache::new()).without_timings();
    let local = run_trial(&input, &Providers::mock(), &TrialCache::new()).without_timings();
    assert!(over_http.is_ok(), "{:?}", over_http.status);
    assert_eq!(over_http, local);
}

#[test]
fn bearer_token_is_sent_and_enforced() {
    let server = StubServer::start(StubConfig {
        token: Some("s3cret".into()),
        ..StubConfig::default()
    })
    .unwrap();
    let anonymous = client(&server);
    let err = anonymous.caption(&gray7()).unwrap_err();
    assert!(matches!(err.kind, BackendErrorKind::Status { code: 401, .. }), "{err}");

    let mut ep = BackendEndpoint::new(server.url());
    ep.auth_token = Some("s3cret".into());
    let authed = HttpBackend::new(ep).unwrap();
    authed.caption(&gray7()).unwrap();
    let last = server.requests().pop().unwrap();
    assert_eq!(last.authorization.as_deref(), Some("Bearer s3cret"));
}

#[test]
fn non_200_maps_to_status_without_retry() {
    let server = StubServer::start(StubConfig {
        fail: Some((503, "overloaded".into())),
        ..StubConfig::default()
    })
    .unwrap();
    let http = client(&server);
    let err = http.embed(&gray7()).unwrap_err();
    assert_eq!(
        err.kind,
        BackendErrorKind::Status {
            code: 503,
            message: "overloaded".into()
        }
    );
    assert_eq!(err.provider, format!("{}{}", server.url(), EMBED_PATH));
    assert_eq!(server.requests().len(), 1);
}

fn slow_stub() -> StubServer {
    StubServer::start(StubConfig {
        delay: Duration::from_millis(700),
        ..StubConfig::default()
    })
    .unwrap()
}

fn impatient(server: &StubServer, retries: u32) -> HttpBackend {
    let mut ep = BackendEndpoint::new(server.url());
    ep.timeout = 0.2;
    ep.retries = retries;
    HttpBackend::new(ep).unwrap()
}

#[test]
fn timeout_is_retried_for_caption() {
    let server = slow_stub();
    let err = impatient(&server, 1).caption(&gray7()).unwrap_err();
    assert_eq!(err.kind, BackendErrorKind::Timeout);
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn timeout_is_never_retried_for_generate() {
    let server = slow_stub();
    let req = GenerationRequest::new(sanitize("a b"), 1, 16, 16).unwrap();
    let err = impatient(&server, 2).generate(&req).unwrap_err();
    assert_eq!(err.kind, BackendErrorKind::Timeout);
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn closed_port_is_unreachable() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let http = HttpBackend::new(BackendEndpoint::new(format!("http://127.0.0.1:{port}"))).unwrap();
    let err = http.caption(&gray7()).unwrap_err();
    assert!(err.is_unreachable(), "{err}");
}

#[test]
fn malformed_embeddings_are_protocol_errors() {
    for vector in [vec![], vec![0.0, 0.0]] {
        let server = StubServer::start(StubConfig {
            vector: Some(vector),
            ..StubConfig::default()
        })
        .unwrap();
        let err = client(&server).embed(&gray7()).unwrap_err();
        assert!(matches!(err.kind, BackendErrorKind::Protocol { .. }), "{err}");
    }
}

#[test]
fn in_flight_requests_respect_max_parallel() {
    let server = StubServer::start(StubConfig {
        delay: Duration::from_millis(80),
        caption: Some("x".into()),
        ..StubConfig::default()
    })
    .unwrap();
    let mut ep = BackendEndpoint::new(server.url());
    ep.max_parallel = 2;
    let http = Arc::new(HttpBackend::new(ep).unwrap());
    std::thread::scope(|s| {
        for _ in 0..8 {
            let http = http.clone();
            s.spawn(move || http.caption(&gray7()).unwrap());
        }
    });
    assert_eq!(server.requests().len(), 8);
    assert_eq!(http.peak_in_flight(), 2);
    assert!(server.peak_concurrency() <= 2);
}

#[test]
fn endpoint_validation() {
    let mut ep = BackendEndpoint::new("ftp://x");
    assert!(HttpBackend::new(ep.clone()).is_err());
    ep.base_url = "http://x".into();
    ep.max_parallel = 0;
    assert!(HttpBackend::new(ep.clone()).is_err());
    ep.max_parallel = 1;
    ep.timeout = 0.0;
    assert!(HttpBackend::new(ep).is_err());
}
