//! Command-line front end. Every subcommand is a thin shell over the library.
//!
//! Exit codes: 0 success, 1 some trials failed, 2 usage or input error,
//! 3 a model server was unreachable. Results go to stdout as JSON (or a
//! human-readable summary with `--pretty`); errors go to stderr as JSON.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::backends::stub::{StubConfig, StubServer};
use crate::backends::{BackendEndpoint, Embedder, HttpBackend, MockEmbedder, Providers};
use crate::experiment::{
    run_sweep, synthetic_dataset, BackendsConfig, SweepConfig, SweepError, BUILTIN_CONTROL,
};
use crate::imagecore::{load_image, save_image, ImageBuffer};
use crate::linkmath::{ber_bounds, DEFAULT_BITS_PER_CHAR};
use crate::metrics::compare;
use crate::pipeline::{
    builtin_control, run_trial, TrialCache, TrialInput, TrialStatus, CONTROL_SIDE,
    DEFAULT_GENERATION_SIDE,
};
use crate::report::{read_aggregates_csv, render_all};
use crate::text_channel::{corrupt, sanitize, ErrorSpec, ErrorType};

pub const ENV_BACKEND_URL: &str = "AQUASEM_BACKEND_URL";
pub const ENV_TOKEN: &str = "AQUASEM_TOKEN";

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNREACHABLE: i32 = 3;

const MOCK: &str = "mock";

#[derive(Debug, Parser)]
#[command(name = "aquasem", version, about = "Caption corruption, regeneration and scoring sweeps")]
pub struct Cli {
    /// Human-readable output instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corrupt a caption with one error type.
    Corrupt(CorruptArgs),
    /// Bit error rate bounds for a character error rate.
    Ber(BerArgs),
    /// PSNR, SSIM and CLIPScore between two images.
    Metrics(MetricsArgs),
    /// One caption, corrupt, generate, score trial.
    Trial(TrialArgs),
    /// Full error-ratio sweep; writes records.csv, aggregates.csv, manifest.json.
    Sweep(SweepArgs),
    /// SVG charts from an aggregates.csv.
    Report(ReportArgs),
    /// Serve the model-server protocol backed by the mock providers.
    StubServer(StubArgs),
    /// Write a synthetic PPM dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long = "type", value_parser = parse_error_type)]
    pub error_type: ErrorType,
    #[arg(long)]
    pub ratio: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, conflicts_with = "stdin", required_unless_present = "stdin")]
    pub text: Option<String>,
    /// Read the caption from standard input.
    #[arg(long)]
    pub stdin: bool,
}

#[derive(Debug, Args)]
pub struct BerArgs {
    #[arg(long)]
    pub cer: f64,
    #[arg(long, default_value_t = DEFAULT_BITS_PER_CHAR)]
    pub bits: u32,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Model server URL or `mock`.
    #[arg(long)]
    pub embedder: Option<String>,
    #[arg(long)]
    pub token: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Control image path or `builtin`.
    #[arg(long, default_value = BUILTIN_CONTROL)]
    pub control: String,
    #[arg(long = "type", value_parser = parse_error_type)]
    pub error_type: ErrorType,
    #[arg(long)]
    pub ratio: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub gen_seed: u64,
    /// Model server URL or `mock`.
    #[arg(long)]
    pub backends: Option<String>,
    #[arg(long)]
    pub token: Option<String>,
    #[arg(long, default_value_t = DEFAULT_GENERATION_SIDE)]
    pub width: usize,
    #[arg(long, default_value_t = DEFAULT_GENERATION_SIDE)]
    pub height: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON file with the sweep configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the offline mock providers; no network I/O.
    #[arg(long, conflicts_with = "backend_url")]
    pub mock: bool,
    /// Worker threads (default: logical CPUs).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub backend_url: Option<String>,
    #[arg(long)]
    pub token: Option<String>,
    #[arg(long)]
    pub channel_seed_base: Option<u64>,
    #[arg(long)]
    pub generations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub aggregates: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StubArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long)]
    pub token: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
}

fn parse_error_type(s: &str) -> Result<ErrorType, String> {
    let code: u8 = s.parse().map_err(|_| format!("expected 1, 2 or 3, got {s:?}"))?;
    ErrorType::try_from(code).map_err(|e| e.to_string())
}

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.to_string(),
        }
    }

    fn unreachable(message: impl ToString) -> Self {
        Self {
            code: EXIT_UNREACHABLE,
            kind: "unreachable",
            message: message.to_string(),
        }
    }

    fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind, "message": self.message, "exit_code": self.code } })
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        Self::usage(e)
    }
}

/// Environment lookup, injectable for tests.
pub type EnvLookup<'a> = &'a dyn Fn(&str) -> Option<String>;

pub struct Io<'a> {
    pub stdin: &'a mut dyn Read,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
    pub env: EnvLookup<'a>,
}

/// Process entry point: real stdio and environment.
pub fn main() -> i32 {
    let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
    let mut io = Io {
        stdin: &mut std::io::stdin(),
        stdout: &mut std::io::stdout(),
        stderr: &mut std::io::stderr(),
        env: &env,
    };
    run(std::env::args_os(), &mut io)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(io.stdout, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let err = CliError::usage(e.to_string().trim_end());
            let _ = writeln!(io.stderr, "{}", err.to_json());
            return EXIT_USAGE;
        }
    };
    match dispatch(&cli, io) {
        Ok(code) => code,
        Err(err) => {
            let _ = writeln!(io.stderr, "{}", err.to_json());
            err.code
        }
    }
}

fn dispatch(cli: &Cli, io: &mut Io<'_>) -> Result<i32, CliError> {
    match &cli.command {
        Command::Corrupt(a) => cmd_corrupt(a, cli.pretty, io),
        Command::Ber(a) => cmd_ber(a, cli.pretty, io),
        Command::Metrics(a) => cmd_metrics(a, cli.pretty, io),
        Command::Trial(a) => cmd_trial(a, cli.pretty, io),
        Command::Sweep(a) => cmd_sweep(a, cli.pretty, io),
        Command::Report(a) => cmd_report(a, cli.pretty, io),
        Command::StubServer(a) => cmd_stub(a, io),
        Command::Synth(a) => cmd_synth(a, cli.pretty, io),
    }
}

fn emit<T: Serialize>(io: &mut Io<'_>, value: &T, pretty_text: Option<String>) -> Result<(), CliError> {
    let text = match pretty_text {
        Some(t) => t,
        None => serde_json::to_string(value).map_err(CliError::usage)?,
    };
    writeln!(io.stdout, "{text}").map_err(CliError::usage)
}

fn cmd_corrupt(a: &CorruptArgs, pretty: bool, io: &mut Io<'_>) -> Result<i32, CliError> {
    let raw = match &a.text {
        Some(t) => t.clone(),
        None => {
            let mut s = String::new();
            io.stdin.read_to_string(&mut s).map_err(CliError::usage)?;
            s
        }
    };
    let spec = ErrorSpec::new(a.error_type, a.ratio, a.seed).map_err(CliError::usage)?;
    let out = corrupt(&sanitize(&raw), &spec).map_err(CliError::usage)?;
    let text = pretty.then(|| {
        format!(
            "{}\n({} of {} units affected, realized ratio {:.4})",
            out.corrupted, out.affected_units, out.total_units, out.realized_ratio
        )
    });
    emit(io, &out, text)?;
    Ok(EXIT_OK)
}

fn cmd_ber(a: &BerArgs, pretty: bool, io: &mut Io<'_>) -> Result<i32, CliError> {
    let b = ber_bounds(a.cer, a.bits).map_err(CliError::usage)?;
    let text = pretty.then(|| {
        format!(
            "CER {:.4} with {} bits/char: BER between {:.6} and {:.6}",
            b.cer, b.bits_per_char, b.lower, b.upper
        )
    });
    emit(io, &json!({ "lower": b.lower, "upper": b.upper }), text)?;
    Ok(EXIT_OK)
}

/// Endpoint from a URL plus the token by precedence flag > env.
fn endpoint_for(url: &str, token: Option<&str>, env: EnvLookup<'_>) -> BackendEndpoint {
    let mut e = BackendEndpoint::new(url);
    e.auth_token = token.map(str::to_owned).or_else(|| env(ENV_TOKEN));
    e
}

/// `mock` or a server URL: flag, then environment, then mock.
fn provider_choice(flag: Option<&str>, env: EnvLookup<'_>) -> String {
    flag.map(str::to_owned)
        .or_else(|| env(ENV_BACKEND_URL))
        .unwrap_or_else(|| MOCK.into())
}

fn load(path: &Path) -> Result<ImageBuffer, CliError> {
    load_image(path).map_err(CliError::usage)
}

fn cmd_metrics(a: &MetricsArgs, pretty: bool, io: &mut Io<'_>) -> Result<i32, CliError> {
    let img_a = load(&a.a)?;
    let img_b = load(&a.b)?;
    let choice = provider_choice(a.embedder.as_deref(), io.env);
    let http;
    let embedder: &dyn Embedder = if choice == MOCK {
        &MockEmbedder
    } else {
        http = HttpBackend::new(endpoint_for(&choice, a.token.as_deref(), io.env))
            .map_err(CliError::usage)?;
        &http
    };
    let report = compare(&img_a, &img_b, embedder).map_err(|e| match e {
        crate::metrics::MetricError::Backend(b) if b.is_unreachable() => CliError::unreachable(b),
        crate::metrics::MetricError::Backend(b) => CliError {
            code: EXIT_PARTIAL,
            kind: "backend",
            message: b.to_string(),
        },
        other => CliError::usage(other),
    })?;
    let text = pretty.then(|| {
        format!(
            "PSNR {:>10} dB\nSSIM {:>10.6}\nCLIP {:>10.4} %",
            if report.psnr_db.is_infinite() { "inf".to_string() } else { format!("{:.4}", report.psnr_db) },
            report.ssim,
            report.clip_score_pct
        )
    });
    emit(io, &report, text)?;
    Ok(EXIT_OK)
}

fn status_code(status: &TrialStatus) -> i32 {
    match status {
        TrialStatus::Ok => EXIT_OK,
        TrialStatus::Failed { unreachable: true, .. } => EXIT_UNREACHABLE,
        TrialStatus::Failed { .. } => EXIT_PARTIAL,
    }
}

fn cmd_trial(a: &TrialArgs, pretty: bool, io: &mut Io<'_>) -> Result<i32, CliError> {
    let original = load(&a.image)?;
    let control = if a.control == BUILTIN_CONTROL {
        builtin_control(CONTROL_SIDE, CONTROL_SIDE)
    } else {
        load(Path::new(&a.control))?
    };
    let choice = provider_choice(a.backends.as_deref(), io.env);
    let providers = if choice == MOCK {
        Providers::mock()
    } else {
        Providers::http(endpoint_for(&choice, a.token.as_deref(), io.env)).map_err(CliError::usage)?
    };
    let spec = ErrorSpec::new(a.error_type, a.ratio, a.seed).map_err(CliError::usage)?;
    let image_id = a
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let input = TrialInput {
        image_id: &image_id,
        original: &original,
        control: &control,
        spec,
        gen_seed: a.gen_seed,
        gen_width: a.width,
        gen_height: a.height,
    };
    let record = run_trial(&input, &providers, &TrialCache::new());
    let text = pretty.then(|| {
        let m = |r: &Option<crate::metrics::MetricReport>| match r {
            Some(r) => format!("PSNR {:.3} dB, SSIM {:.4}, CLIP {:.2} %", r.psnr_db, r.ssim, r.clip_score_pct),
            None => "-".into(),
        };
        format!(
            "status:     {}\nclean:      {}\ncorrupted:  {}\nvs original {}\nvs control  {}",
            record.status.token(),
            record.caption_clean,
            record.caption_corrupted,
            m(&record.metrics_vs_original),
            m(&record.metrics_vs_control)
        )
    });
    emit(io, &record, text)?;
    Ok(status_code(&record.status))
}

/// Resolves the sweep configuration: flags, then the config file, then the
/// environment, then defaults.
pub fn resolve_sweep_config(a: &SweepArgs, env: EnvLookup<'_>) -> Result<SweepConfig, CliError> {
    let mut doc = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => json!({}),
    };
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| CliError::usage("config file must hold a JSON object"))?;
    let mut set = |key: &str, v: Value| {
        obj.insert(key.to_owned(), v);
    };
    if let Some(d) = &a.dataset_dir {
        set("dataset_dir", json!(d));
    }
    if let Some(d) = &a.output_dir {
        set("output_dir", json!(d));
    }
    if let Some(s) = a.channel_seed_base {
        set("channel_seed_base", json!(s));
    }
    if let Some(g) = a.generations {
        set("generations_per_caption", json!(g));
    }
    let config_has_backends = obj.contains_key("backends");
    let mut cfg: SweepConfig = serde_json::from_value(doc).map_err(CliError::usage)?;

    cfg.backends = if a.mock {
        BackendsConfig::Mock
    } else if let Some(url) = &a.backend_url {
        BackendsConfig::Shared(endpoint_for(url, a.token.as_deref(), env))
    } else if config_has_backends {
        let mut b = cfg.backends;
        let token = a.token.clone().or_else(|| env(ENV_TOKEN));
        match &mut b {
            BackendsConfig::Mock => {}
            BackendsConfig::Shared(e) => fill_token(e, &a.token, &token),
            BackendsConfig::PerRole {
                captioner,
                generator,
                embedder,
            } => {
                for e in [captioner, generator, embedder] {
                    fill_token(e, &a.token, &token);
                }
            }
        }
        b
    } else if let Some(url) = env(ENV_BACKEND_URL) {
        BackendsConfig::Shared(endpoint_for(&url, a.token.as_deref(), env))
    } else {
        BackendsConfig::Mock
    };
    Ok(cfg)
}

/// A token flag overrides the file; the environment only fills a gap.
fn fill_token(e: &mut BackendEndpoint, flag: &Option<String>, fallback: &Option<String>) {
    if flag.is_some() {
        e.auth_token = flag.clone();
    } else if e.auth_token.is_none() {
        e.auth_token = fallback.clone();
    }
}

fn cmd_sweep(a: &SweepArgs, pretty: bool, io: &mut Io<'_>) -> Result<i32, CliError> {
    if a.jobs == Some(0) {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let cfg = resolve_sweep_config(a, io.env)?;
    let providers = cfg.backends.providers().map_err(CliError::usage)?;
    let outcome = run_sweep(&cfg, &providers, a.jobs)?;
    let summary = json!({
        "output_dir": cfg.output_dir,
        "records": outcome.records.len(),
        "failed": outcome.failed,
        "caption_calls": outcome.caption_calls,
        "resumed_cells": outcome.resumed_cells,
    });
    let text = pretty.then(|| {
        format!(
            "{} records ({} failed), {} captions, {} cells resumed -> {}",
            outcome.records.len(),
            outcome.failed,
            outcome.caption_calls,
            outcome.resumed_cells,
            cfg.output_dir.display()
        )
    });
    emit(io, &summary, text)?;
    Ok(if outcome.unreachable {
        EXIT_UNREACHABLE
    } else if outcome.failed > 0 {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    })
}

fn cmd_report(a: &ReportArgs, pretty: bool, io: &mut Io<'_>) -> Result<i32, CliError> {
    let rows = read_aggregates_csv(&a.aggregates).map_err(CliError::usage)?;
    let manifest = render_all(&rows, &a.out).map_err(CliError::usage)?;
    let text = pretty.then(|| {
        let mut s = format!("{} charts in {}", manifest.charts.len(), a.out.display());
        for w in &manifest.warnings {
            s.push_str(&format!("\nwarning: {w}"));
        }
        s
    });
    emit(io, &manifest, text)?;
    Ok(EXIT_OK)
}

fn cmd_stub(a: &StubArgs, io: &mut Io<'_>) -> Result<i32, CliError> {
    let server = StubServer::bind(
        &a.addr,
        StubConfig {
            token: a.token.clone(),
            ..StubConfig::default()
        },
    )
    .map_err(|e| CliError::usage(format!("bind {}: {e}", a.addr)))?;
    emit(io, &json!({ "listening": server.url() }), None)?;
    io.stdout.flush().map_err(CliError::usage)?;
    server.join();
    Ok(EXIT_OK)
}

fn cmd_synth(a: &SynthArgs, pretty: bool, io: &mut Io<'_>) -> Result<i32, CliError> {
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::usage(format!("{}: {e}", a.out.display())))?;
    let ds = synthetic_dataset(a.count, a.size, a.size);
    let mut written = Vec::new();
    for (id, img) in &ds.images {
        let path = a.out.join(format!("{id}.ppm"));
        save_image(&path, img).map_err(CliError::usage)?;
        written.push(path);
    }
    let text = pretty.then(|| format!("{} images in {}", written.len(), a.out.display()));
    emit(io, &json!({ "images": written }), text)?;
    Ok(EXIT_OK)
}
