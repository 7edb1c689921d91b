//! One transmission: caption the original, pass the caption through the
//! text channel, regenerate an image from what arrived and score it against
//! both the original and a fixed control image.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, Captioner, Embedder, GenerationRequest, Providers};
use crate::imagecore::{resize_bilinear, to_gray, to_rgb, ImageBuffer};
use crate::metrics::{clip_score_from_embeddings, psnr, ssim, Embedding, MetricReport};
use crate::text_channel::{corrupt, ErrorSpec, ErrorType, TextMessage};

pub const DEFAULT_GENERATION_SIDE: usize = 512;
pub const CONTROL_SIDE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Caption,
    Channel,
    Generate,
    Score,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Caption => "caption",
            Stage::Channel => "channel",
            Stage::Generate => "generate",
            Stage::Score => "score",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed {
        stage: Stage,
        message: String,
        #[serde(default)]
        unreachable: bool,
    },
}

impl TrialStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, TrialStatus::Ok)
    }

    /// `ok` or `failed:<stage>`, as written to CSV.
    pub fn token(&self) -> String {
        match self {
            TrialStatus::Ok => "ok".into(),
            TrialStatus::Failed { stage, .. } => format!("failed:{stage}"),
        }
    }
}

/// Per-stage wall-clock durations in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub caption_ms: f64,
    pub channel_ms: f64,
    pub generate_ms: f64,
    pub score_ms: f64,
}

/// How the generated image was produced and brought onto comparison grids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationAudit {
    pub width: usize,
    pub height: usize,
    pub resized_for_original: bool,
    pub resized_for_control: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub image_id: String,
    pub error_type: ErrorType,
    pub requested_ratio: f64,
    pub realized_ratio: f64,
    pub channel_seed: u64,
    pub gen_seed: u64,
    pub caption_clean: String,
    pub caption_corrupted: String,
    pub metrics_vs_original: Option<MetricReport>,
    pub metrics_vs_control: Option<MetricReport>,
    pub status: TrialStatus,
    pub generation: GenerationAudit,
    pub timings: StageTimings,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status.is_ok()
    }

    /// The record with timings zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> TrialRecord {
        TrialRecord {
            timings: StageTimings::default(),
            ..self.clone()
        }
    }
}

type CaptionSlot = Arc<OnceLock<Result<TextMessage, BackendError>>>;
type EmbeddingSlot = Arc<OnceLock<Result<Embedding, BackendError>>>;

/// Compute-once caches shared by every trial of an experiment: one caption
/// per image and one embedding per reference image.
#[derive(Default)]
pub struct TrialCache {
    captions: Mutex<HashMap<String, CaptionSlot>>,
    embeddings: Mutex<HashMap<String, EmbeddingSlot>>,
    caption_calls: AtomicUsize,
}

impl TrialCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of times a captioner was actually invoked through this cache.
    pub fn caption_calls(&self) -> usize {
        self.caption_calls.load(Ordering::SeqCst)
    }

    fn reference_embedding(
        &self,
        key: &str,
        img: &ImageBuffer,
        embedder: &dyn Embedder,
    ) -> Result<Embedding, BackendError> {
        let slot = self
            .embeddings
            .lock()
            .expect("cache poisoned")
            .entry(key.to_owned())
            .or_default()
            .clone();
        slot.get_or_init(|| embedder.embed(img)).clone()
    }
}

/// Captions `original` at most once per `image_id` for the lifetime of
/// `cache`; later calls reuse the first result.
pub fn caption_once(
    image_id: &str,
    original: &ImageBuffer,
    captioner: &dyn Captioner,
    cache: &TrialCache,
) -> Result<TextMessage, BackendError> {
    let slot = cache
        .captions
        .lock()
        .expect("cache poisoned")
        .entry(image_id.to_owned())
        .or_default()
        .clone();
    slot.get_or_init(|| {
        cache.caption_calls.fetch_add(1, Ordering::SeqCst);
        captioner.caption(original)
    })
    .clone()
}

/// Everything one trial needs besides the providers.
#[derive(Debug, Clone, Copy)]
pub struct TrialInput<'a> {
    pub image_id: &'a str,
    pub original: &'a ImageBuffer,
    pub control: &'a ImageBuffer,
    pub spec: ErrorSpec,
    pub gen_seed: u64,
    pub gen_width: usize,
    pub gen_height: usize,
}

/// Resizes `img` onto `target`'s grid and matches its channel count.
pub fn align_to(img: &ImageBuffer, target: &ImageBuffer) -> (ImageBuffer, bool) {
    let resized = img.width() != target.width() || img.height() != target.height();
    let out = resize_bilinear(img, target.width(), target.height());
    let out = match (out.channels(), target.channels()) {
        (3, 1) => to_gray(&out),
        (1, 3) => to_rgb(&out),
        _ => out,
    };
    (out, resized)
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs caption -> channel -> generate -> score. Never panics on provider
/// failure; a failed stage is recorded in the returned record's status.
pub fn run_trial(input: &TrialInput<'_>, providers: &Providers, cache: &TrialCache) -> TrialRecord {
    let mut record = TrialRecord {
        image_id: input.image_id.to_owned(),
        error_type: input.spec.error_type,
        requested_ratio: input.spec.ratio,
        realized_ratio: 0.0,
        channel_seed: input.spec.seed,
        gen_seed: input.gen_seed,
        caption_clean: String::new(),
        caption_corrupted: String::new(),
        metrics_vs_original: None,
        metrics_vs_control: None,
        status: TrialStatus::Ok,
        generation: GenerationAudit {
            width: input.gen_width,
            height: input.gen_height,
            ..Default::default()
        },
        timings: StageTimings::default(),
    };
    let fail = |record: &mut TrialRecord, stage: Stage, message: String, unreachable: bool| {
        record.status = TrialStatus::Failed {
            stage,
            message,
            unreachable,
        };
    };
    let backend_fail = |record: &mut TrialRecord, stage: Stage, e: BackendError| {
        let unreachable = e.is_unreachable();
        fail(record, stage, e.to_string(), unreachable);
    };

    let t = Instant::now();
    let caption = caption_once(input.image_id, input.original, providers.captioner.as_ref(), cache);
    record.timings.caption_ms = elapsed_ms(t);
    let caption = match caption {
        Ok(c) => c,
        Err(e) => {
            backend_fail(&mut record, Stage::Caption, e);
            return record;
        }
    };
    record.caption_clean = caption.as_str().to_owned();

    let t = Instant::now();
    let outcome = match corrupt(&caption, &input.spec) {
        Ok(o) => o,
        Err(e) => {
            fail(&mut record, Stage::Channel, e.to_string(), false);
            return record;
        }
    };
    record.timings.channel_ms = elapsed_ms(t);
    record.realized_ratio = outcome.realized_ratio;
    record.caption_corrupted = outcome.corrupted.as_str().to_owned();

    let t = Instant::now();
    let request = match GenerationRequest::new(
        outcome.corrupted,
        input.gen_seed,
        input.gen_width,
        input.gen_height,
    ) {
        Ok(r) => r,
        Err(message) => {
            fail(&mut record, Stage::Generate, message, false);
            return record;
        }
    };
    let generated = providers.generator.generate(&request);
    record.timings.generate_ms = elapsed_ms(t);
    let generated = match generated {
        Ok(g) => g,
        Err(e) => {
            backend_fail(&mut record, Stage::Generate, e);
            return record;
        }
    };

    let t = Instant::now();
    let scored = score(input, &generated, providers.embedder.as_ref(), cache);
    record.timings.score_ms = elapsed_ms(t);
    match scored {
        Ok((vs_original, vs_control, audit)) => {
            record.metrics_vs_original = Some(vs_original);
            record.metrics_vs_control = Some(vs_control);
            record.generation.resized_for_original = audit.0;
            record.generation.resized_for_control = audit.1;
        }
        Err(ScoreError::Backend(e)) => backend_fail(&mut record, Stage::Score, e),
        Err(ScoreError::Other(message)) => fail(&mut record, Stage::Score, message, false),
    }
    record
}

enum ScoreError {
    Backend(BackendError),
    Other(String),
}

impl From<crate::metrics::MetricError> for ScoreError {
    fn from(e: crate::metrics::MetricError) -> Self {
        match e {
            crate::metrics::MetricError::Backend(b) => ScoreError::Backend(b),
            other => ScoreError::Other(other.to_string()),
        }
    }
}

fn score(
    input: &TrialInput<'_>,
    generated: &ImageBuffer,
    embedder: &dyn Embedder,
    cache: &TrialCache,
) -> Result<(MetricReport, MetricReport, (bool, bool)), ScoreError> {
    let gen_embedding = embedder.embed(generated).map_err(ScoreError::Backend)?;
    let pair = |reference: &ImageBuffer, key: String| -> Result<(MetricReport, bool), ScoreError> {
        let (aligned, resized) = align_to(generated, reference);
        let reference_embedding = cache
            .reference_embedding(&key, reference, embedder)
            .map_err(ScoreError::Backend)?;
        Ok((
            MetricReport {
                psnr_db: psnr(reference, &aligned)?,
                ssim: ssim(reference, &aligned)?,
                clip_score_pct: clip_score_from_embeddings(&reference_embedding, &gen_embedding)?,
            },
            resized,
        ))
    };
    let (vs_original, r1) = pair(input.original, format!("original:{}", input.image_id))?;
    let (vs_control, r2) = pair(input.control, "control".to_owned())?;
    Ok((vs_original, vs_control, (r1, r2)))
}

/// The fixed, semantically unrelated reference image: a checkerboard laid
/// over horizontal and vertical ramps.
pub fn builtin_control(width: usize, height: usize) -> ImageBuffer {
    let cell = (width.min(height) / 8).max(1);
    ImageBuffer::from_fn(width, height, |x, y| {
        let ramp_x = (x * 255 / (width - 1).max(1)) as u8;
        let ramp_y = (y * 255 / (height - 1).max(1)) as u8;
        let dark = ((x / cell) + (y / cell)).is_multiple_of(2);
        if dark {
            [ramp_x / 2, 30, 255 - ramp_y / 2]
        } else {
            [255 - ramp_y / 3, 220, ramp_x / 3 + 80]
        }
    })
    .expect("positive control size")
}
