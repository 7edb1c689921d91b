//! Error-type x ratio sweeps over an image set, with per-cell aggregation.
//!
//! A cell is one (error type, ratio, image) condition. Each cell gets one
//! channel realization, reused by all of its generations, so the repeated
//! generations only sample the generator's own randomness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendEndpoint, ProviderIdentities, Providers};
use crate::imagecore::{is_supported_extension, load_image, ImageBuffer, ImageError};
use crate::pipeline::{
    builtin_control, run_trial, TrialCache, TrialInput, TrialRecord, CONTROL_SIDE,
    DEFAULT_GENERATION_SIDE,
};
use crate::report::{write_aggregates_csv, write_records_csv, ReportError};
use crate::rng::mix_all;
use crate::text_channel::{ErrorSpec, ErrorType};

pub const DEFAULT_GENERATIONS: usize = 10;
pub const BUILTIN_CONTROL: &str = "builtin";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("dataset {0} contains no supported images")]
    EmptyDataset(PathBuf),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SweepError + '_ {
    move |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Model servers for a sweep: `"mock"`, one endpoint for all roles, or one
/// endpoint per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BackendsRepr", into = "BackendsRepr")]
pub enum BackendsConfig {
    Mock,
    Shared(BackendEndpoint),
    PerRole {
        captioner: BackendEndpoint,
        generator: BackendEndpoint,
        embedder: BackendEndpoint,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum BackendsRepr {
    Tag(String),
    Shared(BackendEndpoint),
    PerRole {
        captioner: BackendEndpoint,
        generator: BackendEndpoint,
        embedder: BackendEndpoint,
    },
}

impl TryFrom<BackendsRepr> for BackendsConfig {
    type Error = String;

    fn try_from(r: BackendsRepr) -> Result<Self, String> {
        match r {
            BackendsRepr::Tag(t) if t == "mock" => Ok(BackendsConfig::Mock),
            BackendsRepr::Tag(t) => Err(format!("unknown backends tag {t:?} (expected \"mock\")")),
            BackendsRepr::Shared(e) => Ok(BackendsConfig::Shared(e)),
            BackendsRepr::PerRole {
                captioner,
                generator,
                embedder,
            } => Ok(BackendsConfig::PerRole {
                captioner,
                generator,
                embedder,
            }),
        }
    }
}

impl From<BackendsConfig> for BackendsRepr {
    fn from(c: BackendsConfig) -> Self {
        match c {
            BackendsConfig::Mock => BackendsRepr::Tag("mock".into()),
            BackendsConfig::Shared(e) => BackendsRepr::Shared(e),
            BackendsConfig::PerRole {
                captioner,
                generator,
                embedder,
            } => BackendsRepr::PerRole {
                captioner,
                generator,
                embedder,
            },
        }
    }
}

impl BackendsConfig {
    pub fn providers(&self) -> Result<Providers, String> {
        match self {
            BackendsConfig::Mock => Ok(Providers::mock()),
            BackendsConfig::Shared(e) => Providers::http(e.clone()),
            BackendsConfig::PerRole {
                captioner,
                generator,
                embedder,
            } => Providers::http_per_role(captioner.clone(), generator.clone(), embedder.clone()),
        }
    }

    /// Largest in-flight budget across endpoints (unbounded for mocks).
    pub fn max_parallel(&self) -> Option<usize> {
        match self {
            BackendsConfig::Mock => None,
            BackendsConfig::Shared(e) => Some(e.max_parallel),
            BackendsConfig::PerRole {
                captioner,
                generator,
                embedder,
            } => Some(
                captioner
                    .max_parallel
                    .max(generator.max_parallel)
                    .max(embedder.max_parallel),
            ),
        }
    }
}

/// A full sweep description. Field names are the JSON config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dataset_dir: PathBuf,
    #[serde(default = "default_control")]
    pub control_image: String,
    #[serde(default = "default_error_types")]
    pub error_types: Vec<ErrorType>,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_generations")]
    pub generations_per_caption: usize,
    #[serde(default)]
    pub channel_seed_base: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_backends")]
    pub backends: BackendsConfig,
    #[serde(default = "default_side")]
    pub generation_width: usize,
    #[serde(default = "default_side")]
    pub generation_height: usize,
}

fn default_control() -> String {
    BUILTIN_CONTROL.into()
}

fn default_error_types() -> Vec<ErrorType> {
    ErrorType::ALL.to_vec()
}

fn default_ratios() -> Vec<f64> {
    default_grid().ratios
}

fn default_generations() -> usize {
    DEFAULT_GENERATIONS
}

fn default_backends() -> BackendsConfig {
    BackendsConfig::Mock
}

fn default_side() -> usize {
    DEFAULT_GENERATION_SIDE
}

/// The grid part of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub error_types: Vec<ErrorType>,
    pub ratios: Vec<f64>,
    pub generations_per_caption: usize,
}

/// Ratios 0 to 50% in 5% steps for all three error types, ten generations
/// per caption.
pub fn default_grid() -> Grid {
    Grid {
        error_types: ErrorType::ALL.to_vec(),
        ratios: (0..=10).map(|i| f64::from(i) / 20.0).collect(),
        generations_per_caption: DEFAULT_GENERATIONS,
    }
}

impl Grid {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.generations_per_caption == 0 {
            return Err(SweepError::Config("generations_per_caption must be at least 1".into()));
        }
        if self.error_types.is_empty() {
            return Err(SweepError::Config("error_types is empty".into()));
        }
        if self.ratios.is_empty() {
            return Err(SweepError::Config("ratios is empty".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(SweepError::Config(format!("ratio {r} outside [0, 1]")));
        }
        if self.ratios.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SweepError::Config("ratios must be strictly ascending".into()));
        }
        let mut seen = self.error_types.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.error_types.len() {
            return Err(SweepError::Config("error_types contains duplicates".into()));
        }
        Ok(())
    }
}

impl SweepConfig {
    pub fn grid(&self) -> Grid {
        Grid {
            error_types: self.error_types.clone(),
            ratios: self.ratios.clone(),
            generations_per_caption: self.generations_per_caption,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        self.grid().validate()?;
        if self.generation_width < crate::backends::MIN_GENERATION_SIDE
            || self.generation_height < crate::backends::MIN_GENERATION_SIDE
        {
            return Err(SweepError::Config(format!(
                "generation size {}x{} below the 16x16 minimum",
                self.generation_width, self.generation_height
            )));
        }
        match &self.backends {
            BackendsConfig::Mock => Ok(()),
            BackendsConfig::Shared(e) => e.validate().map_err(SweepError::Config),
            BackendsConfig::PerRole {
                captioner,
                generator,
                embedder,
            } => [captioner, generator, embedder]
                .into_iter()
                .try_for_each(|e| e.validate())
                .map_err(SweepError::Config),
        }
    }

    pub fn load_control(&self) -> Result<ImageBuffer, SweepError> {
        if self.control_image == BUILTIN_CONTROL {
            Ok(builtin_control(CONTROL_SIDE, CONTROL_SIDE))
        } else {
            Ok(load_image(Path::new(&self.control_image))?)
        }
    }
}

/// Channel seed for one cell.
pub fn cell_seed(base: u64, error_type: ErrorType, ratio_index: usize, image_index: usize) -> u64 {
    mix_all(&[
        base,
        u64::from(error_type.code()),
        ratio_index as u64,
        image_index as u64,
    ])
}

/// Named images, in file-name order.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub images: Vec<(String, ImageBuffer)>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, SweepError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_supported_extension(p))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(SweepError::EmptyDataset(dir.to_path_buf()));
        }
        let mut images = Vec::with_capacity(paths.len());
        for p in paths {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_owned();
            images.push((id, load_image(&p)?));
        }
        Ok(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Deterministic synthetic underwater-ish test image: four palette-colored
/// quadrants under a soft vertical light falloff.
pub fn synthetic_image(index: usize, width: usize, height: usize) -> ImageBuffer {
    use crate::backends::mock::PALETTE;
    let key = mix_all(&[0x5EED, index as u64]);
    let quad_colors: Vec<[u8; 3]> = (0..4)
        .map(|q| PALETTE[(mix_all(&[key, q]) % PALETTE.len() as u64) as usize].1)
        .collect();
    ImageBuffer::from_fn(width, height, |x, y| {
        let q = usize::from(x >= width / 2) + 2 * usize::from(y >= height / 2);
        let falloff = 1.0 - 0.25 * (y as f64 / height as f64);
        let grain = (mix_all(&[key, (y * width + x) as u64]) % 9) as f64 - 4.0;
        quad_colors[q].map(|v| (f64::from(v) * falloff + grain).round().clamp(0.0, 255.0) as u8)
    })
    .expect("positive size")
}

pub fn synthetic_dataset(count: usize, width: usize, height: usize) -> Dataset {
    Dataset {
        images: (0..count)
            .map(|i| (format!("synthetic_{i:03}"), synthetic_image(i, width, height)))
            .collect(),
    }
}

/// Settings for executing a grid independent of where images come from.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub channel_seed_base: u64,
    pub gen_width: usize,
    pub gen_height: usize,
    /// Worker threads; `None` uses all logical CPUs.
    pub jobs: Option<usize>,
    /// Directory holding completed-cell checkpoints for resumption.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            channel_seed_base: 0,
            gen_width: DEFAULT_GENERATION_SIDE,
            gen_height: DEFAULT_GENERATION_SIDE,
            jobs: None,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    error_type: ErrorType,
    ratio_index: usize,
    ratio: f64,
    image_index: usize,
}

impl Cell {
    fn checkpoint_name(&self) -> String {
        format!(
            "t{}_r{:03}_i{:05}.json",
            self.error_type.code(),
            self.ratio_index,
            self.image_index
        )
    }
}

/// Records plus bookkeeping from [`execute_grid`].
#[derive(Debug, Clone, Default)]
pub struct GridRun {
    pub records: Vec<TrialRecord>,
    pub resumed_cells: usize,
    pub caption_calls: usize,
}

/// Runs every (error type, ratio, image, generation) trial of `grid`.
/// Records come back sorted by (type, ratio, image id, generation seed).
pub fn execute_grid(
    dataset: &Dataset,
    control: &ImageBuffer,
    grid: &Grid,
    providers: &Providers,
    opts: &RunOptions,
) -> Result<GridRun, SweepError> {
    grid.validate()?;
    if dataset.is_empty() {
        return Err(SweepError::Config("dataset is empty".into()));
    }
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let cells: Vec<Cell> = grid
        .error_types
        .iter()
        .flat_map(|&error_type| {
            grid.ratios.iter().enumerate().flat_map(move |(ratio_index, &ratio)| {
                (0..dataset.len()).map(move |image_index| Cell {
                    error_type,
                    ratio_index,
                    ratio,
                    image_index,
                })
            })
        })
        .collect();

    let cache = TrialCache::new();
    let run_cell = |cell: &Cell| -> (Vec<TrialRecord>, bool) {
        let checkpoint = opts
            .checkpoint_dir
            .as_ref()
            .map(|d| d.join(cell.checkpoint_name()));
        let (image_id, original) = &dataset.images[cell.image_index];
        let spec = ErrorSpec {
            error_type: cell.error_type,
            ratio: cell.ratio,
            seed: cell_seed(
                opts.channel_seed_base,
                cell.error_type,
                cell.ratio_index,
                cell.image_index,
            ),
        };
        if let Some(records) = checkpoint.as_deref().and_then(read_checkpoint) {
            // Only reuse a checkpoint written for exactly this cell.
            let matches = records.len() == grid.generations_per_caption
                && records.iter().zip(0u64..).all(|(r, g)| {
                    r.image_id == *image_id
                        && r.error_type == spec.error_type
                        && r.requested_ratio == spec.ratio
                        && r.channel_seed == spec.seed
                        && r.gen_seed == g
                        && r.generation.width == opts.gen_width
                        && r.generation.height == opts.gen_height
                        && r.is_ok()
                });
            if matches {
                return (records, true);
            }
        }
        let records: Vec<TrialRecord> = (0..grid.generations_per_caption as u64)
            .map(|gen_seed| {
                run_trial(
                    &TrialInput {
                        image_id,
                        original,
                        control,
                        spec,
                        gen_seed,
                        gen_width: opts.gen_width,
                        gen_height: opts.gen_height,
                    },
                    providers,
                    &cache,
                )
            })
            .collect();
        if let Some(path) = checkpoint {
            if records.iter().all(TrialRecord::is_ok) {
                // A lost checkpoint only costs recomputation.
                let _ = write_checkpoint(&path, &records);
            }
        }
        (records, false)
    };

    let results: Vec<(Vec<TrialRecord>, bool)> = match opts.jobs {
        Some(1) => cells.iter().map(run_cell).collect(),
        jobs => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| SweepError::Config(format!("thread pool: {e}")))?;
            pool.install(|| cells.par_iter().map(run_cell).collect())
        }
    };

    let resumed_cells = results.iter().filter(|(_, resumed)| *resumed).count();
    let mut records: Vec<TrialRecord> = results.into_iter().flat_map(|(r, _)| r).collect();
    sort_records(&mut records);
    Ok(GridRun {
        records,
        resumed_cells,
        caption_calls: cache.caption_calls(),
    })
}

pub fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by(|a, b| {
        a.error_type
            .cmp(&b.error_type)
            .then(a.requested_ratio.total_cmp(&b.requested_ratio))
            .then_with(|| a.image_id.cmp(&b.image_id))
            .then(a.gen_seed.cmp(&b.gen_seed))
    });
}

fn read_checkpoint(path: &Path) -> Option<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_checkpoint(path: &Path, records: &[TrialRecord]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec(records).map_err(std::io::Error::other)?)?;
    std::fs::rename(tmp, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PsnrDb,
    Ssim,
    ClipScorePct,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::PsnrDb, Metric::Ssim, Metric::ClipScorePct];

    pub fn key(self) -> &'static str {
        match self {
            Metric::PsnrDb => "psnr_db",
            Metric::Ssim => "ssim",
            Metric::ClipScorePct => "clip_score_pct",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.key() == key)
    }

    pub fn of(self, report: &crate::metrics::MetricReport) -> f64 {
        match self {
            Metric::PsnrDb => report.psnr_db,
            Metric::Ssim => report.ssim,
            Metric::ClipScorePct => report.clip_score_pct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    VsOriginal,
    VsControl,
}

impl Series {
    pub const ALL: [Series; 2] = [Series::VsOriginal, Series::VsControl];

    pub fn key(self) -> &'static str {
        match self {
            Series::VsOriginal => "vs_original",
            Series::VsControl => "vs_control",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.key() == key)
    }

    pub fn of(self, record: &TrialRecord) -> Option<&crate::metrics::MetricReport> {
        match self {
            Series::VsOriginal => record.metrics_vs_original.as_ref(),
            Series::VsControl => record.metrics_vs_control.as_ref(),
        }
    }
}

/// Mean and sample standard deviation of one metric over one cell group.
/// `mean`/`std` are `None` when no finite value survived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub error_type: ErrorType,
    pub ratio: f64,
    pub metric: Metric,
    pub series: Series,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
    /// Non-finite values (infinite PSNR) left out of the mean.
    pub excluded: usize,
}

impl AggregateRow {
    pub fn is_empty(&self) -> bool {
        self.mean.is_none()
    }
}

/// Two-pass mean and sample standard deviation (`n - 1`; 0 for one value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

/// Per-(type, ratio, metric, series) statistics over successful trials.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRow> {
    // Bit patterns of non-negative floats sort like the floats themselves.
    let mut groups: BTreeMap<(ErrorType, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.error_type, r.requested_ratio.to_bits()))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::new();
    for ((error_type, bits), group) in groups {
        let ratio = f64::from_bits(bits);
        for metric in Metric::ALL {
            for series in Series::ALL {
                let all: Vec<f64> = group
                    .iter()
                    .filter(|r| r.is_ok())
                    .filter_map(|r| series.of(r))
                    .map(|m| metric.of(m))
                    .collect();
                let finite: Vec<f64> = all.iter().copied().filter(|v| v.is_finite()).collect();
                let stats = mean_std(&finite);
                rows.push(AggregateRow {
                    error_type,
                    ratio,
                    metric,
                    series,
                    mean: stats.map(|s| s.0),
                    std: stats.map(|s| s.1),
                    n: finite.len(),
                    excluded: all.len() - finite.len(),
                });
            }
        }
    }
    rows
}

/// Everything a finished sweep produced.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub failed: usize,
    pub unreachable: bool,
    pub resumed_cells: usize,
    pub caption_calls: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit: String,
    pub version: String,
    pub config: SweepConfig,
    pub providers: ProviderIdentities,
    pub images: Vec<String>,
    pub records: usize,
    pub failed: usize,
    pub caption_calls: usize,
    pub resumed_cells: usize,
}

pub const RECORDS_FILE: &str = "records.csv";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "cells";

/// Loads the dataset and control image, runs the grid and writes
/// `records.csv`, `aggregates.csv` and `manifest.json` into `output_dir`.
/// Completed cells found under `output_dir/cells` are reused.
pub fn run_sweep(
    cfg: &SweepConfig,
    providers: &Providers,
    jobs: Option<usize>,
) -> Result<SweepOutcome, SweepError> {
    cfg.validate()?;
    let dataset = Dataset::load(&cfg.dataset_dir)?;
    let control = cfg.load_control()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;

    let jobs = match (jobs, cfg.backends.max_parallel()) {
        (Some(j), Some(p)) => Some(j.min(p).max(1)),
        (None, Some(p)) => Some(p),
        (j, None) => j,
    };
    let opts = RunOptions {
        channel_seed_base: cfg.channel_seed_base,
        gen_width: cfg.generation_width,
        gen_height: cfg.generation_height,
        jobs,
        checkpoint_dir: Some(cfg.output_dir.join(CHECKPOINT_DIR)),
    };
    let run = execute_grid(&dataset, &control, &cfg.grid(), providers, &opts)?;
    let aggregates = aggregate(&run.records);

    write_records_csv(&run.records, &cfg.output_dir.join(RECORDS_FILE))?;
    write_aggregates_csv(&aggregates, &cfg.output_dir.join(AGGREGATES_FILE))?;

    let failed = run.records.iter().filter(|r| !r.is_ok()).count();
    let unreachable = run.records.iter().any(|r| {
        matches!(
            r.status,
            crate::pipeline::TrialStatus::Failed {
                unreachable: true,
                ..
            }
        )
    });
    let manifest = Manifest {
        toolkit: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        providers: providers.identities(),
        images: dataset.images.iter().map(|(id, _)| id.clone()).collect(),
        records: run.records.len(),
        failed,
        caption_calls: run.caption_calls,
        resumed_cells: run.resumed_cells,
    };
    let manifest_path = cfg.output_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;

    Ok(SweepOutcome {
        records: run.records,
        aggregates,
        failed,
        unreachable,
        resumed_cells: run.resumed_cells,
        caption_calls: run.caption_calls,
    })
}
