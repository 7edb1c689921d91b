//! CSV emission and SVG line charts of per-ratio metric means.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{AggregateRow, Metric, Series};
use crate::metrics::MetricReport;
use crate::pipeline::TrialRecord;
use crate::text_channel::ErrorType;

pub const RECORDS_HEADER: [&str; 14] = [
    "image_id",
    "error_type",
    "requested_ratio",
    "realized_ratio",
    "gen_seed",
    "caption_clean",
    "caption_corrupted",
    "psnr_db_orig",
    "ssim_orig",
    "clip_orig",
    "psnr_db_ctrl",
    "ssim_ctrl",
    "clip_ctrl",
    "status",
];

pub const AGGREGATES_HEADER: [&str; 8] = [
    "error_type", "ratio", "metric", "series", "mean", "std", "n", "excluded",
];

pub const ORIGINAL_COLOR: &str = "#1f77b4";
pub const CONTROL_COLOR: &str = "#d62728";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("chart series length {got} does not match {expected} x values")]
    SeriesLength { expected: usize, got: usize },
    #[error("chart needs at least 2 x values, got {0}")]
    TooFewPoints(usize),
    #[error("chart x values must be strictly ascending")]
    UnsortedX,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Rounds to the 6 decimals written to CSV; the result prints and parses
/// back to the identical `f64`.
pub fn quantize(v: f64) -> f64 {
    if v.is_finite() {
        (v * 1e6).round() / 1e6 + 0.0
    } else {
        v
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{:.6}", quantize(v))
    }
}

fn parse_float(s: &str, row: usize) -> Result<f64, ReportError> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| ReportError::Malformed {
            row,
            message: format!("bad number {s:?}"),
        }),
    }
}

fn parse_opt_float(s: &str, row: usize) -> Result<Option<f64>, ReportError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_float(s, row).map(Some)
    }
}

fn parse_int<T: std::str::FromStr>(s: &str, row: usize) -> Result<T, ReportError> {
    s.parse().map_err(|_| ReportError::Malformed {
        row,
        message: format!("bad integer {s:?}"),
    })
}

/// One `records.csv` line. Floats hold exactly what the file can represent.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub image_id: String,
    pub error_type: ErrorType,
    pub requested_ratio: f64,
    pub realized_ratio: f64,
    pub gen_seed: u64,
    pub caption_clean: String,
    pub caption_corrupted: String,
    pub vs_original: Option<MetricReport>,
    pub vs_control: Option<MetricReport>,
    pub status: String,
}

fn quantize_report(m: &MetricReport) -> MetricReport {
    MetricReport {
        psnr_db: quantize(m.psnr_db),
        ssim: quantize(m.ssim),
        clip_score_pct: quantize(m.clip_score_pct),
    }
}

impl From<&TrialRecord> for RecordRow {
    fn from(r: &TrialRecord) -> Self {
        Self {
            image_id: r.image_id.clone(),
            error_type: r.error_type,
            requested_ratio: quantize(r.requested_ratio),
            realized_ratio: quantize(r.realized_ratio),
            gen_seed: r.gen_seed,
            caption_clean: r.caption_clean.clone(),
            caption_corrupted: r.caption_corrupted.clone(),
            vs_original: r.metrics_vs_original.as_ref().map(quantize_report),
            vs_control: r.metrics_vs_control.as_ref().map(quantize_report),
            status: r.status.token(),
        }
    }
}

fn report_fields(m: Option<&MetricReport>) -> [String; 3] {
    match m {
        Some(m) => [
            format_float(m.psnr_db),
            format_float(m.ssim),
            format_float(m.clip_score_pct),
        ],
        None => Default::default(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ReportError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, ReportError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().from_reader(file))
}

pub fn write_record_rows(rows: &[RecordRow], path: &Path) -> Result<(), ReportError> {
    let mut w = csv_writer(path)?;
    w.write_record(RECORDS_HEADER)?;
    for r in rows {
        let [po, so, co] = report_fields(r.vs_original.as_ref());
        let [pc, sc, cc] = report_fields(r.vs_control.as_ref());
        w.write_record([
            r.image_id.clone(),
            r.error_type.code().to_string(),
            format_float(r.requested_ratio),
            format_float(r.realized_ratio),
            r.gen_seed.to_string(),
            r.caption_clean.clone(),
            r.caption_corrupted.clone(),
            po,
            so,
            co,
            pc,
            sc,
            cc,
            r.status.clone(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes records in (type, ratio, image id, generation seed) order.
pub fn write_records_csv(records: &[TrialRecord], path: &Path) -> Result<(), ReportError> {
    let mut sorted: Vec<TrialRecord> = records.to_vec();
    crate::experiment::sort_records(&mut sorted);
    let rows: Vec<RecordRow> = sorted.iter().map(RecordRow::from).collect();
    write_record_rows(&rows, path)
}

fn check_header(reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<(), ReportError> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(ReportError::Malformed {
            row: 0,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<RecordRow>, ReportError> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, &RECORDS_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let f = |k: usize| rec.get(k).unwrap_or_default();
        let report = |base: usize| -> Result<Option<MetricReport>, ReportError> {
            let vals = [
                parse_opt_float(f(base), row)?,
                parse_opt_float(f(base + 1), row)?,
                parse_opt_float(f(base + 2), row)?,
            ];
            Ok(match vals {
                [Some(psnr_db), Some(ssim), Some(clip_score_pct)] => Some(MetricReport {
                    psnr_db,
                    ssim,
                    clip_score_pct,
                }),
                _ => None,
            })
        };
        rows.push(RecordRow {
            image_id: f(0).to_owned(),
            error_type: ErrorType::try_from(parse_int::<u8>(f(1), row)?).map_err(|e| {
                ReportError::Malformed {
                    row,
                    message: e.to_string(),
                }
            })?,
            requested_ratio: parse_float(f(2), row)?,
            realized_ratio: parse_float(f(3), row)?,
            gen_seed: parse_int(f(4), row)?,
            caption_clean: f(5).to_owned(),
            caption_corrupted: f(6).to_owned(),
            vs_original: report(7)?,
            vs_control: report(10)?,
            status: f(13).to_owned(),
        });
    }
    Ok(rows)
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn write_aggregates_csv(rows: &[AggregateRow], path: &Path) -> Result<(), ReportError> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| {
        a.error_type
            .cmp(&b.error_type)
            .then(a.ratio.total_cmp(&b.ratio))
            .then(a.metric.cmp(&b.metric))
            .then(a.series.cmp(&b.series))
    });
    let mut w = csv_writer(path)?;
    w.write_record(AGGREGATES_HEADER)?;
    for r in &sorted {
        w.write_record([
            r.error_type.code().to_string(),
            format_float(r.ratio),
            r.metric.key().to_owned(),
            r.series.key().to_owned(),
            opt_float(r.mean),
            opt_float(r.std),
            r.n.to_string(),
            r.excluded.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_aggregates_csv(path: &Path) -> Result<Vec<AggregateRow>, ReportError> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, &AGGREGATES_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let f = |k: usize| rec.get(k).unwrap_or_default();
        let malformed = |message: String| ReportError::Malformed { row, message };
        rows.push(AggregateRow {
            error_type: ErrorType::try_from(parse_int::<u8>(f(0), row)?)
                .map_err(|e| malformed(e.to_string()))?,
            ratio: parse_float(f(1), row)?,
            metric: Metric::from_key(f(2)).ok_or_else(|| malformed(format!("metric {:?}", f(2))))?,
            series: Series::from_key(f(3)).ok_or_else(|| malformed(format!("series {:?}", f(3))))?,
            mean: parse_opt_float(f(4), row)?,
            std: parse_opt_float(f(5), row)?,
            n: parse_int(f(6), row)?,
            excluded: parse_int(f(7), row)?,
        });
    }
    Ok(rows)
}

/// Chart geometry in SVG user units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartLayout {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

pub const LAYOUT: ChartLayout = ChartLayout {
    width: 720.0,
    height: 440.0,
    left: 72.0,
    right: 180.0,
    top: 48.0,
    bottom: 64.0,
};

impl ChartLayout {
    pub fn plot_width(&self) -> f64 {
        self.width - self.left - self.right
    }

    pub fn plot_height(&self) -> f64 {
        self.height - self.top - self.bottom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub mean: f64,
    pub std: Option<f64>,
}

/// One chart: x in percent, one optional point per x for each series.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub metric: Metric,
    pub error_type: ErrorType,
    pub x_pct: Vec<f64>,
    pub vs_original: Vec<Option<Point>>,
    pub vs_control: Vec<Option<Point>>,
}

pub fn metric_title(metric: Metric) -> &'static str {
    match metric {
        Metric::PsnrDb => "PSNR",
        Metric::Ssim => "SSIM",
        Metric::ClipScorePct => "CLIPScore",
    }
}

fn metric_axis_label(metric: Metric) -> &'static str {
    match metric {
        Metric::PsnrDb => "PSNR (dB)",
        Metric::Ssim => "SSIM",
        Metric::ClipScorePct => "CLIPScore (%)",
    }
}

/// Fixed y range per metric.
pub fn metric_range(metric: Metric) -> (f64, f64) {
    match metric {
        Metric::PsnrDb => (0.0, 80.0),
        Metric::Ssim => (0.0, 1.0),
        Metric::ClipScorePct => (0.0, 100.0),
    }
}

pub fn chart_title(metric: Metric, error_type: ErrorType) -> String {
    format!(
        "Average {} vs Error Percentage (Error Type {})",
        metric_title(metric),
        error_type.code()
    )
}

/// Axis transform of a rendered chart, also embedded as `data-*` attributes
/// on the root element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisTransform {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub layout: ChartLayout,
}

impl AxisTransform {
    pub fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let l = &self.layout;
        let px = l.left + (x - self.x_min) / (self.x_max - self.x_min) * l.plot_width();
        let py = l.top + (1.0 - (y - self.y_min) / (self.y_max - self.y_min)) * l.plot_height();
        (px, py)
    }

    pub fn from_px(&self, px: f64, py: f64) -> (f64, f64) {
        let l = &self.layout;
        let x = self.x_min + (px - l.left) / l.plot_width() * (self.x_max - self.x_min);
        let y = self.y_min + (1.0 - (py - l.top) / l.plot_height()) * (self.y_max - self.y_min);
        (x, y)
    }
}

fn y_extent(spec: &ChartSpec) -> (f64, f64) {
    let (mut lo, mut hi) = metric_range(spec.metric);
    // Means outside the fixed range widen it rather than being clipped.
    // Whiskers are clamped instead.
    for p in spec.vs_original.iter().chain(&spec.vs_control).flatten() {
        lo = lo.min(p.mean);
        hi = hi.max(p.mean);
    }
    (lo, hi)
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_owned() }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a standalone SVG line chart. Output bytes depend only on `spec`.
pub fn render_chart(spec: &ChartSpec) -> Result<Vec<u8>, ReportError> {
    let n = spec.x_pct.len();
    if n < 2 {
        return Err(ReportError::TooFewPoints(n));
    }
    for s in [&spec.vs_original, &spec.vs_control] {
        if s.len() != n {
            return Err(ReportError::SeriesLength {
                expected: n,
                got: s.len(),
            });
        }
    }
    if spec.x_pct.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ReportError::UnsortedX);
    }
    let (y_min, y_max) = y_extent(spec);
    let t = AxisTransform {
        x_min: spec.x_pct[0],
        x_max: spec.x_pct[n - 1],
        y_min,
        y_max,
        layout: LAYOUT,
    };
    let l = LAYOUT;
    let title = chart_title(spec.metric, spec.error_type);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}" data-plot="{} {} {} {}">"##,
        t.x_min,
        t.x_max,
        t.y_min,
        t.y_max,
        l.left,
        l.top,
        l.plot_width(),
        l.plot_height(),
        w = l.width,
        h = l.height,
    );
    let _ = writeln!(s, "<title>{}</title>", escape(&title));
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##,
        l.width, l.height
    );
    let _ = writeln!(
        s,
        r##"<text x="{}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"##,
        fmt_px(l.left + l.plot_width() / 2.0),
        escape(&title)
    );

    // Axes and grid.
    let (x0, y0) = (l.left, l.top + l.plot_height());
    let _ = writeln!(s, r##"<g class="axes" stroke="#333333" stroke-width="1">"##);
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"##,
        fmt_px(x0),
        fmt_px(y0),
        fmt_px(x0 + l.plot_width()),
        fmt_px(y0)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"##,
        fmt_px(x0),
        fmt_px(l.top),
        fmt_px(x0),
        fmt_px(y0)
    );
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g class="ticks" font-family="sans-serif" font-size="11">"##);
    for &x in &spec.x_pct {
        let (px, _) = t.to_px(x, y_min);
        let _ = writeln!(
            s,
            r##"<line x1="{p}" y1="{}" x2="{p}" y2="{}" stroke="#333333"/><text x="{p}" y="{}" text-anchor="middle">{}</text>"##,
            fmt_px(y0),
            fmt_px(y0 + 5.0),
            fmt_px(y0 + 18.0),
            tick_label(x),
            p = fmt_px(px),
        );
    }
    const Y_TICKS: usize = 5;
    for i in 0..=Y_TICKS {
        let v = y_min + (y_max - y_min) * i as f64 / Y_TICKS as f64;
        let (_, py) = t.to_px(t.x_min, v);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{p}" x2="{}" y2="{p}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            fmt_px(x0),
            fmt_px(x0 + l.plot_width()),
            fmt_px(x0 - 6.0),
            fmt_px(py + 4.0),
            tick_label(v),
            p = fmt_px(py),
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">Error Percentage (%)</text>"##,
        fmt_px(l.left + l.plot_width() / 2.0),
        fmt_px(l.height - 18.0)
    );
    let _ = writeln!(
        s,
        r##"<text x="18" y="{y}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"##,
        metric_axis_label(spec.metric),
        y = fmt_px(l.top + l.plot_height() / 2.0)
    );

    for (series, points, color) in [
        (Series::VsOriginal, &spec.vs_original, ORIGINAL_COLOR),
        (Series::VsControl, &spec.vs_control, CONTROL_COLOR),
    ] {
        let coords: Vec<(f64, f64, Option<f64>)> = spec
            .x_pct
            .iter()
            .zip(points.iter())
            .filter_map(|(&x, p)| p.map(|p| (x, p.mean, p.std)))
            .collect();
        let pts: Vec<String> = coords
            .iter()
            .map(|&(x, y, _)| {
                let (px, py) = t.to_px(x, y);
                format!("{},{}", fmt_px(px), fmt_px(py))
            })
            .collect();
        let _ = writeln!(s, r##"<g class="series" data-series="{}">"##, series.key());
        let _ = writeln!(
            s,
            r##"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"##,
            series.key(),
            pts.join(" ")
        );
        for &(x, y, std) in &coords {
            let (px, py) = t.to_px(x, y);
            if let Some(sd) = std.filter(|sd| *sd > 0.0) {
                let (_, top) = t.to_px(x, (y + sd).min(y_max));
                let (_, bottom) = t.to_px(x, (y - sd).max(y_min));
                let _ = writeln!(
                    s,
                    r##"<line class="whisker" x1="{p}" y1="{}" x2="{p}" y2="{}" stroke="{color}" stroke-opacity="0.5"/>"##,
                    fmt_px(top),
                    fmt_px(bottom),
                    p = fmt_px(px)
                );
            }
            let _ = writeln!(
                s,
                r##"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"##,
                fmt_px(px),
                fmt_px(py)
            );
        }
        let _ = writeln!(s, "</g>");
    }

    let lx = l.left + l.plot_width() + 16.0;
    let _ = writeln!(s, r##"<g class="legend" font-family="sans-serif" font-size="12">"##);
    for (i, (label, color)) in [
        ("Original vs generated", ORIGINAL_COLOR),
        ("Control vs generated", CONTROL_COLOR),
    ]
    .iter()
    .enumerate()
    {
        let y = l.top + 12.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{label}</text>"##,
            fmt_px(lx),
            fmt_px(lx + 20.0),
            fmt_px(lx + 26.0),
            fmt_px(y + 4.0),
            y = fmt_px(y),
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s.into_bytes())
}

/// Charts written by [`render_all`] plus anything that was skipped or gapped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderManifest {
    pub charts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub const REPORT_MANIFEST_FILE: &str = "report_manifest.json";

pub fn chart_file_name(metric: Metric, error_type: ErrorType) -> String {
    format!("{}_type{}.svg", metric.key(), error_type.code())
}

/// Builds the chart for one (metric, error type) over the given x grid
/// (ratios in [0, 1]), noting missing cells.
pub fn chart_spec(
    rows: &[AggregateRow],
    metric: Metric,
    error_type: ErrorType,
    ratios: &[f64],
    warnings: &mut Vec<String>,
) -> ChartSpec {
    let lookup = |series: Series, ratio: f64| {
        rows.iter().find(|r| {
            r.metric == metric && r.error_type == error_type && r.series == series && r.ratio == ratio
        })
    };
    let mut build = |series: Series| -> Vec<Option<Point>> {
        ratios
            .iter()
            .map(|&ratio| match lookup(series, ratio) {
                Some(AggregateRow {
                    mean: Some(mean),
                    std,
                    ..
                }) => Some(Point {
                    mean: *mean,
                    std: *std,
                }),
                Some(_) => {
                    warnings.push(format!(
                        "{} error type {} ratio {ratio}: {} cell is empty",
                        metric.key(),
                        error_type.code(),
                        series.key()
                    ));
                    None
                }
                None => {
                    warnings.push(format!(
                        "{} error type {} ratio {ratio}: {} cell missing",
                        metric.key(),
                        error_type.code(),
                        series.key()
                    ));
                    None
                }
            })
            .collect()
    };
    let vs_original = build(Series::VsOriginal);
    let vs_control = build(Series::VsControl);
    ChartSpec {
        metric,
        error_type,
        x_pct: ratios.iter().map(|r| r * 100.0).collect(),
        vs_original,
        vs_control,
    }
}

/// One SVG per (metric, error type) present in `rows`, written to `out_dir`
/// together with `report_manifest.json`.
pub fn render_all(rows: &[AggregateRow], out_dir: &Path) -> Result<RenderManifest, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let ratios: Vec<f64> = {
        let set: BTreeSet<u64> = rows.iter().map(|r| r.ratio.to_bits()).collect();
        set.into_iter().map(f64::from_bits).collect()
    };
    let mut panels: BTreeMap<(Metric, ErrorType), ()> = BTreeMap::new();
    for r in rows {
        panels.insert((r.metric, r.error_type), ());
    }

    let mut manifest = RenderManifest::default();
    for (metric, error_type) in panels.into_keys() {
        let spec = chart_spec(rows, metric, error_type, &ratios, &mut manifest.warnings);
        let available = spec
            .vs_original
            .iter()
            .zip(&spec.vs_control)
            .filter(|(a, b)| a.is_some() || b.is_some())
            .count();
        if available < 2 {
            manifest.warnings.push(format!(
                "skipped {}: fewer than 2 populated ratios",
                chart_file_name(metric, error_type)
            ));
            continue;
        }
        let svg = render_chart(&spec)?;
        let path = out_dir.join(chart_file_name(metric, error_type));
        std::fs::write(&path, svg).map_err(io_err(&path))?;
        manifest.charts.push(path);
    }
    let mpath = out_dir.join(REPORT_MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&mpath, json + "\n").map_err(io_err(&mpath))?;
    Ok(manifest)
}
