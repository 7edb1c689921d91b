mod common;

use aquasem::experiment::{AggregateRow, Metric, Series};
use aquasem::report::{
    chart_file_name, render_all, render_chart, write_aggregates_csv, ChartSpec, Point,
    CONTROL_COLOR, ORIGINAL_COLOR, REPORT_MANIFEST_FILE,
};
use aquasem::text_channel::ErrorType;

use common::{svg_axes, svg_polylines};

fn row(error_type: ErrorType, ratio: f64, metric: Metric, series: Series, mean: Option<f64>) -> AggregateRow {
    AggregateRow {
        error_type,
        ratio,
        metric,
        series,
        mean,
        std: mean.map(|_| 1.5),
        n: if mean.is_some() { 10 } else { 0 },
        excluded: 0,
    }
}

fn full_rows() -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for t in ErrorType::ALL {
        for (i, ratio) in [0.0, 0.25, 0.5].into_iter().enumerate() {
            for (metric, base) in [(Metric::PsnrDb, 30.0), (Metric::Ssim, 0.8), (Metric::ClipScorePct, 90.0)] {
                let scale = if metric == Metric::Ssim { 0.1 } else { 5.0 };
                rows.push(row(t, ratio, metric, Series::VsOriginal, Some(base - scale * i as f64)));
                rows.push(row(t, ratio, metric, Series::VsControl, Some(base / 2.0)));
            }
        }
    }
    rows
}

#[test]
fn rendered_polylines_invert_to_means() {
    let dir = tempfile::tempdir().unwrap();
    let rows = full_rows();
    let manifest = render_all(&rows, dir.path()).unwrap();
    assert_eq!(manifest.charts.len(), 9);
    assert!(manifest.warnings.is_empty(), "{:?}", manifest.warnings);
    for t in ErrorType::ALL {
        for metric in [Metric::PsnrDb, Metric::Ssim, Metric::ClipScorePct] {
            let svg = std::fs::read_to_string(dir.path().join(chart_file_name(metric, t))).unwrap();
            let axes = svg_axes(&svg);
            for (series_key, pts) in svg_polylines(&svg) {
                let series = Series::from_key(&series_key).unwrap();
                assert_eq!(pts.len(), 3);
                for (px, py) in pts {
                    let (x, y) = axes.invert(px, py);
                    let ratio = x / 100.0;
                    let want = rows
                        .iter()
                        .find(|r| r.error_type == t && r.metric == metric && r.series == series && (r.ratio - ratio).abs() < 1e-6)
                        .unwrap()
                        .mean
                        .unwrap();
                    assert!(((y - want) * axes.px_per_unit()).abs() <= 0.5, "{metric:?} {series:?} {y} vs {want}");
                }
            }
        }
    }
}

#[test]
fn chart_uses_fixed_ranges_and_series_colors() {
    let spec = ChartSpec {
        metric: Metric::PsnrDb,
        error_type: ErrorType::WordDeletion,
        x_pct: vec![0.0, 50.0],
        vs_original: vec![Some(Point { mean: 40.0, std: None }); 2],
        vs_control: vec![Some(Point { mean: 10.0, std: None }); 2],
    };
    let svg = String::from_utf8(render_chart(&spec).unwrap()).unwrap();
    let axes = svg_axes(&svg);
    assert_eq!((axes.y_min, axes.y_max), (0.0, 80.0));
    assert!(svg.contains("Average PSNR vs Error Percentage (Error Type 3)"));
    assert!(svg.contains(&format!("stroke=\"{ORIGINAL_COLOR}\"")));
    assert!(svg.contains(&format!("stroke=\"{CONTROL_COLOR}\"")));
}

#[test]
fn out_of_range_values_widen_the_axis() {
    let spec = ChartSpec {
        metric: Metric::PsnrDb,
        error_type: ErrorType::CharSubstitution,
        x_pct: vec![0.0, 10.0],
        vs_original: vec![Some(Point { mean: 95.0, std: None }), Some(Point { mean: 20.0, std: None })],
        vs_control: vec![None, None],
    };
    let svg = String::from_utf8(render_chart(&spec).unwrap()).unwrap();
    let axes = svg_axes(&svg);
    assert_eq!(axes.y_max, 95.0);
    let (_, pts) = &svg_polylines(&svg)[0];
    let (_, y) = axes.invert(pts[0].0, pts[0].1);
    assert!((y - 95.0).abs() * axes.px_per_unit() <= 0.5);
}

#[test]
fn missing_and_empty_cells_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = full_rows();
    rows.retain(|r| !(r.error_type == ErrorType::CharDeletion && r.ratio == 0.25 && r.metric == Metric::Ssim && r.series == Series::VsControl));
    for r in rows.iter_mut() {
        if r.error_type == ErrorType::WordDeletion && r.metric == Metric::PsnrDb && r.ratio > 0.0 {
            r.mean = None;
            r.std = None;
        }
    }
    let manifest = render_all(&rows, dir.path()).unwrap();
    // PSNR for type 3 only has ratio 0 populated and is skipped.
    assert_eq!(manifest.charts.len(), 8);
    assert!(manifest.warnings.iter().any(|w| w.contains("ssim error type 2 ratio 0.25: vs_control cell missing")));
    assert!(manifest.warnings.iter().any(|w| w.contains("skipped psnr_db_type3.svg")));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join(REPORT_MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(json["charts"].as_array().unwrap().len(), 8);

    let svg = std::fs::read_to_string(dir.path().join(chart_file_name(Metric::Ssim, ErrorType::CharDeletion))).unwrap();
    let lines = svg_polylines(&svg);
    let control = lines.iter().find(|(s, _)| s == "vs_control").unwrap();
    assert_eq!(control.1.len(), 2);
}

#[test]
fn aggregates_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    let rows = vec![
        row(ErrorType::CharDeletion, 0.1, Metric::ClipScorePct, Series::VsControl, Some(50.123_456_789)),
        row(ErrorType::CharSubstitution, 0.05, Metric::PsnrDb, Series::VsOriginal, None),
    ];
    write_aggregates_csv(&rows, &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        "error_type,ratio,metric,series,mean,std,n,excluded\n\
         1,0.050000,psnr_db,vs_original,,,0,0\n\
         2,0.100000,clip_score_pct,vs_control,50.123457,1.500000,10,0\n"
    );
}

#[test]
fn whiskers_do_not_widen_the_axis() {
    let spec = ChartSpec {
        metric: Metric::Ssim,
        error_type: ErrorType::CharSubstitution,
        x_pct: vec![0.0, 10.0],
        vs_original: vec![Some(Point { mean: 0.95, std: Some(0.2) }); 2],
        vs_control: vec![None, None],
    };
    let svg = String::from_utf8(render_chart(&spec).unwrap()).unwrap();
    let axes = svg_axes(&svg);
    assert_eq!((axes.y_min, axes.y_max), (0.0, 1.0));
}
