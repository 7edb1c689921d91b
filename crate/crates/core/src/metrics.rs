//! Image similarity metrics: PSNR, SSIM and an embedding-based CLIPScore.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::backends::{BackendError, Embedder};
use crate::imagecore::{to_gray, ImageBuffer};

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
pub const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("image shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch {
        a: (usize, usize, usize),
        b: (usize, usize, usize),
    },
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("embedding lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero-norm embedding")]
    ZeroVector,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn shape(img: &ImageBuffer) -> (usize, usize, usize) {
    (img.width(), img.height(), img.channels())
}

fn check_same_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), MetricError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MetricError::ShapeMismatch {
            a: shape(a),
            b: shape(b),
        })
    }
}

/// Scores for one image pair. `psnr_db` is `+inf` for identical images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub clip_score_pct: f64,
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() && v.is_sign_positive() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tok(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Tok(t) if t == "inf" => Ok(f64::INFINITY),
        Repr::Tok(t) => Err(serde::de::Error::custom(format!("bad psnr token {t:?}"))),
    }
}

/// Mean squared sample difference over every stored sample.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.samples().len() as f64)
}

/// `10 log10(255^2 / mse)` over all channels jointly; `+inf` when `mse == 0`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Valid-mode separable filtering of a `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM over every window position fully inside the image, computed on
/// Rec.601 luma with an 11x11 Gaussian window (sigma 1.5).
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricError::ShapeMismatch {
            a: shape(a),
            b: shape(b),
        });
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let x: Vec<f64> = to_gray(a).samples().iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = to_gray(b).samples().iter().map(|&v| f64::from(v)).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let mu_x = filter_valid(&x, w, h, &taps);
    let mu_y = filter_valid(&y, w, h, &taps);
    let e_xx = filter_valid(&xx, w, h, &taps);
    let e_yy = filter_valid(&yy, w, h, &taps);
    let e_xy = filter_valid(&xy, w, h, &taps);

    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    norm: f64,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self { values, norm }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }
}

pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::LengthMismatch(u.len(), v.len()));
    }
    if u.is_zero() || v.is_zero() {
        return Err(MetricError::ZeroVector);
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok((dot / (u.norm * v.norm)).clamp(-1.0, 1.0))
}

/// `100 * max(0, cosine)` between the two images' embeddings.
pub fn clip_score(
    a: &ImageBuffer,
    b: &ImageBuffer,
    embedder: &dyn Embedder,
) -> Result<f64, MetricError> {
    let ea = embedder.embed(a)?;
    let eb = embedder.embed(b)?;
    clip_score_from_embeddings(&ea, &eb)
}

pub fn clip_score_from_embeddings(a: &Embedding, b: &Embedding) -> Result<f64, MetricError> {
    Ok(100.0 * cosine(a, b)?.max(0.0))
}

/// All three metrics for a same-shape pair.
pub fn compare(
    a: &ImageBuffer,
    b: &ImageBuffer,
    embedder: &dyn Embedder,
) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        psnr_db: psnr(a, b)?,
        ssim: ssim(a, b)?,
        clip_score_pct: clip_score(a, b, embedder)?,
    })
}
