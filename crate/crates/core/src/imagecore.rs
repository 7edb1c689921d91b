//! 8-bit image container, binary PPM/PGM codec and the resampling used to
//! bring generated images onto the comparison grid.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid image geometry {width}x{height}x{channels} for {len} samples")]
    Geometry {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("pixmap parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("unsupported bit depth: {0}")]
    UnsupportedDepth(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major interleaved 8-bit samples, one or three channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0
            || height == 0
            || !(channels == 1 || channels == 3)
            || width.checked_mul(height).and_then(|p| p.checked_mul(channels)) != Some(samples.len())
        {
            return Err(ImageError::Geometry {
                width,
                height,
                channels,
                len: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    /// Image filled with one sample value per channel.
    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Result<Self, ImageError> {
        let samples = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self::new(width, height, pixel.len(), samples)
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn<const C: usize>(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; C],
    ) -> Result<Self, ImageError> {
        let mut samples = Vec::with_capacity(width * height * C);
        for y in 0..height {
            for x in 0..width {
                samples.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, C, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.samples[i..i + self.channels]
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn err(&self, message: impl Into<String>) -> ImageError {
        ImageError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Parse {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

/// Decodes binary PPM (`P6`) or PGM (`P5`) with maxval 255.
pub fn read_ppm(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(cur.err("expected magic P5 or P6")),
    };
    cur.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(cur.err("expected whitespace after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_whitespace_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::Parse {
            offset: maxval_at,
            message: format!("maxval {maxval} unsupported (only 255)"),
        });
    }
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected single whitespace after maxval")),
    }
    let len = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| cur.err("image dimensions overflow"))?;
    let end = cur.pos + len;
    if bytes.len() < end {
        return Err(ImageError::Parse {
            offset: bytes.len(),
            message: format!("truncated raster: need {len} bytes from offset {}", cur.pos),
        });
    }
    ImageBuffer::new(width, height, channels, bytes[cur.pos..end].to_vec())
}

/// Canonical encoding: `P6\n<w> <h>\n255\n` (or `P5`) followed by the raster.
pub fn write_ppm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let header = format!("{magic}\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.samples.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.samples);
    out
}

/// Integer Rec.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000) as u8
}

pub fn to_gray(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 1 {
        return img.clone();
    }
    let samples = img
        .samples
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    ImageBuffer {
        width: img.width,
        height: img.height,
        channels: 1,
        samples,
    }
}

/// Gray input replicated to three channels.
pub fn to_rgb(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 3 {
        return img.clone();
    }
    let samples = img.samples.iter().flat_map(|&v| [v, v, v]).collect();
    ImageBuffer {
        width: img.width,
        height: img.height,
        channels: 3,
        samples,
    }
}

/// Source coordinate and blend weight along one axis, half-pixel centers.
fn axis_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling with half-pixel center alignment and edge clamping.
pub fn resize_bilinear(img: &ImageBuffer, out_w: usize, out_h: usize) -> ImageBuffer {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    if out_w == img.width && out_h == img.height {
        return img.clone();
    }
    let c = img.channels;
    let xs = axis_taps(out_w, img.width);
    let ys = axis_taps(out_h, img.height);
    let at = |x: usize, y: usize, ch: usize| f64::from(img.samples[(y * img.width + x) * c + ch]);
    let mut samples = Vec::with_capacity(out_w * out_h * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let top = at(x0, y0, ch) * (1.0 - fx) + at(x1, y0, ch) * fx;
                let bottom = at(x0, y1, ch) * (1.0 - fx) + at(x1, y1, ch) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                samples.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer {
        width: out_w,
        height: out_h,
        channels: c,
        samples,
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Loads an image, dispatching on the file extension.
pub fn load_image(path: &Path) -> Result<ImageBuffer, ImageError> {
    match extension(path).as_str() {
        "ppm" | "pgm" | "pnm" => {
            let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
            read_ppm(&bytes)
        }
        #[cfg(feature = "png")]
        "png" => {
            let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
            decode_png(&bytes)
        }
        other => Err(ImageError::Unsupported(format!(
            "{} (extension {other:?})",
            path.display()
        ))),
    }
}

/// Writes PPM/PGM (or PNG with the `png` feature) according to the extension.
pub fn save_image(path: &Path, img: &ImageBuffer) -> Result<(), ImageError> {
    let bytes = match extension(path).as_str() {
        "ppm" | "pgm" | "pnm" => write_ppm(img),
        #[cfg(feature = "png")]
        "png" => encode_png(img)?,
        other => {
            return Err(ImageError::Unsupported(format!(
                "{} (extension {other:?})",
                path.display()
            )))
        }
    };
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn is_supported_extension(path: &Path) -> bool {
    let ext = extension(path);
    matches!(ext.as_str(), "ppm" | "pgm" | "pnm") || (ext == "png" && cfg!(feature = "png"))
}

#[cfg(feature = "png")]
pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::Unsupported(format!("png: {e}")))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedDepth(format!(
            "png bit depth {:?}",
            info.bit_depth
        )));
    }
    let color = info.color_type;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Unsupported(format!("png: {e}")))?;
    let data = &buf[..frame.buffer_size()];
    let samples: Vec<u8> = match color {
        png::ColorType::Grayscale => data.to_vec(),
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgba => data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Indexed => {
            return Err(ImageError::Unsupported("indexed png".into()));
        }
    };
    let channels = match color {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
        _ => 3,
    };
    ImageBuffer::new(w, h, channels, samples)
}

#[cfg(feature = "png")]
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(if img.channels == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| ImageError::Unsupported(format!("png: {e}")))?;
        writer
            .write_image_data(&img.samples)
            .map_err(|e| ImageError::Unsupported(format!("png: {e}")))?;
    }
    Ok(out)
}
