//! Deterministic offline providers.
//!
//! The three mocks share a small vocabulary so that the caption of an image,
//! the image rendered from that caption and the embeddings of both stay
//! related. A clean caption renders back to a quadrant sketch of the source
//! image; words garbled in transit lose their quadrant and add noise bands.

use crate::imagecore::{resize_bilinear, to_gray, ImageBuffer};
use crate::metrics::Embedding;
use crate::rng::{hash_bytes, mix64, mix_all};
use crate::text_channel::{sanitize, words, TextMessage};

use super::{BackendError, Captioner, Embedder, GenerationRequest, Generator};

/// Named hues the captioner can emit and the generator can render.
pub const PALETTE: &[(&str, [u8; 3])] = &[
    ("black", [20, 20, 24]),
    ("gray", [128, 128, 128]),
    ("white", [235, 235, 235]),
    ("red", [200, 40, 40]),
    ("orange", [230, 130, 30]),
    ("yellow", [220, 210, 50]),
    ("green", [50, 170, 70]),
    ("teal", [30, 150, 150]),
    ("blue", [40, 80, 200]),
    ("navy", [20, 30, 100]),
    ("purple", [130, 60, 180]),
    ("pink", [225, 110, 170]),
    ("brown", [120, 80, 40]),
];

/// Overall brightness words, by ascending mean luma.
pub const BRIGHTNESS: &[&str] = &["dark", "murky", "bright"];

/// Gray level rendered for a brightness word: the middle of its luma band.
fn brightness_fill(word: &str) -> Option<[u8; 3]> {
    let i = BRIGHTNESS.iter().position(|&b| b == word)?;
    let v = [42, 127, 212][i];
    Some([v; 3])
}

pub const MID_GRAY: u8 = 128;

const NOISE_AMPLITUDE: u64 = 6;

/// Lowercased alphabetic core of a word, for vocabulary lookup.
fn vocabulary_key(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_ascii_alphabetic())
        .to_ascii_lowercase()
}

/// Words of the caption template that carry no color.
pub const TEMPLATE_WORDS: &[&str] = &["a", "scene", "with", "upper", "lower", "left", "right", "and"];

/// Shortest vocabulary word that may be matched with a typo.
const FUZZY_MIN_LEN: usize = 3;
/// Typo budget in fifths of the word length, at least one.
const TYPO_RATE_FIFTHS: usize = 2;

fn palette_color(key: &str) -> Option<[u8; 3]> {
    PALETTE.iter().find(|(name, _)| *name == key).map(|&(_, rgb)| rgb)
}

fn vocabulary() -> impl Iterator<Item = &'static str> {
    PALETTE
        .iter()
        .map(|(name, _)| *name)
        .chain(BRIGHTNESS.iter().copied())
        .chain(TEMPLATE_WORDS.iter().copied())
}

/// Typos tolerated in a vocabulary word of `len` letters.
fn typo_budget(len: usize) -> usize {
    if len < FUZZY_MIN_LEN { 0 } else { (len * TYPO_RATE_FIFTHS / 5).max(1) }
}

/// Vocabulary word a token reads as: an exact match, else the closest word
/// within its typo budget (earliest on ties). Tolerating typos mirrors how
/// text-to-image models shrug off light misspellings.
pub fn resolve_word(key: &str) -> Option<&'static str> {
    if let Some(v) = vocabulary().find(|v| *v == key) {
        return Some(v);
    }
    vocabulary()
        .filter(|v| v.len() >= FUZZY_MIN_LEN && v.len().abs_diff(key.len()) <= typo_budget(v.len()))
        .map(|v| (strsim::levenshtein(v, key), v))
        .filter(|&(d, v)| d <= typo_budget(v.len()))
        .min_by_key(|&(d, _)| d)
        .map(|(_, v)| v)
}

fn hash_color(h: u64) -> [u8; 3] {
    [(h >> 8) as u8, (h >> 24) as u8, (h >> 40) as u8]
}

/// Nearest palette entry in RGB.
pub fn color_name(rgb: [f64; 3]) -> &'static str {
    PALETTE
        .iter()
        .min_by(|a, b| {
            let da = dist2(rgb, a.1);
            let db = dist2(rgb, b.1);
            da.total_cmp(&db)
        })
        .map(|(name, _)| *name)
        .expect("palette is non-empty")
}

fn dist2(a: [f64; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - f64::from(y)).powi(2))
        .sum()
}

fn mean_rgb(img: &ImageBuffer, x0: usize, x1: usize, y0: usize, y1: usize) -> [f64; 3] {
    let mut acc = [0.0; 3];
    let mut n = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            let p = img.pixel(x, y);
            let rgb = if p.len() == 3 { [p[0], p[1], p[2]] } else { [p[0]; 3] };
            for (a, v) in acc.iter_mut().zip(rgb) {
                *a += f64::from(v);
            }
            n += 1.0;
        }
    }
    if n == 0.0 {
        return mean_rgb(img, 0, img.width(), 0, img.height());
    }
    acc.map(|a| a / n)
}

fn brightness_word(img: &ImageBuffer) -> &'static str {
    let g = to_gray(img);
    let mean = g.samples().iter().map(|&v| f64::from(v)).sum::<f64>() / g.samples().len() as f64;
    if mean < 85.0 {
        BRIGHTNESS[0]
    } else if mean < 170.0 {
        BRIGHTNESS[1]
    } else {
        BRIGHTNESS[2]
    }
}

/// Describes the overall brightness and the nearest named color of each
/// image quadrant:
///
/// `a <brightness> scene with <c> upper left, <c> upper right, <c> lower left and <c> lower right`
#[derive(Debug, Clone, Copy, Default)]
pub struct MockCaptioner;

impl MockCaptioner {
    pub fn describe(img: &ImageBuffer) -> TextMessage {
        let (w, h) = (img.width(), img.height());
        let (mx, my) = (w / 2, h / 2);
        let quad = |x0, x1, y0, y1| color_name(mean_rgb(img, x0, x1, y0, y1));
        let ul = quad(0, mx, 0, my);
        let ur = quad(mx, w, 0, my);
        let ll = quad(0, mx, my, h);
        let lr = quad(mx, w, my, h);
        sanitize(&format!(
            "a {} scene with {ul} upper left, {ur} upper right, {ll} lower left and {lr} lower right",
            brightness_word(img)
        ))
    }
}

impl Captioner for MockCaptioner {
    fn identity(&self) -> String {
        "mock-captioner/1".into()
    }

    fn caption(&self, img: &ImageBuffer) -> Result<TextMessage, BackendError> {
        Ok(Self::describe(img))
    }
}

/// A prompt fragment and the vocabulary word it reads as. `start..end` is
/// its character span, counting only non-space characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub word: Option<&'static str>,
    pub start: usize,
    pub end: usize,
}

/// Resolves each word; a word that does not resolve as a whole is split at
/// non-letters and its letter runs are resolved instead, so that a garbled
/// separator between two words does not lose both.
pub fn read_tokens<'a>(ws: &[&'a str]) -> Vec<Token<'a>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for &w in ws {
        let len = w.chars().count();
        if let Some(word) = resolve_word(&vocabulary_key(w)) {
            out.push(Token { text: w, word: Some(word), start: offset, end: offset + len });
        } else {
            let mut pos = offset;
            let mut rest = w;
            while !rest.is_empty() {
                let letters = rest.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(rest.len());
                let piece_len = if letters == 0 {
                    rest.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(rest.len())
                } else {
                    letters
                };
                let (piece, tail) = rest.split_at(piece_len);
                let n = piece.chars().count();
                let word = if letters > 0 { resolve_word(&piece.to_ascii_lowercase()) } else { None };
                out.push(Token { text: piece, word, start: pos, end: pos + n });
                pos += n;
                rest = tail;
            }
        }
        offset += len;
    }
    out
}

/// Renders a prompt by reading back the captioner's template.
///
/// * words resolve against the vocabulary, tolerating one typo in words of
///   three or more letters, see [`read_tokens`];
/// * each palette word paints a quadrant: the one named by an
///   `upper|lower` and `left|right` pair in the next two words, otherwise
///   the first quadrant still unpainted in reading order;
/// * unpainted quadrants take the gray of the first brightness word, or
///   without one the background, a hash of the sorted word multiset;
/// * every fragment outside the vocabulary draws a full-width band of its
///   splitmix64 hash color, at rows proportional to its character span;
/// * the seed adds a small per-pixel luminance jitter;
/// * an empty prompt renders flat mid-gray.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator;

impl MockGenerator {
    pub fn render(req: &GenerationRequest) -> ImageBuffer {
        let (w, h) = (req.width, req.height);
        let ws = words(&req.prompt);
        if ws.is_empty() {
            return ImageBuffer::filled(w, h, &[MID_GRAY; 3]).expect("valid size");
        }

        let mut sorted: Vec<&str> = ws.clone();
        sorted.sort_unstable();
        let background = hash_color(hash_bytes(sorted.join(" ").as_bytes()));

        let tokens = read_tokens(&ws);
        let keys: Vec<Option<&str>> = tokens.iter().map(|t| t.word).collect();
        let mut quadrants: [Option<[u8; 3]>; 4] = [None; 4];
        for (i, key) in keys.iter().enumerate() {
            let Some(color) = key.and_then(palette_color) else { continue };
            let next = &keys[i + 1..(i + 3).min(keys.len())];
            let row = next.iter().flatten().find_map(|k| match *k {
                "upper" => Some(0),
                "lower" => Some(1),
                _ => None,
            });
            let col = next.iter().flatten().find_map(|k| match *k {
                "left" => Some(0),
                "right" => Some(1),
                _ => None,
            });
            let slot = match (row, col) {
                (Some(r), Some(c)) => Some(2 * r + c),
                _ => quadrants.iter().position(Option::is_none),
            };
            if let Some(s) = slot {
                quadrants[s] = Some(color);
            }
        }
        let fill = keys
            .iter()
            .flatten()
            .find_map(|k| brightness_fill(k))
            .unwrap_or(background);
        let quadrants = quadrants.map(|q| q.unwrap_or(fill));

        let total_len: usize = ws.iter().map(|w| w.chars().count()).sum();
        let mut row_bands: Vec<Option<[u8; 3]>> = vec![None; h];
        for t in tokens.iter().filter(|t| t.word.is_none()) {
            let color = hash_color(hash_bytes(t.text.as_bytes()));
            row_bands[t.start * h / total_len..t.end * h / total_len].fill(Some(color));
        }

        let seed_key = mix64(req.seed);
        let (mx, my) = (w / 2, h / 2);
        ImageBuffer::from_fn(w, h, |x, y| {
            let base = row_bands[y].unwrap_or(quadrants[2 * usize::from(y >= my) + usize::from(x >= mx)]);
            let n = mix_all(&[seed_key, (y * w + x) as u64]) % (2 * NOISE_AMPLITUDE + 1);
            let jitter = n as i16 - NOISE_AMPLITUDE as i16;
            base.map(|v| (i16::from(v) + jitter).clamp(0, 255) as u8)
        })
        .expect("valid size")
    }
}

impl Generator for MockGenerator {
    fn identity(&self) -> String {
        "mock-generator/1".into()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<ImageBuffer, BackendError> {
        Ok(Self::render(req))
    }
}

pub const HISTOGRAM_BINS: usize = 8;
pub const THUMBNAIL_SIDE: usize = 8;
pub const MOCK_EMBEDDING_LEN: usize = 3 * HISTOGRAM_BINS + THUMBNAIL_SIDE * THUMBNAIL_SIDE;

/// 88-dimensional feature: per-channel 8-bin histograms (each summing to 1)
/// followed by an 8x8 bilinear gray thumbnail in [0, 1], L2-normalized.
/// Gray images count as three identical channels.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockEmbedder;

impl MockEmbedder {
    pub fn features(img: &ImageBuffer) -> Vec<f64> {
        let mut hist = [[0u64; HISTOGRAM_BINS]; 3];
        let c = img.channels();
        for px in img.samples().chunks_exact(c) {
            for ch in 0..3 {
                let v = px[if c == 3 { ch } else { 0 }];
                hist[ch][usize::from(v) * HISTOGRAM_BINS / 256] += 1;
            }
        }
        let pixels = (img.width() * img.height()) as f64;
        let mut out = Vec::with_capacity(MOCK_EMBEDDING_LEN);
        for channel in &hist {
            out.extend(channel.iter().map(|&n| n as f64 / pixels));
        }
        let thumb = resize_bilinear(&to_gray(img), THUMBNAIL_SIDE, THUMBNAIL_SIDE);
        out.extend(thumb.samples().iter().map(|&v| f64::from(v) / 255.0));
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.iter_mut().for_each(|v| *v /= norm);
        out
    }
}

impl Embedder for MockEmbedder {
    fn identity(&self) -> String {
        "mock-embedder/1".into()
    }

    fn embed(&self, img: &ImageBuffer) -> Result<Embedding, BackendError> {
        Ok(Embedding::new(Self::features(img)))
    }
}
