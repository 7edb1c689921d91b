//! Link arithmetic: bit-error bounds implied by a character error ratio and
//! payload accounting for the text that replaces the image on the link.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text_channel::TextMessage;

pub const DEFAULT_BITS_PER_CHAR: u32 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkMathError {
    #[error("character error ratio {0} outside [0, 1]")]
    CerOutOfRange(f64),
    #[error("bits per character must be at least 1")]
    ZeroBitsPerChar,
}

/// BER interval for a given CER. The lower bound assumes one flipped bit per
/// corrupted character, the upper bound assumes every bit flipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerBounds {
    pub cer: f64,
    pub bits_per_char: u32,
    pub lower: f64,
    pub upper: f64,
}

pub fn ber_bounds(cer: f64, bits_per_char: u32) -> Result<BerBounds, LinkMathError> {
    if !(0.0..=1.0).contains(&cer) {
        return Err(LinkMathError::CerOutOfRange(cer));
    }
    if bits_per_char == 0 {
        return Err(LinkMathError::ZeroBitsPerChar);
    }
    Ok(BerBounds {
        cer,
        bits_per_char,
        lower: cer / f64::from(bits_per_char),
        upper: cer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadStats {
    pub image_bytes: u64,
    pub text_bytes: u64,
    /// `image_bytes / text_bytes`, or 0 when the text is empty.
    pub compression_ratio: f64,
    /// Set when `text_bytes == 0` and the ratio is undefined.
    pub empty_text: bool,
}

pub fn payload_stats(image_bytes: u64, msg: &TextMessage) -> PayloadStats {
    let text_bytes = msg.byte_count() as u64;
    let empty_text = text_bytes == 0;
    let compression_ratio = if empty_text {
        0.0
    } else {
        image_bytes as f64 / text_bytes as f64
    };
    PayloadStats {
        image_bytes,
        text_bytes,
        compression_ratio,
        empty_text,
    }
}
