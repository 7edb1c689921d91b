//! JSON bodies of the model-server protocol. Field order is part of the
//! contract: serializing these structs yields the canonical request bytes.
//!
//! ```text
//! POST /caption   {"image_ppm_b64": str}                          -> {"text": str}
//! POST /generate  {"prompt": str, "seed": u64, "width": int, "height": int}
//!                                                                 -> {"image_ppm_b64": str}
//! POST /embed     {"image_ppm_b64": str}                          -> {"vector": [number, ...]}
//! non-200         {"error": str}
//! ```

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::imagecore::{read_ppm, write_ppm, ImageBuffer, ImageError};

pub const CAPTION_PATH: &str = "/caption";
pub const GENERATE_PATH: &str = "/generate";
pub const EMBED_PATH: &str = "/embed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub image_ppm_b64: String,
}

impl ImagePayload {
    pub fn encode(img: &ImageBuffer) -> Self {
        Self {
            image_ppm_b64: STANDARD.encode(write_ppm(img)),
        }
    }

    pub fn decode(&self) -> Result<ImageBuffer, String> {
        let bytes = STANDARD
            .decode(self.image_ppm_b64.as_bytes())
            .map_err(|e| format!("bad base64: {e}"))?;
        read_ppm(&bytes).map_err(|e: ImageError| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequestBody {
    pub prompt: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_bodies() {
        let img = ImageBuffer::new(1, 1, 1, vec![7]).unwrap();
        let body = serde_json::to_string(&ImagePayload::encode(&img)).unwrap();
        // base64 of "P5\n1 1\n255\n\x07"
        assert_eq!(body, r#"{"image_ppm_b64":"UDUKMSAxCjI1NQoH"}"#);
        let gen = GenerateRequestBody {
            prompt: "a fish".into(),
            seed: 3,
            width: 64,
            height: 32,
        };
        assert_eq!(
            serde_json::to_string(&gen).unwrap(),
            r#"{"prompt":"a fish","seed":3,"width":64,"height":32}"#
        );
        assert_eq!(ImagePayload::encode(&img).decode().unwrap(), img);
        assert!(ImagePayload { image_ppm_b64: "!!".into() }.decode().is_err());
    }
}
