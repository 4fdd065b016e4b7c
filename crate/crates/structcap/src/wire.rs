//! JSON bodies of the model-adapter HTTP contract.
//!
//! Images travel as base64 PNG, masks as base64 packed bits (row-major,
//! most significant bit first, final byte zero-padded). Every request
//! carries a `request_id` that the reply echoes. Latents come back as a
//! portable tensor file, not JSON; see [`crate::tensor`].

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use structcap_core::amc::Detection;
use structcap_core::chat::ChatRequest;
use structcap_core::image::{Mask, RgbImage};

/// Header carrying the shared token when one is configured.
pub const TOKEN_HEADER: &str = "X-Adapter-Token";
/// Header echoing the request id on binary replies.
pub const REQUEST_ID_HEADER: &str = "X-Request-Id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireImage {
    pub width: u32,
    pub height: u32,
    pub png_base64: String,
}

impl WireImage {
    pub fn encode(img: &RgbImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            png_base64: B64.encode(crate::pngio::encode_png(img)),
        }
    }

    pub fn decode(&self) -> Result<RgbImage, String> {
        let bytes = B64.decode(&self.png_base64).map_err(|e| format!("image base64: {e}"))?;
        let img = crate::pngio::decode_png(&bytes).map_err(|e| e.to_string())?;
        if img.dimensions() != (self.width, self.height) {
            return Err(format!(
                "image declares {}x{} but decodes to {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            ));
        }
        Ok(img)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMask {
    pub width: u32,
    pub height: u32,
    pub bits_base64: String,
}

impl WireMask {
    pub fn encode(mask: &Mask) -> Self {
        let mut packed = vec![0u8; mask.bits().len().div_ceil(8)];
        for (i, _) in mask.bits().iter().enumerate().filter(|(_, b)| **b) {
            packed[i / 8] |= 0x80 >> (i % 8);
        }
        Self {
            width: mask.width(),
            height: mask.height(),
            bits_base64: B64.encode(packed),
        }
    }

    pub fn decode(&self) -> Result<Mask, String> {
        let packed = B64.decode(&self.bits_base64).map_err(|e| format!("mask base64: {e}"))?;
        let n = self.width as usize * self.height as usize;
        if packed.len() != n.div_ceil(8) {
            return Err(format!("mask of {n} pixels needs {} bytes, got {}", n.div_ceil(8), packed.len()));
        }
        let bits = (0..n).map(|i| packed[i / 8] & (0x80 >> (i % 8)) != 0).collect();
        Mask::from_bits(self.width, self.height, bits).ok_or_else(|| "mask size mismatch".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectRequest {
    pub request_id: String,
    pub image: WireImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectReply {
    pub request_id: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRequest {
    pub request_id: String,
    pub frames: Vec<WireImage>,
    /// Boxes on `frames[0]`.
    pub seeds: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireTrack {
    /// One per request frame.
    pub masks: Vec<WireMask>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentReply {
    pub request_id: String,
    /// One per seed, in seed order.
    pub tracks: Vec<WireTrack>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedTextRequest {
    pub request_id: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedImageRequest {
    pub request_id: String,
    pub images: Vec<WireImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedReply {
    pub request_id: String,
    /// `[count, dim]`.
    pub shape: [usize; 2],
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeLatentRequest {
    pub request_id: String,
    pub frames: Vec<WireImage>,
}

/// Pixels for one [`structcap_core::chat::ImageRef`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireFrame {
    pub clip: String,
    pub frame_index: u32,
    pub image: WireImage,
}

/// The core chat request plus a request id and the pixels behind every
/// image reference in its turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatWireRequest {
    pub request_id: String,
    #[serde(flatten)]
    pub chat: ChatRequest,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub image_data: Vec<WireFrame>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatWireReply {
    pub request_id: String,
    pub text: String,
}

/// Latent geometry; the time axis equals the number of submitted frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentDims {
    pub layers: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LatentDims {
    pub fn shape(&self, frames: usize) -> [usize; 5] {
        [self.layers, frames, self.height, self.width, self.channels]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoReply {
    pub service: String,
    pub version: String,
    /// `stub`, `scripted` or a deployment-specific name.
    pub mode: String,
    pub embedding_dim: usize,
    pub latent: LatentDims,
    pub endpoints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealthReply {
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: u16,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReply {
    #[serde(default)]
    pub request_id: Option<String>,
    pub error: ErrorBody,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_packing_is_msb_first() {
        let m = Mask::from_bits(3, 3, vec![true, false, false, false, false, false, false, false, true]).unwrap();
        let w = WireMask::encode(&m);
        assert_eq!(B64.decode(&w.bits_base64).unwrap(), vec![0x80, 0x80]);
        assert_eq!(w.decode().unwrap(), m);
        let short = WireMask {
            bits_base64: B64.encode([0u8]),
            ..w
        };
        assert!(short.decode().is_err());
    }

    #[test]
    fn image_round_trip_checks_size() {
        let img = RgbImage::from_fn(4, 3, |x, y| [x as u8, y as u8, 7]);
        let w = WireImage::encode(&img);
        assert_eq!(w.decode().unwrap(), img);
        let lying = WireImage { width: 5, ..w };
        assert!(lying.decode().is_err());
    }

    #[test]
    fn chat_request_flattens() {
        use structcap_core::chat::{BackendConfig, ChatTurn, ExpectedFormat, PromptBundle};
        let bundle = PromptBundle::new(vec![ChatTurn::system("s"), ChatTurn::user("u")], ExpectedFormat::FreeText, 0).unwrap();
        let req = ChatWireRequest {
            request_id: "r1".into(),
            chat: ChatRequest::new("global", &bundle, &BackendConfig::default()),
            image_data: vec![],
        };
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["request_id"], "r1");
        assert_eq!(v["operation"], "global");
        assert_eq!(v["turns"][1]["role"], "user");
        assert_eq!(serde_json::from_value::<ChatWireRequest>(v).unwrap(), req);
    }
}
