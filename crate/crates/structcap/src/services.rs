//! Evaluation-side adapter services and the deterministic stub models.

use structcap_core::amc::{AdapterError, Detection, ModelAdapter};
use structcap_core::image::{Mask, Rect, RgbImage};
use structcap_core::metrics::LatentTensor;
use structcap_core::prompts::sha256_hex;
use structcap_core::sampling::FrameSequence;

use crate::wire::{InfoReply, LatentDims};

/// Endpoints every adapter deployment serves.
pub const ENDPOINTS: [&str; 8] = [
    "/detect",
    "/segment",
    "/embed_text",
    "/embed_image",
    "/vae_latent",
    "/chat",
    "/info",
    "/health",
];

/// Embeddings and latents used by the metrics.
pub trait EvalAdapter {
    fn info(&mut self) -> Result<InfoReply, AdapterError>;
    /// Unit-norm vectors, one per text.
    fn embed_text(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, AdapterError>;
    /// Unit-norm vectors, one per image.
    fn embed_image(&mut self, images: &[RgbImage]) -> Result<Vec<Vec<f32>>, AdapterError>;
    fn vae_latent(&mut self, frames: &[RgbImage]) -> Result<LatentTensor, AdapterError>;
}

impl<A: EvalAdapter + ?Sized> EvalAdapter for Box<A> {
    fn info(&mut self) -> Result<InfoReply, AdapterError> {
        (**self).info()
    }
    fn embed_text(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, AdapterError> {
        (**self).embed_text(texts)
    }
    fn embed_image(&mut self, images: &[RgbImage]) -> Result<Vec<Vec<f32>>, AdapterError> {
        (**self).embed_image(images)
    }
    fn vae_latent(&mut self, frames: &[RgbImage]) -> Result<LatentTensor, AdapterError> {
        (**self).vae_latent(frames)
    }
}

/// Synthetic models with no weights.
///
/// * detect: pixels differing from the top-left pixel by more than
///   `threshold` on any channel form one `object` box; a flat image has
///   no detections.
/// * segment: per frame, the same foreground test; with several seeds each
///   foreground pixel goes to the seed whose box centre is nearest.
/// * embeddings: SHA-256 derived unit vectors of the text or pixel bytes.
/// * latents: per-frame block means of each channel on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StubAdapter {
    pub threshold: u8,
    pub embedding_dim: usize,
    pub latent: LatentDims,
}

impl Default for StubAdapter {
    fn default() -> Self {
        Self {
            threshold: 24,
            embedding_dim: 32,
            latent: LatentDims {
                layers: 1,
                height: 8,
                width: 8,
                channels: 3,
            },
        }
    }
}

impl StubAdapter {
    fn foreground(&self, img: &RgbImage) -> Mask {
        let bg = img.pixel(0, 0);
        Mask::from_fn(img.width(), img.height(), |x, y| {
            img.pixel(x, y).iter().zip(bg).any(|(a, b)| a.abs_diff(b) > self.threshold)
        })
    }

    fn hashed_unit(&self, bytes: &[u8]) -> Vec<f32> {
        // Hex digests are ASCII, so the chained input stays printable.
        let mut seed = sha256_hex(&String::from_utf8_lossy(bytes));
        let mut v = Vec::with_capacity(self.embedding_dim);
        while v.len() < self.embedding_dim {
            let digest = sha256_hex(&seed);
            for pair in digest.as_bytes().chunks(2) {
                let byte = u8::from_str_radix(std::str::from_utf8(pair).expect("hex"), 16).expect("hex");
                v.push(f32::from(byte) / 127.5 - 1.0);
            }
            seed = digest;
        }
        v.truncate(self.embedding_dim);
        normalize(v)
    }
}

fn normalize(v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        return e;
    }
    v.into_iter().map(|x| (f64::from(x) / norm) as f32).collect()
}

fn centre(r: &Rect) -> (f64, f64) {
    (f64::from(r.x0 + r.x1) / 2.0, f64::from(r.y0 + r.y1) / 2.0)
}

impl ModelAdapter for StubAdapter {
    fn detect(&mut self, frame: &RgbImage) -> Result<Vec<Detection>, AdapterError> {
        Ok(self
            .foreground(frame)
            .bbox()
            .map(|bbox| Detection::new("object", 0.9, bbox))
            .into_iter()
            .collect())
    }

    fn segment(&mut self, frames: &FrameSequence, seeds: &[Detection]) -> Result<Vec<Vec<Mask>>, AdapterError> {
        let mut tracks = vec![Vec::with_capacity(frames.len()); seeds.len()];
        let centres: Vec<(f64, f64)> = seeds.iter().map(|s| centre(&s.bbox)).collect();
        for frame in frames.frames() {
            let fg = self.foreground(&frame.image);
            let (w, h) = fg.dimensions();
            for (k, track) in tracks.iter_mut().enumerate() {
                track.push(Mask::from_fn(w, h, |x, y| {
                    fg.get(x, y) && {
                        let d = |c: &(f64, f64)| (f64::from(x) + 0.5 - c.0).powi(2) + (f64::from(y) + 0.5 - c.1).powi(2);
                        let nearest = centres
                            .iter()
                            .enumerate()
                            .min_by(|a, b| d(a.1).total_cmp(&d(b.1)))
                            .map(|(i, _)| i);
                        nearest == Some(k)
                    }
                }));
            }
        }
        Ok(tracks)
    }
}

impl EvalAdapter for StubAdapter {
    fn info(&mut self) -> Result<InfoReply, AdapterError> {
        Ok(InfoReply {
            service: "structcap-mock-adapter".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            mode: "stub".into(),
            embedding_dim: self.embedding_dim,
            latent: self.latent,
            endpoints: ENDPOINTS.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn embed_text(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, AdapterError> {
        if texts.is_empty() || texts.iter().any(|t| t.trim().is_empty()) {
            return Err(AdapterError::Protocol("texts must be non-empty".into()));
        }
        Ok(texts.iter().map(|t| self.hashed_unit(t.as_bytes())).collect())
    }

    fn embed_image(&mut self, images: &[RgbImage]) -> Result<Vec<Vec<f32>>, AdapterError> {
        if images.is_empty() {
            return Err(AdapterError::Protocol("images must be non-empty".into()));
        }
        Ok(images
            .iter()
            .map(|img| {
                let mut bytes = format!("{}x{}:", img.width(), img.height()).into_bytes();
                bytes.extend_from_slice(img.as_raw());
                self.hashed_unit(&bytes)
            })
            .collect())
    }

    fn vae_latent(&mut self, frames: &[RgbImage]) -> Result<LatentTensor, AdapterError> {
        let first = frames.first().ok_or_else(|| AdapterError::Protocol("frames must be non-empty".into()))?;
        let (w, h) = first.dimensions();
        let LatentDims {
            layers,
            height: gh,
            width: gw,
            channels,
        } = self.latent;
        if frames.iter().any(|f| f.dimensions() != (w, h)) {
            return Err(AdapterError::Protocol("frames differ in size".into()));
        }
        if (w as usize) < gw || (h as usize) < gh || channels != 3 {
            return Err(AdapterError::Protocol(format!("{w}x{h} frames are smaller than the {gw}x{gh} latent grid")));
        }
        let mut values = Vec::with_capacity(layers * frames.len() * gh * gw * channels);
        for _ in 0..layers {
            for f in frames {
                for by in 0..gh {
                    let (y0, y1) = (by * h as usize / gh, (by + 1) * h as usize / gh);
                    for bx in 0..gw {
                        let (x0, x1) = (bx * w as usize / gw, (bx + 1) * w as usize / gw);
                        let mut sum = [0u64; 3];
                        for y in y0..y1 {
                            for x in x0..x1 {
                                let p = f.pixel(x as u32, y as u32);
                                for c in 0..3 {
                                    sum[c] += u64::from(p[c]);
                                }
                            }
                        }
                        let n = ((y1 - y0) * (x1 - x0)) as f64 * 255.0;
                        values.extend(sum.iter().map(|s| (*s as f64 / n) as f32));
                    }
                }
            }
        }
        LatentTensor::new(self.latent.shape(frames.len()), values).map_err(|e| AdapterError::Protocol(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use structcap_core::sampling::Frame;

    fn square_at(x: u32) -> RgbImage {
        RgbImage::from_fn(32, 32, |px, py| {
            if (x..x + 8).contains(&px) && (10..18).contains(&py) {
                [220, 20, 20]
            } else {
                [40, 40, 40]
            }
        })
    }

    #[test]
    fn detect_finds_the_square_or_nothing() {
        let mut s = StubAdapter::default();
        assert!(s.detect(&RgbImage::new(16, 16)).unwrap().is_empty());
        let d = s.detect(&square_at(4)).unwrap();
        assert_eq!(d[0].bbox, Rect::new(4, 10, 12, 18));
    }

    #[test]
    fn segment_follows_the_square() {
        let mut s = StubAdapter::default();
        let frames = (0..3)
            .map(|i| Frame {
                index: i,
                image: square_at(4 + 6 * i),
                timestamp: f64::from(i),
            })
            .collect();
        let seq = FrameSequence::new("frames", frames).unwrap();
        let seed = s.detect(&seq.frames()[0].image).unwrap();
        let tracks = s.segment(&seq, &seed).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0][2].bbox(), Some(Rect::new(16, 10, 24, 18)));
        assert!(s.segment(&seq, &[]).unwrap().is_empty());
    }

    #[test]
    fn embeddings_are_unit_and_deterministic() {
        let mut s = StubAdapter::default();
        let v = s.embed_text(&["a red square".into(), "a red square".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(v[0].len(), 32);
        let norm: f64 = v[0].iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-4);
        assert!(s.embed_text(&[]).is_err());
    }

    #[test]
    fn latents_are_block_means() {
        let mut s = StubAdapter::default();
        let white = RgbImage::from_fn(16, 16, |_, _| [255, 255, 255]);
        let z = s.vae_latent(&[white.clone(), white]).unwrap();
        assert_eq!(z.shape(), [1, 2, 8, 8, 3]);
        assert!(z.values().iter().all(|v| *v == 1.0));
        assert!(s.vae_latent(&[RgbImage::new(4, 4)]).is_err());
    }
}
