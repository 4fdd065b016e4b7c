//! Uniform frame sampling and temporal metadata.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::image::RgbImage;

/// Frames handed to the MLLM per call when nothing else is configured.
pub const DEFAULT_SAMPLE_COUNT: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("cannot sample from a source with zero frames")]
    NoFrames,
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("fps must be finite and positive, got {0}")]
    BadFps(f64),
    #[error("frame indices must be strictly increasing")]
    UnorderedFrames,
    #[error("frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    MixedDimensions {
        index: u32,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
}

/// Indices of `n` uniformly spaced frames out of `frame_count`:
/// `idx_k = round_half_up(k * (F - 1) / (n - 1))`, duplicates collapsed.
pub fn uniform_indices(frame_count: u32, n: usize) -> Result<Vec<u32>, SamplingError> {
    if frame_count == 0 {
        return Err(SamplingError::NoFrames);
    }
    if n == 0 {
        return Err(SamplingError::ZeroSamples);
    }
    if n == 1 {
        return Ok(alloc::vec![0]);
    }
    let last = u64::from(frame_count - 1);
    let denom = (n - 1) as u64;
    let mut out: Vec<u32> = Vec::with_capacity(n);
    for k in 0..n as u64 {
        // floor((2k(F-1) + (n-1)) / (2(n-1))) is round-half-up of k(F-1)/(n-1)
        let idx = (2 * k * last + denom) / (2 * denom);
        let idx = idx as u32;
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    Ok(out)
}

/// Duration, frame count, rate and per-sample timestamps of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalMetadata {
    pub duration: f64,
    pub frame_count: u32,
    pub fps: f64,
    pub timestamps: Vec<f64>,
}

impl TemporalMetadata {
    /// Builds metadata for the given sampled indices. `container_duration`
    /// wins when present; otherwise duration is `frame_count / fps`.
    pub fn new(
        frame_count: u32,
        fps: f64,
        container_duration: Option<f64>,
        sampled: &[u32],
    ) -> Result<Self, SamplingError> {
        if frame_count == 0 {
            return Err(SamplingError::NoFrames);
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(SamplingError::BadFps(fps));
        }
        let duration = match container_duration {
            Some(d) if d.is_finite() && d > 0.0 => d,
            _ => f64::from(frame_count) / fps,
        };
        let timestamps = sampled.iter().map(|&i| f64::from(i) / fps).collect();
        Ok(Self {
            duration,
            frame_count,
            fps,
            timestamps,
        })
    }

    /// `|duration - frame_count / fps| <= 1 / fps`.
    pub fn is_consistent(&self) -> bool {
        let expected = f64::from(self.frame_count) / self.fps;
        libm::fabs(self.duration - expected) <= 1.0 / self.fps + 1e-12
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(alloc::format!("fps must be positive, got {}", self.fps));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(alloc::format!("duration must be positive, got {}", self.duration));
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err("timestamps must be strictly increasing".into());
        }
        if self
            .timestamps
            .iter()
            .any(|&t| !(0.0..=self.duration).contains(&t))
        {
            return Err("timestamps must lie within [0, duration]".into());
        }
        Ok(())
    }

    /// The text block handed to the MLLM alongside the frames.
    pub fn describe(&self) -> String {
        let stamps: Vec<String> = self
            .timestamps
            .iter()
            .map(|t| alloc::format!("{t:.2}s"))
            .collect();
        alloc::format!(
            "The video lasts for {:.2} seconds, and {} frames are uniformly sampled from it. These frames are located at {}.",
            self.duration,
            self.timestamps.len(),
            stamps.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u32,
    pub image: RgbImage,
    pub timestamp: f64,
}

/// An ordered run of frames from one clip. `clip` names the source so image
/// references handed to a chat backend can be audited ("frames" for the
/// original video, `instance_<id>` for an isolated instance).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    clip: String,
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(clip: impl Into<String>, frames: Vec<Frame>) -> Result<Self, SamplingError> {
        if frames.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err(SamplingError::UnorderedFrames);
        }
        if let Some(first) = frames.first() {
            let (w, h) = (first.image.width(), first.image.height());
            for f in &frames[1..] {
                if f.image.width() != w || f.image.height() != h {
                    return Err(SamplingError::MixedDimensions {
                        index: f.index,
                        got_w: f.image.width(),
                        got_h: f.image.height(),
                        want_w: w,
                        want_h: h,
                    });
                }
            }
        }
        Ok(Self {
            clip: clip.into(),
            frames,
        })
    }

    pub fn clip(&self) -> &str {
        &self.clip
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dimensions(&self) -> Option<(u32, u32)> {
        self.frames
            .first()
            .map(|f| (f.image.width(), f.image.height()))
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.frames.iter().map(|f| f.index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_n_equals_frame_count() {
        assert_eq!(uniform_indices(8, 8).unwrap(), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn hand_computed_150_by_8() {
        // k*149/7 = 0, 21.29, 42.57, 63.86, 85.14, 106.43, 127.71, 149
        assert_eq!(
            uniform_indices(150, 8).unwrap(),
            [0, 21, 43, 64, 85, 106, 128, 149]
        );
    }

    #[test]
    fn oversampling_collapses_duplicates() {
        // k*2/4 = 0, 0.5, 1, 1.5, 2 -> 0, 1, 1, 2, 2
        assert_eq!(uniform_indices(3, 5).unwrap(), [0, 1, 2]);
    }

    #[test]
    fn half_rounds_up() {
        // F=4, n=3: k*3/2 = 0, 1.5, 3
        assert_eq!(uniform_indices(4, 3).unwrap(), [0, 2, 3]);
    }

    #[test]
    fn single_sample_is_first_frame() {
        assert_eq!(uniform_indices(100, 1).unwrap(), [0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(uniform_indices(0, 4), Err(SamplingError::NoFrames));
        assert_eq!(uniform_indices(4, 0), Err(SamplingError::ZeroSamples));
    }

    #[test]
    fn duration_from_frame_count() {
        let m = TemporalMetadata::new(150, 30.0, None, &[0, 149]).unwrap();
        assert_eq!(m.duration, 5.0);
        assert!(m.is_consistent());
        m.validate().unwrap();
    }

    #[test]
    fn container_duration_wins() {
        let m = TemporalMetadata::new(150, 30.0, Some(5.02), &[0]).unwrap();
        assert_eq!(m.duration, 5.02);
        assert!(m.is_consistent());
    }

    #[test]
    fn zero_frames_rejected() {
        assert_eq!(
            TemporalMetadata::new(0, 30.0, None, &[]),
            Err(SamplingError::NoFrames)
        );
    }

    #[test]
    fn frame_sequence_rejects_mixed_sizes() {
        let a = Frame {
            index: 0,
            image: RgbImage::new(4, 4),
            timestamp: 0.0,
        };
        let b = Frame {
            index: 1,
            image: RgbImage::new(4, 5),
            timestamp: 0.1,
        };
        assert!(matches!(
            FrameSequence::new("frames", alloc::vec![a, b]),
            Err(SamplingError::MixedDimensions { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn endpoints_and_monotonicity(f in 1u32..5000, n in 1usize..64) {
                let idx = uniform_indices(f, n).unwrap();
                prop_assert_eq!(idx[0], 0);
                if n >= 2 {
                    prop_assert_eq!(*idx.last().unwrap(), f - 1);
                }
                prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(idx.len() <= n.min(f as usize));
            }

            #[test]
            fn metadata_is_consistent(f in 1u32..10_000, fps in 1.0f64..240.0, n in 1usize..16) {
                let idx = uniform_indices(f, n).unwrap();
                let m = TemporalMetadata::new(f, fps, None, &idx).unwrap();
                prop_assert!(m.is_consistent());
                prop_assert!(m.validate().is_ok());
            }
        }
    }
}
