//! Auxiliary models cluster: detection and mask propagation through a model
//! adapter, per-instance visual prompting, and the camera hint.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::blur::{apply_visual_prompt, gaussian_blur, BlurError, VisualPrompt, DEFAULT_SIGMA};
use crate::camera::{
    classify_camera_motion, decompose, CameraConfig, CameraError, CameraMotionLabel, MotionComponents,
};
use crate::flow::{estimate_global_flow, FlowConfig, FlowError, FlowField};
use crate::image::{Mask, Rect, RgbImage};
use crate::sampling::{Frame, FrameSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_name: String,
    pub confidence: f64,
    /// Box on the first sampled frame.
    pub bbox: Rect,
}

impl Detection {
    pub fn new(class_name: &str, confidence: f64, bbox: Rect) -> Self {
        Self {
            class_name: class_name.to_string(),
            confidence,
            bbox,
        }
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<(), String> {
        if self.class_name.trim().is_empty() {
            return Err("detection has an empty class name".into());
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if !self.bbox.is_valid_in(width, height) {
            return Err(format!("box {:?} invalid for a {width}x{height} frame", self.bbox));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdapterError {
    #[error("adapter transport failure: {0}")]
    Transport(String),
    #[error("adapter protocol error: {0}")]
    Protocol(String),
    #[error("adapter does not provide {0}")]
    Unsupported(&'static str),
}

/// The model-side services the pipeline needs.
pub trait ModelAdapter {
    fn detect(&mut self, frame: &RgbImage) -> Result<Vec<Detection>, AdapterError>;

    /// One mask per frame for every seed, outer order following `seeds`.
    fn segment(&mut self, frames: &FrameSequence, seeds: &[Detection]) -> Result<Vec<Vec<Mask>>, AdapterError>;

    /// Dense-flow replacement for the internal block matcher.
    fn flow(&mut self, _a: &RgbImage, _b: &RgbImage, _grid: u32) -> Result<FlowField, AdapterError> {
        Err(AdapterError::Unsupported("flow"))
    }
}

impl<A: ModelAdapter + ?Sized> ModelAdapter for &mut A {
    fn detect(&mut self, frame: &RgbImage) -> Result<Vec<Detection>, AdapterError> {
        (**self).detect(frame)
    }
    fn segment(&mut self, frames: &FrameSequence, seeds: &[Detection]) -> Result<Vec<Vec<Mask>>, AdapterError> {
        (**self).segment(frames, seeds)
    }
    fn flow(&mut self, a: &RgbImage, b: &RgbImage, grid: u32) -> Result<FlowField, AdapterError> {
        (**self).flow(a, b, grid)
    }
}

impl<A: ModelAdapter + ?Sized> ModelAdapter for alloc::boxed::Box<A> {
    fn detect(&mut self, frame: &RgbImage) -> Result<Vec<Detection>, AdapterError> {
        (**self).detect(frame)
    }
    fn segment(&mut self, frames: &FrameSequence, seeds: &[Detection]) -> Result<Vec<Vec<Mask>>, AdapterError> {
        (**self).segment(frames, seeds)
    }
    fn flow(&mut self, a: &RgbImage, b: &RgbImage, grid: u32) -> Result<FlowField, AdapterError> {
        (**self).flow(a, b, grid)
    }
}

/// Scripted per-detection mask behaviour for [`ScriptedAdapter`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedTrack {
    /// Every pixel belongs to the instance.
    FullFrame,
    /// Rectangle per sampled frame; the last one repeats if the list is short.
    Boxes(Vec<Rect>),
    /// The instance vanishes after detection.
    Empty,
    #[serde(skip)]
    Masks(Vec<Mask>),
}

/// Deterministic in-process adapter: fixed detections, scripted tracks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAdapter {
    pub detections: Vec<Detection>,
    /// Parallel to `detections`; missing entries behave as `Boxes([bbox])`.
    #[serde(default)]
    pub tracks: Vec<ScriptedTrack>,
    /// When set, every call fails with this transport error.
    #[serde(default)]
    pub fail: Option<String>,
    #[serde(skip)]
    pub detect_calls: usize,
    #[serde(skip)]
    pub segment_calls: usize,
}

impl ScriptedAdapter {
    pub fn new(detections: Vec<Detection>, tracks: Vec<ScriptedTrack>) -> Self {
        Self {
            detections,
            tracks,
            ..Self::default()
        }
    }

    fn check_fail(&self) -> Result<(), AdapterError> {
        match &self.fail {
            Some(msg) => Err(AdapterError::Transport(msg.clone())),
            None => Ok(()),
        }
    }

    fn track_masks(&self, seed: &Detection, frames: &FrameSequence) -> Result<Vec<Mask>, AdapterError> {
        let (w, h) = frames.dimensions().unwrap_or((0, 0));
        let idx = self
            .detections
            .iter()
            .position(|d| d.class_name == seed.class_name && d.bbox == seed.bbox)
            .ok_or_else(|| AdapterError::Protocol(format!("unknown seed {:?}", seed.bbox)))?;
        let n = frames.len();
        let masks = match self.tracks.get(idx) {
            Some(ScriptedTrack::FullFrame) => (0..n).map(|_| Mask::full(w, h)).collect(),
            Some(ScriptedTrack::Empty) => (0..n).map(|_| Mask::empty(w, h)).collect(),
            Some(ScriptedTrack::Masks(m)) => m.clone(),
            Some(ScriptedTrack::Boxes(boxes)) if !boxes.is_empty() => (0..n)
                .map(|k| Mask::from_rect(w, h, boxes[k.min(boxes.len() - 1)]))
                .collect(),
            _ => (0..n).map(|_| Mask::from_rect(w, h, seed.bbox)).collect(),
        };
        Ok(masks)
    }
}

impl ModelAdapter for ScriptedAdapter {
    fn detect(&mut self, _frame: &RgbImage) -> Result<Vec<Detection>, AdapterError> {
        self.detect_calls += 1;
        self.check_fail()?;
        Ok(self.detections.clone())
    }

    fn segment(&mut self, frames: &FrameSequence, seeds: &[Detection]) -> Result<Vec<Vec<Mask>>, AdapterError> {
        self.segment_calls += 1;
        self.check_fail()?;
        seeds.iter().map(|s| self.track_masks(s, frames)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTrack {
    pub instance_id: u32,
    pub masks: Vec<Mask>,
    /// Tight box of each mask; `None` where the mask is empty.
    pub bboxes: Vec<Option<Rect>>,
}

impl MaskTrack {
    pub fn new(instance_id: u32, masks: Vec<Mask>) -> Self {
        let bboxes = masks.iter().map(Mask::bbox).collect();
        Self {
            instance_id,
            masks,
            bboxes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAssets {
    pub instance_id: u32,
    pub class_name: String,
    pub confidence: f64,
    /// Named `instance_<id>`; same dimensions and indices as the source.
    pub blurred_clip: FrameSequence,
    pub track: MaskTrack,
}

impl InstanceAssets {
    pub fn caption_id(&self) -> String {
        format!("i{}", self.instance_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowSource {
    #[default]
    Internal,
    Adapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmcConfig {
    pub confidence_threshold: f64,
    pub max_instances: usize,
    pub sigma: f64,
    pub visual_prompt: VisualPrompt,
    pub flow: FlowConfig,
    pub camera: CameraConfig,
    pub flow_source: FlowSource,
}

impl Default for AmcConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.5,
            max_instances: 6,
            sigma: DEFAULT_SIGMA,
            visual_prompt: VisualPrompt::Blur,
            flow: FlowConfig::default(),
            camera: CameraConfig::default(),
            flow_source: FlowSource::Internal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AmcError {
    #[error("no frames to process")]
    NoFrames,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Blur(#[from] BlurError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmcResult {
    /// Everything the detector returned, before thresholding.
    pub detections: Vec<Detection>,
    /// Kept instances, in descending confidence.
    pub assets: Vec<InstanceAssets>,
    pub camera: CameraMotionLabel,
    pub motion: Option<MotionComponents>,
    /// Mean flow magnitude of each consecutive frame pair.
    pub flow_magnitudes: Vec<f64>,
}

/// Detections that pass the threshold, stably sorted by descending
/// confidence and capped at `max_instances`.
pub fn select_detections(detections: &[Detection], cfg: &AmcConfig) -> Vec<Detection> {
    let mut kept: Vec<Detection> = detections
        .iter()
        .filter(|d| d.confidence >= cfg.confidence_threshold)
        .cloned()
        .collect();
    kept.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    kept.truncate(cfg.max_instances);
    kept
}

fn camera_flows<A: ModelAdapter + ?Sized>(
    frames: &FrameSequence,
    adapter: &mut A,
    cfg: &AmcConfig,
) -> Result<Vec<FlowField>, AmcError> {
    frames
        .frames()
        .windows(2)
        .map(|pair| match cfg.flow_source {
            FlowSource::Internal => Ok(estimate_global_flow(&pair[0].image, &pair[1].image, &cfg.flow)?),
            FlowSource::Adapter => Ok(adapter.flow(&pair[0].image, &pair[1].image, cfg.flow.grid)?),
        })
        .collect()
}

pub fn run_amc<A: ModelAdapter + ?Sized>(
    frames: &FrameSequence,
    adapter: &mut A,
    cfg: &AmcConfig,
) -> Result<AmcResult, AmcError> {
    let first = frames.frames().first().ok_or(AmcError::NoFrames)?;
    let (w, h) = first.image.dimensions();

    let detections = adapter.detect(&first.image)?;
    for d in &detections {
        d.validate(w, h).map_err(AdapterError::Protocol)?;
    }
    let kept = select_detections(&detections, cfg);

    let mut assets = Vec::with_capacity(kept.len());
    if !kept.is_empty() {
        let tracks = adapter.segment(frames, &kept)?;
        if tracks.len() != kept.len() {
            return Err(AdapterError::Protocol(format!(
                "{} tracks for {} seeds",
                tracks.len(),
                kept.len()
            ))
            .into());
        }
        let backgrounds: Option<Vec<RgbImage>> = match cfg.visual_prompt {
            VisualPrompt::Blur => Some(
                frames
                    .frames()
                    .iter()
                    .map(|f| gaussian_blur(&f.image, cfg.sigma))
                    .collect::<Result<_, _>>()?,
            ),
            _ => None,
        };
        for (id, (det, masks)) in kept.into_iter().zip(tracks).enumerate() {
            let id = id as u32;
            if masks.len() != frames.len() {
                return Err(AdapterError::Protocol(format!(
                    "instance {id}: {} masks for {} frames",
                    masks.len(),
                    frames.len()
                ))
                .into());
            }
            let mut clip = Vec::with_capacity(frames.len());
            for (k, (frame, mask)) in frames.frames().iter().zip(&masks).enumerate() {
                if mask.dimensions() != (w, h) {
                    return Err(AdapterError::Protocol(format!(
                        "instance {id}: mask {k} is {}x{}, frame is {w}x{h}",
                        mask.width(),
                        mask.height()
                    ))
                    .into());
                }
                let bg = backgrounds.as_ref().map(|b| &b[k]);
                clip.push(Frame {
                    index: frame.index,
                    image: apply_visual_prompt(&frame.image, bg, mask, cfg.visual_prompt, cfg.sigma)?,
                    timestamp: frame.timestamp,
                });
            }
            let blurred_clip = FrameSequence::new(format!("instance_{id}"), clip)
                .expect("indices and sizes copied from a valid sequence");
            assets.push(InstanceAssets {
                instance_id: id,
                class_name: det.class_name,
                confidence: det.confidence,
                blurred_clip,
                track: MaskTrack::new(id, masks),
            });
        }
    }

    let flows = camera_flows(frames, adapter, cfg)?;
    let flow_magnitudes = flows.iter().map(FlowField::mean_magnitude).collect();
    let (camera, motion) = if flows.is_empty() {
        (CameraMotionLabel::unknown(), None)
    } else {
        (
            classify_camera_motion(&flows, &cfg.camera)?,
            Some(decompose(&flows)?),
        )
    };

    Ok(AmcResult {
        detections,
        assets,
        camera,
        motion,
        flow_magnitudes,
    })
}
