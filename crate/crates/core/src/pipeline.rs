//! Frames in, structured caption out: AMC, then the scene conversations,
//! then one conversation per instance.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::amc::{run_amc, AmcConfig, AmcError, AmcResult, ModelAdapter};
use crate::caption::{CaptionError, StructuredCaption};
use crate::chat::ChatBackend;
use crate::orchestrator::{assemble_caption, CallRecord, Orchestrator, OrchestratorError};
use crate::sampling::{FrameSequence, TemporalMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Ingest,
    Amc,
    Global,
    Background,
    Camera,
    Instance,
    Assemble,
    Output,
}

impl PipelineStage {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Ingest => "ingest",
            PipelineStage::Amc => "amc",
            PipelineStage::Global => "global",
            PipelineStage::Background => "background",
            PipelineStage::Camera => "camera",
            PipelineStage::Instance => "instance",
            PipelineStage::Assemble => "assemble",
            PipelineStage::Output => "output",
        }
    }
}

impl core::fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("amc: {0}")]
    Amc(#[from] AmcError),
    #[error("{stage}: {source}")]
    Orchestrator {
        stage: PipelineStage,
        #[source]
        source: OrchestratorError,
    },
    #[error("assemble: {0}")]
    Assemble(#[from] CaptionError),
}

impl PipelineError {
    pub fn stage(&self) -> PipelineStage {
        match self {
            PipelineError::Amc(_) => PipelineStage::Amc,
            PipelineError::Orchestrator { stage, .. } => *stage,
            PipelineError::Assemble(_) => PipelineStage::Assemble,
        }
    }

    /// True when the root cause is the chat backend or model adapter.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            PipelineError::Amc(AmcError::Adapter(_))
                | PipelineError::Orchestrator {
                    source: OrchestratorError::Backend { .. },
                    ..
                }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionRun {
    pub caption: StructuredCaption,
    pub amc: AmcResult,
    /// `(operation, flag)` for every flagged step.
    pub flags: Vec<(String, String)>,
    pub records: Vec<CallRecord>,
}

/// Runs the whole captioning chain on already sampled frames.
pub fn caption_frames<A, B>(
    frames: &FrameSequence,
    meta: Option<&TemporalMetadata>,
    adapter: &mut A,
    orchestrator: &mut Orchestrator<B>,
    amc_cfg: &AmcConfig,
) -> Result<CaptionRun, PipelineError>
where
    A: ModelAdapter + ?Sized,
    B: ChatBackend,
{
    let tag = |stage| move |source| PipelineError::Orchestrator { stage, source };
    let first_record = orchestrator.records().len();
    let amc = run_amc(frames, adapter, amc_cfg)?;

    let mut flags = Vec::new();
    let global = orchestrator
        .describe_global(frames, meta)
        .map_err(tag(PipelineStage::Global))?;
    flags.extend(global.flags.iter().map(|f| ("global".to_string(), f.to_string())));
    let background = orchestrator
        .describe_background(frames, &global.value, meta)
        .map_err(tag(PipelineStage::Background))?;
    let camera = orchestrator
        .annotate_camera(frames, &amc.camera, meta)
        .map_err(tag(PipelineStage::Camera))?;

    let mut instances = Vec::with_capacity(amc.assets.len());
    for asset in &amc.assets {
        let d = orchestrator
            .describe_instance(asset, &global.value)
            .map_err(tag(PipelineStage::Instance))?;
        instances.push((asset.confidence, d.value));
    }

    let caption = assemble_caption(global.value, background.value, camera.value, instances, meta.cloned())?;
    Ok(CaptionRun {
        caption,
        amc,
        flags,
        records: orchestrator.records()[first_record..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amc::{Detection, ScriptedAdapter, ScriptedTrack};
    use crate::chat::{MockChat, MockScript};
    use crate::image::{Rect, RgbImage};
    use crate::orchestrator::{OP_BACKGROUND, OP_CAMERA, OP_GLOBAL, OP_INSTANCE};
    use crate::sampling::Frame;
    use alloc::vec;

    fn frames() -> FrameSequence {
        let f = (0..3)
            .map(|i| Frame {
                index: i,
                image: RgbImage::from_fn(32, 32, |x, y| [(x * 8) as u8, (y * 8) as u8, 0]),
                timestamp: f64::from(i),
            })
            .collect();
        FrameSequence::new("frames", f).unwrap()
    }

    fn script() -> MockScript {
        MockScript::new()
            .always(OP_GLOBAL, "A red ball rests on the floor.")
            .always(OP_BACKGROUND, "A plain floor.")
            .always(OP_CAMERA, "steady")
            .always(OP_INSTANCE, "APPEARANCE: red\nACTIONS_MOTION: still\nPOSITION: centre")
    }

    #[test]
    fn zero_detections_gives_empty_instances() {
        let mut o = Orchestrator::with_defaults(MockChat::new(script()));
        let run = caption_frames(&frames(), None, &mut ScriptedAdapter::default(), &mut o, &AmcConfig::default()).unwrap();
        assert!(run.caption.instances.is_empty());
        assert_eq!(run.records.len(), 3);
    }

    #[test]
    fn one_instance_end_to_end() {
        let mut a = ScriptedAdapter::new(
            vec![Detection::new("ball", 0.8, Rect::new(4, 4, 12, 12))],
            vec![ScriptedTrack::Boxes(vec![Rect::new(4, 4, 12, 12)])],
        );
        let mut o = Orchestrator::with_defaults(MockChat::new(script()));
        let run = caption_frames(&frames(), None, &mut a, &mut o, &AmcConfig::default()).unwrap();
        assert_eq!(run.caption.instances.len(), 1);
        assert_eq!(run.caption.instances[0].class_name, "ball");
    }

    #[test]
    fn errors_carry_stage() {
        let mut o = Orchestrator::with_defaults(MockChat::new(MockScript::new().always(OP_GLOBAL, "A ball.")));
        let err = caption_frames(&frames(), None, &mut ScriptedAdapter::default(), &mut o, &AmcConfig::default())
            .unwrap_err();
        assert_eq!(err.stage(), PipelineStage::Background);
        assert!(err.is_backend());
    }
}
