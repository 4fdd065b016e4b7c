//! Chat conversations that produce each part of a structured caption.
//!
//! Every operation builds a [`PromptBundle`] from the prompt pack, sends it
//! through a [`ChatBackend`] and parses the reply. Operations never make more
//! than `1 + retry_budget` backend calls. Each call is recorded so the exact
//! conversation can be audited or written out as a transcript.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::amc::InstanceAssets;
use crate::caption::{BboxSample, CameraAnnotation, CaptionError, InstanceDescription, StructuredCaption};
use crate::camera::{hint_text, CameraMotionLabel, CameraMovement};
use crate::chat::{
    BackendConfig, BackendError, BundleError, ChatBackend, ChatRequest, ChatTurn, ExpectedFormat, ImageRef,
    PromptBundle,
};
use crate::hints::{ClassHintRegistry, Lexicon};
use crate::prompts::{label_list, PromptPack};
use crate::sampling::{FrameSequence, TemporalMetadata};
use crate::text::{count_words, fill, truncate_words, GLOBAL_SUMMARY_WORD_LIMIT};

pub const OP_GLOBAL: &str = "global";
pub const OP_BACKGROUND: &str = "background";
pub const OP_CAMERA: &str = "camera";
pub const OP_INSTANCE: &str = "instance";

/// Set when the global summary had to be cut to the word limit.
pub const FLAG_WORD_LIMIT_TRUNCATED: &str = "word_limit_truncated";

pub const INSTANCE_TAGS: [&str; 3] = ["APPEARANCE", "ACTIONS_MOTION", "POSITION"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OrchestratorError {
    #[error("{operation}: {source}")]
    Backend {
        operation: String,
        #[source]
        source: BackendError,
    },
    #[error("{operation}: could not parse reply: {reason}")]
    Parse { operation: String, reason: String },
    #[error("{0}")]
    Precondition(&'static str),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Caption(#[from] CaptionError),
}

/// A parsed result plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotated<T> {
    pub value: T,
    /// Backend calls made, including retries.
    pub calls: u32,
    pub flags: Vec<&'static str>,
}

impl<T> Annotated<T> {
    pub fn retries(&self) -> u32 {
        self.calls.saturating_sub(1)
    }
}

/// One backend exchange as it went over the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub operation: String,
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    pub backend: BackendConfig,
    pub retry_budget: u32,
    /// Off: the classifier label is withheld and the model names the movement.
    pub use_camera_hint: bool,
    /// Off: prompts omit the temporal metadata sentence.
    pub include_metadata: bool,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            backend: BackendConfig::default(),
            retry_budget: 2,
            use_camera_hint: true,
            include_metadata: true,
        }
    }
}

/// Splits a reply into `TAG: value` sections, in `tags` order.
///
/// Tags match case-insensitively at line start, after optional markdown
/// bullets or bold markers. Text before the first tag is ignored; lines
/// after a tag continue its value. Every tag must appear exactly once.
pub fn parse_tagged_fields(reply: &str, tags: &[&str]) -> Result<Vec<String>, String> {
    let mut values: Vec<Option<String>> = vec![None; tags.len()];
    let mut current: Option<usize> = None;
    for line in reply.lines() {
        let bare = line.trim().trim_start_matches(['*', '-', '#', ' ']);
        let hit = tags.iter().enumerate().find_map(|(i, tag)| {
            let head = bare.get(..tag.len())?;
            if !head.eq_ignore_ascii_case(tag) {
                return None;
            }
            let rest = bare[tag.len()..].trim_start_matches('*').strip_prefix(':')?;
            Some((i, rest.trim().trim_start_matches('*').trim()))
        });
        match hit {
            Some((i, rest)) => {
                if values[i].is_some() {
                    return Err(format!("{} appears more than once", tags[i]));
                }
                values[i] = Some(rest.to_string());
                current = Some(i);
            }
            None => {
                if let Some(v) = current.and_then(|i| values[i].as_mut()) {
                    let t = line.trim();
                    if !t.is_empty() {
                        if !v.is_empty() {
                            v.push(' ');
                        }
                        v.push_str(t);
                    }
                }
            }
        }
    }
    tags.iter()
        .zip(values)
        .map(|(tag, v)| match v {
            Some(v) if !v.is_empty() => Ok(v),
            Some(_) => Err(format!("{tag} is empty")),
            None => Err(format!("missing {tag}")),
        })
        .collect()
}

/// Sends one bundle, retrying transport failures while the bundle's budget
/// allows. `used` counts every call made for the operation so far; every
/// attempt is appended to `records`.
pub fn dispatch<B: ChatBackend + ?Sized>(
    backend: &mut B,
    cfg: &BackendConfig,
    records: &mut Vec<CallRecord>,
    op: &str,
    bundle: &PromptBundle,
    used: &mut u32,
) -> Result<String, BackendError> {
    let request = ChatRequest::new(op, bundle, cfg);
    loop {
        *used += 1;
        let result = backend.chat(&request);
        records.push(CallRecord {
            operation: op.to_string(),
            request: request.clone(),
            reply: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
        });
        match result {
            Err(BackendError::Transport(_)) if *used <= bundle.retry_budget => continue,
            other => return other,
        }
    }
}

/// Fills a template and drops lines left empty by an empty substitution.
pub fn render_prompt(template: &str, vars: &[(&str, &str)]) -> String {
    fill(template, vars)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits a camera reply into the first movement label it names and the
/// remaining qualifiers, with joining punctuation removed.
pub fn split_camera_reply(reply: &str) -> (Option<CameraMovement>, String) {
    let reply = reply.trim();
    let trim = |s: &str| s.trim_matches(|c: char| c.is_whitespace() || ",;:.-".contains(c)).to_string();
    match CameraMovement::find_in(reply) {
        Some((m, a, b)) => {
            let before = trim(&reply[..a]);
            let after = trim(&reply[b..]);
            let rest = match (before.is_empty(), after.is_empty()) {
                (true, _) => after,
                (_, true) => before,
                _ => format!("{before}, {after}"),
            };
            (Some(m), rest)
        }
        None => (None, trim(reply)),
    }
}

pub struct Orchestrator<B> {
    backend: B,
    pack: PromptPack,
    hints: ClassHintRegistry,
    lexicon: Lexicon,
    pub cfg: OrchestratorConfig,
    records: Vec<CallRecord>,
}

impl<B: ChatBackend> Orchestrator<B> {
    pub fn new(
        backend: B,
        pack: PromptPack,
        hints: ClassHintRegistry,
        lexicon: Lexicon,
        cfg: OrchestratorConfig,
    ) -> Self {
        Self {
            backend,
            pack,
            hints,
            lexicon,
            cfg,
            records: Vec::new(),
        }
    }

    /// Shipped prompt pack, hints and lexicon with default settings.
    pub fn with_defaults(backend: B) -> Self {
        Self::new(
            backend,
            PromptPack::default(),
            ClassHintRegistry::default(),
            Lexicon::default(),
            OrchestratorConfig::default(),
        )
    }

    pub fn pack(&self) -> &PromptPack {
        &self.pack
    }

    pub fn records(&self) -> &[CallRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<CallRecord> {
        core::mem::take(&mut self.records)
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn into_backend(self) -> B {
        self.backend
    }

    fn metadata_line(&self, meta: Option<&TemporalMetadata>) -> String {
        match meta {
            Some(m) if self.cfg.include_metadata => m.describe(),
            _ => String::new(),
        }
    }

    fn bundle(&self, user: ChatTurn, format: ExpectedFormat) -> Result<PromptBundle, OrchestratorError> {
        Ok(PromptBundle::new(
            vec![ChatTurn::system(self.pack.system.clone()), user],
            format,
            self.cfg.retry_budget,
        )?)
    }

    fn ask(&mut self, op: &str, bundle: &PromptBundle, used: &mut u32) -> Result<String, OrchestratorError> {
        dispatch(&mut self.backend, &self.cfg.backend, &mut self.records, op, bundle, used).map_err(|source| {
            OrchestratorError::Backend {
                operation: op.to_string(),
                source,
            }
        })
    }

    fn format_correction(&self, problem: &str) -> String {
        fill(&self.pack.format_correction, &[("problem", problem)])
    }

    /// Asks until `parse` accepts the reply, with at most one corrective
    /// turn and never beyond the retry budget.
    fn ask_parsed<T>(
        &mut self,
        op: &str,
        bundle: PromptBundle,
        mut parse: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<Annotated<T>, OrchestratorError> {
        let mut used = 0;
        let mut bundle = bundle;
        let mut corrected = false;
        loop {
            let reply = self.ask(op, &bundle, &mut used)?;
            match parse(&reply) {
                Ok(value) => {
                    return Ok(Annotated {
                        value,
                        calls: used,
                        flags: Vec::new(),
                    })
                }
                Err(reason) => {
                    if corrected || used > bundle.retry_budget {
                        return Err(OrchestratorError::Parse {
                            operation: op.to_string(),
                            reason,
                        });
                    }
                    corrected = true;
                    bundle = bundle.with_correction(&reply, &self.format_correction(&reason));
                }
            }
        }
    }

    /// One sentence of at most 20 words. Over-long replies are re-asked
    /// while the budget lasts, then truncated and flagged.
    pub fn describe_global(
        &mut self,
        frames: &FrameSequence,
        meta: Option<&TemporalMetadata>,
    ) -> Result<Annotated<String>, OrchestratorError> {
        if frames.is_empty() {
            return Err(OrchestratorError::Precondition("frames are empty"));
        }
        self.backend.register_clip(frames);
        let text = render_prompt(&self.pack.global, &[("temporal_metadata", &self.metadata_line(meta))]);
        let mut bundle = self.bundle(ChatTurn::user_with_images(text, ImageRef::all(frames)), ExpectedFormat::OneSentence)?;
        let mut used = 0;
        loop {
            let reply = self.ask(OP_GLOBAL, &bundle, &mut used)?;
            let summary = reply.trim().to_string();
            let words = count_words(&summary);
            if words == 0 {
                if used > bundle.retry_budget {
                    return Err(OrchestratorError::Parse {
                        operation: OP_GLOBAL.into(),
                        reason: "empty reply".into(),
                    });
                }
                bundle = bundle.with_correction(&reply, &self.format_correction("the answer was empty"));
                continue;
            }
            if words <= GLOBAL_SUMMARY_WORD_LIMIT {
                return Ok(Annotated {
                    value: summary,
                    calls: used,
                    flags: Vec::new(),
                });
            }
            if used > bundle.retry_budget {
                return Ok(Annotated {
                    value: truncate_words(&summary, GLOBAL_SUMMARY_WORD_LIMIT),
                    calls: used,
                    flags: vec![FLAG_WORD_LIMIT_TRUNCATED],
                });
            }
            let correction = fill(&self.pack.global_correction, &[("words", &words.to_string())]);
            bundle = bundle.with_correction(&reply, &correction);
        }
    }

    /// Background description with the global summary as context.
    pub fn describe_background(
        &mut self,
        frames: &FrameSequence,
        global_summary: &str,
        meta: Option<&TemporalMetadata>,
    ) -> Result<Annotated<String>, OrchestratorError> {
        if frames.is_empty() {
            return Err(OrchestratorError::Precondition("frames are empty"));
        }
        self.backend.register_clip(frames);
        let text = render_prompt(
            &self.pack.background,
            &[
                ("temporal_metadata", &self.metadata_line(meta)),
                ("global_summary", global_summary),
            ],
        );
        let bundle = self.bundle(ChatTurn::user_with_images(text, ImageRef::all(frames)), ExpectedFormat::FreeText)?;
        self.ask_parsed(OP_BACKGROUND, bundle, |r| {
            let t = r.trim();
            if t.is_empty() {
                Err("the answer was empty".into())
            } else {
                Ok(t.to_string())
            }
        })
    }

    /// Camera annotation. A known hint fixes the basic movement and the
    /// model supplies qualifiers; with no usable hint the model's label is
    /// parsed from the reply.
    pub fn annotate_camera(
        &mut self,
        frames: &FrameSequence,
        hint: &CameraMotionLabel,
        meta: Option<&TemporalMetadata>,
    ) -> Result<Annotated<CameraAnnotation>, OrchestratorError> {
        if frames.is_empty() {
            return Err(OrchestratorError::Precondition("frames are empty"));
        }
        self.backend.register_clip(frames);
        let effective = if self.cfg.use_camera_hint {
            hint.movement
        } else {
            CameraMovement::Unknown
        };
        let hint_line = if self.cfg.use_camera_hint {
            hint_text(hint)
        } else {
            String::new()
        };
        let labels = label_list();
        let text = render_prompt(
            &self.pack.camera,
            &[
                ("temporal_metadata", &self.metadata_line(meta)),
                ("camera_hint", &hint_line),
                ("labels", &labels),
            ],
        );
        let bundle = self.bundle(ChatTurn::user_with_images(text, ImageRef::all(frames)), ExpectedFormat::FreeText)?;
        self.ask_parsed(OP_CAMERA, bundle, |reply| {
            let (found, qualitative) = split_camera_reply(reply);
            let movement = match (effective, found) {
                (CameraMovement::Unknown, Some(m)) => m,
                (CameraMovement::Unknown, None) => {
                    return Err(format!("the answer names none of: {labels}"));
                }
                (m, _) => m,
            };
            if qualitative.is_empty() {
                return Err("the answer gives no intensity or speed".into());
            }
            Ok(CameraAnnotation {
                basic_movement: movement,
                qualitative,
                shot_notes: None,
            })
        })
    }

    /// Builds the instance conversation: blurred clip only, class hint,
    /// lexicon guidance and the injected global summary.
    pub fn instance_bundle(&self, asset: &InstanceAssets, global_summary: &str) -> Result<PromptBundle, OrchestratorError> {
        let positive = self.lexicon.positive().join(", ");
        let negative = self.lexicon.negative().join(", ");
        let text = render_prompt(
            &self.pack.instance,
            &[
                ("class_name", &asset.class_name),
                ("global_summary", global_summary),
                ("class_hint", self.hints.lookup_hint(&asset.class_name)),
                ("positive_lexicon", &positive),
                ("negative_lexicon", &negative),
            ],
        );
        self.bundle(
            ChatTurn::user_with_images(text, ImageRef::all(&asset.blurred_clip)),
            ExpectedFormat::StructuredFields,
        )
    }

    pub fn describe_instance(
        &mut self,
        asset: &InstanceAssets,
        global_summary: &str,
    ) -> Result<Annotated<InstanceDescription>, OrchestratorError> {
        if asset.blurred_clip.is_empty() {
            return Err(OrchestratorError::Precondition("instance clip is empty"));
        }
        self.backend.register_clip(&asset.blurred_clip);
        let bundle = self.instance_bundle(asset, global_summary)?;
        let op = format!("{OP_INSTANCE}:{}", asset.caption_id());
        let fields = self.ask_parsed(&op, bundle, |r| parse_tagged_fields(r, &INSTANCE_TAGS))?;
        let track: Vec<BboxSample> = asset
            .blurred_clip
            .frames()
            .iter()
            .zip(&asset.track.bboxes)
            .filter_map(|(f, b)| b.map(|b| BboxSample(f.index, b.x0, b.y0, b.x1, b.y1)))
            .collect();
        let mut it = fields.value.into_iter();
        let mut next = || it.next().expect("three parsed fields");
        Ok(Annotated {
            value: InstanceDescription {
                id: asset.caption_id(),
                class_name: asset.class_name.clone(),
                appearance: next(),
                actions_motion: next(),
                position: next(),
                bbox_track: Some(track),
            },
            calls: fields.calls,
            flags: fields.flags,
        })
    }
}

/// Joins the parts into a validated caption, instances ordered by
/// descending detector confidence (stable for ties).
pub fn assemble_caption(
    global_summary: String,
    background: String,
    camera: CameraAnnotation,
    instances: Vec<(f64, InstanceDescription)>,
    meta: Option<TemporalMetadata>,
) -> Result<StructuredCaption, CaptionError> {
    let mut instances = instances;
    instances.sort_by(|a, b| b.0.total_cmp(&a.0));
    let caption = StructuredCaption {
        global_summary,
        background,
        camera,
        instances: instances.into_iter().map(|(_, d)| d).collect(),
        source_meta: meta,
    };
    match caption.validate() {
        Ok(()) => Ok(caption),
        Err(CaptionError::WordLimitViolation { words, limit }) => Err(CaptionError::SchemaViolation(format!(
            "global summary has {words} words, limit is {limit}"
        ))),
        Err(e) => Err(e),
    }
}
