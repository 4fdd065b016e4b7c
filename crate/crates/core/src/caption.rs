//! The instance-aware structured caption: schema, validation, parsing and
//! rendering.
//!
//! The canonical document is UTF-8 JSON:
//!
//! ```json
//! {
//!   "global_summary": "...",
//!   "background": "...",
//!   "camera": { "basic_movement": "pan_left", "qualitative": "...", "shot_notes": null },
//!   "instances": [
//!     { "id": "i0", "class_name": "person", "appearance": "...",
//!       "actions_motion": "...", "position": "...",
//!       "bbox_track": [[frame_index, x0, y0, x1, y1], ...] }
//!   ],
//!   "source_meta": { "duration": 5.0, "frame_count": 150, "fps": 30.0, "timestamps": [...] }
//! }
//! ```
//!
//! Unknown keys are rejected. `shot_notes`, `bbox_track` and `source_meta`
//! may be `null` or omitted.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::camera::CameraMovement;
use crate::sampling::TemporalMetadata;
use crate::text::{count_words, GLOBAL_SUMMARY_WORD_LIMIT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaptionError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("global summary has {words} words, limit is {limit}")]
    WordLimitViolation { words: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraAnnotation {
    pub basic_movement: CameraMovement,
    pub qualitative: String,
    #[serde(default)]
    pub shot_notes: Option<String>,
}

/// One `(frame_index, x0, y0, x1, y1)` box sample; serialized as a 5-array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BboxSample(pub u32, pub u32, pub u32, pub u32, pub u32);

impl BboxSample {
    pub fn frame_index(&self) -> u32 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDescription {
    pub id: String,
    pub class_name: String,
    pub appearance: String,
    pub actions_motion: String,
    /// May be empty when the instance fills the frame.
    pub position: String,
    #[serde(default)]
    pub bbox_track: Option<Vec<BboxSample>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredCaption {
    pub global_summary: String,
    pub background: String,
    pub camera: CameraAnnotation,
    pub instances: Vec<InstanceDescription>,
    #[serde(default)]
    pub source_meta: Option<TemporalMetadata>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderStyle {
    /// The canonical JSON document.
    Structured,
    /// Deterministic prose used as T2V training text.
    FlatTrainingText,
}

fn schema(msg: impl Into<String>) -> CaptionError {
    CaptionError::SchemaViolation(msg.into())
}

impl InstanceDescription {
    pub fn validate(&self) -> Result<(), CaptionError> {
        if self.id.trim().is_empty() {
            return Err(schema("instance id is empty"));
        }
        for (name, value) in [
            ("class_name", &self.class_name),
            ("appearance", &self.appearance),
            ("actions_motion", &self.actions_motion),
        ] {
            if value.trim().is_empty() {
                return Err(schema(alloc::format!(
                    "instance {}: {name} is empty",
                    self.id
                )));
            }
        }
        if let Some(track) = &self.bbox_track {
            if track.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(schema(alloc::format!(
                    "instance {}: bbox_track frame indices must increase",
                    self.id
                )));
            }
            if track.iter().any(|b| b.1 >= b.3 || b.2 >= b.4) {
                return Err(schema(alloc::format!(
                    "instance {}: bbox_track contains an empty box",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

impl StructuredCaption {
    pub fn validate(&self) -> Result<(), CaptionError> {
        if self.global_summary.trim().is_empty() {
            return Err(schema("global_summary is empty"));
        }
        let words = count_words(&self.global_summary);
        if words > GLOBAL_SUMMARY_WORD_LIMIT {
            return Err(CaptionError::WordLimitViolation {
                words,
                limit: GLOBAL_SUMMARY_WORD_LIMIT,
            });
        }
        let mut seen = BTreeSet::new();
        for inst in &self.instances {
            inst.validate()?;
            if !seen.insert(inst.id.as_str()) {
                return Err(schema(alloc::format!("duplicate instance id {:?}", inst.id)));
            }
        }
        if let Some(meta) = &self.source_meta {
            meta.validate().map_err(schema)?;
        }
        Ok(())
    }

    pub fn instance(&self, id: &str) -> Option<&InstanceDescription> {
        self.instances.iter().find(|i| i.id == id)
    }
}

/// Parses and validates a caption document.
pub fn parse_caption(doc: &str) -> Result<StructuredCaption, CaptionError> {
    let caption: StructuredCaption =
        serde_json::from_str(doc).map_err(|e| schema(alloc::format!("{e}")))?;
    caption.validate()?;
    Ok(caption)
}

/// Renders a caption. The structured form is pretty-printed JSON with a
/// trailing newline; the flat form is a single line ordered global summary,
/// camera, background, then instances in list order.
pub fn render_caption(c: &StructuredCaption, style: RenderStyle) -> String {
    match style {
        RenderStyle::Structured => {
            let mut s = serde_json::to_string_pretty(c).expect("caption serializes");
            s.push('\n');
            s
        }
        RenderStyle::FlatTrainingText => render_flat(c),
    }
}

fn sentence(text: &str) -> String {
    let t = text.trim();
    let mut s = String::from(t);
    if !t.is_empty() && !t.ends_with(['.', '!', '?']) {
        s.push('.');
    }
    s
}

fn render_flat(c: &StructuredCaption) -> String {
    let mut parts: Vec<String> = Vec::new();
    parts.push(sentence(&c.global_summary));

    let mut camera = String::from("Camera:");
    if c.camera.basic_movement != CameraMovement::Unknown {
        camera.push(' ');
        camera.push_str(c.camera.basic_movement.phrase());
        if !c.camera.qualitative.trim().is_empty() {
            camera.push(',');
        }
    }
    if !c.camera.qualitative.trim().is_empty() {
        camera.push(' ');
        camera.push_str(c.camera.qualitative.trim());
    }
    if camera != "Camera:" {
        parts.push(sentence(&camera));
    }
    if let Some(notes) = c.camera.shot_notes.as_deref().filter(|n| !n.trim().is_empty()) {
        parts.push(sentence(notes));
    }
    if !c.background.trim().is_empty() {
        parts.push(sentence(&alloc::format!("Background: {}", c.background.trim())));
    }
    for inst in &c.instances {
        parts.push(alloc::format!("[{}]", inst.class_name.trim()));
        parts.push(sentence(&alloc::format!("Appearance: {}", inst.appearance.trim())));
        parts.push(sentence(&alloc::format!(
            "Actions and motion: {}",
            inst.actions_motion.trim()
        )));
        if !inst.position.trim().is_empty() {
            parts.push(sentence(&alloc::format!("Position: {}", inst.position.trim())));
        }
    }
    parts.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn person() -> InstanceDescription {
        InstanceDescription {
            id: "i0".into(),
            class_name: "person".into(),
            appearance: "A young woman in a grey sweater and round glasses.".into(),
            actions_motion: "She walks slowly toward the camera.".into(),
            position: "Center of the frame, midground.".into(),
            bbox_track: Some(vec![BboxSample(0, 10, 20, 50, 90), BboxSample(7, 12, 20, 52, 90)]),
        }
    }

    fn caption(instances: Vec<InstanceDescription>) -> StructuredCaption {
        StructuredCaption {
            global_summary: "A woman walks along a quiet street at dusk.".into(),
            background: "A narrow cobblestone street lined with shops.".into(),
            camera: CameraAnnotation {
                basic_movement: CameraMovement::PanLeft,
                qualitative: "slow, steady".into(),
                shot_notes: None,
            },
            instances,
            source_meta: None,
        }
    }

    #[test]
    fn minimal_document_with_no_instances() {
        let doc = r#"{"global_summary":"A quiet lake.","background":"Still water.",
            "camera":{"basic_movement":"static","qualitative":""},"instances":[]}"#;
        let c = parse_caption(doc).unwrap();
        assert!(c.instances.is_empty());
        assert_eq!(c.camera.basic_movement, CameraMovement::Static);
        assert_eq!(c.source_meta, None);
    }

    #[test]
    fn person_instance_round_trips() {
        let c = caption(vec![person()]);
        let doc = render_caption(&c, RenderStyle::Structured);
        let back = parse_caption(&doc).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.instances[0], person());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut second = person();
        second.class_name = "dog".into();
        let c = caption(vec![person(), second]);
        let doc = render_caption(&c, RenderStyle::Structured);
        assert!(matches!(parse_caption(&doc), Err(CaptionError::SchemaViolation(_))));
    }

    #[test]
    fn long_summary_is_a_word_limit_violation() {
        let mut c = caption(vec![]);
        c.global_summary = "word ".repeat(21);
        let doc = render_caption(&c, RenderStyle::Structured);
        assert_eq!(
            parse_caption(&doc),
            Err(CaptionError::WordLimitViolation { words: 21, limit: 20 })
        );
    }

    #[test]
    fn missing_and_unknown_keys_are_schema_violations() {
        let missing = r#"{"global_summary":"x","camera":{"basic_movement":"static","qualitative":""},"instances":[]}"#;
        assert!(matches!(parse_caption(missing), Err(CaptionError::SchemaViolation(_))));
        let extra = r#"{"global_summary":"x","background":"","camera":{"basic_movement":"static","qualitative":""},"instances":[],"mood":"calm"}"#;
        assert!(matches!(parse_caption(extra), Err(CaptionError::SchemaViolation(_))));
        let bad_label = r#"{"global_summary":"x","background":"","camera":{"basic_movement":"dolly","qualitative":""},"instances":[]}"#;
        assert!(matches!(parse_caption(bad_label), Err(CaptionError::SchemaViolation(_))));
    }

    #[test]
    fn empty_position_allowed_but_not_appearance() {
        let mut inst = person();
        inst.position = String::new();
        assert!(inst.validate().is_ok());
        inst.appearance = " ".into();
        assert!(inst.validate().is_err());
    }

    #[test]
    fn flat_text_without_instances() {
        let c = caption(vec![]);
        let flat = render_caption(&c, RenderStyle::FlatTrainingText);
        assert_eq!(
            flat,
            "A woman walks along a quiet street at dusk. Camera: pan left, slow, steady. \
             Background: A narrow cobblestone street lined with shops."
        );
    }

    #[test]
    fn flat_text_orders_instances() {
        let mut dog = person();
        dog.id = "i1".into();
        dog.class_name = "dog".into();
        dog.appearance = "A small brown terrier with a red collar.".into();
        let c = caption(vec![person(), dog]);
        let flat = render_caption(&c, RenderStyle::FlatTrainingText);
        let first = flat.find("grey sweater").unwrap();
        let second = flat.find("brown terrier").unwrap();
        let bg = flat.find("Background:").unwrap();
        let cam = flat.find("Camera:").unwrap();
        assert!(cam < bg && bg < first && first < second);
    }

    #[test]
    fn field_order_is_canonical() {
        let doc = render_caption(&caption(vec![person()]), RenderStyle::Structured);
        let keys = ["global_summary", "background", "camera", "instances", "source_meta"];
        let pos: Vec<usize> = keys.iter().map(|k| doc.find(&alloc::format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}
