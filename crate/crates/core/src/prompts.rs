//! Editable prompt packs.
//!
//! A pack is a set of plain text files addressed by relative path (see
//! [`PACK_FILES`]) plus any number of enhancer few-shot examples. Leading
//! `#` lines in a file are a header and are stripped on load. The shipped
//! pack is compiled in; [`PromptPack::load`] accepts overrides.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use sha2::{Digest, Sha256};

use crate::camera::CameraMovement;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt pack is missing {0}")]
    Missing(&'static str),
    #[error("few-shot example {name}: {reason}")]
    BadExample { name: String, reason: String },
}

/// Every file a pack must provide, relative to the pack root.
pub const PACK_FILES: [&str; 18] = [
    "system_part1.txt",
    "system_part2.txt",
    "system_part3.txt",
    "global.txt",
    "global_correction.txt",
    "background.txt",
    "camera.txt",
    "instance.txt",
    "format_correction.txt",
    "enhancer/system.txt",
    "enhancer/stage_a.txt",
    "enhancer/stage_b_segment.txt",
    "enhancer/stage_b_scene.txt",
    "enhancer/stage_b_instance.txt",
    "inseval/judge_system.txt",
    "inseval/judge.txt",
    "inseval/judge_correction.txt",
    "class_hints.json",
];

macro_rules! shipped {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../../../prompts/", $path)))),*]
    };
}

const SHIPPED: &[(&str, &str)] = shipped!(
    "system_part1.txt",
    "system_part2.txt",
    "system_part3.txt",
    "global.txt",
    "global_correction.txt",
    "background.txt",
    "camera.txt",
    "instance.txt",
    "format_correction.txt",
    "enhancer/system.txt",
    "enhancer/stage_a.txt",
    "enhancer/stage_b_segment.txt",
    "enhancer/stage_b_scene.txt",
    "enhancer/stage_b_instance.txt",
    "inseval/judge_system.txt",
    "inseval/judge.txt",
    "inseval/judge_correction.txt",
    "class_hints.json",
);

const SHIPPED_EXAMPLES: &[(&str, &str)] = shipped!("enhancer/examples/01_lion.txt", "enhancer/examples/02_bag.txt");

/// Shipped file contents by pack-relative path.
pub fn shipped_file(path: &str) -> Option<&'static str> {
    SHIPPED
        .iter()
        .chain(SHIPPED_EXAMPLES)
        .find(|(p, _)| *p == path)
        .map(|(_, c)| *c)
}

pub fn shipped_examples() -> impl Iterator<Item = (&'static str, &'static str)> {
    SHIPPED_EXAMPLES.iter().copied()
}

/// Drops the leading block of `#` comment lines and surrounding blank lines.
/// `###` lines are section markers, not comments.
pub fn strip_header(text: &str) -> String {
    let mut lines = text.lines().peekable();
    while lines.peek().is_some_and(|l| l.starts_with('#') && !l.starts_with("###")) {
        lines.next();
    }
    lines.collect::<Vec<_>>().join("\n").trim().to_string()
}

/// A worked enhancer example, parsed from `### SECTION` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExample {
    pub name: String,
    pub short: String,
    pub dense: String,
    /// Raw `INSTANCES` block: one dash-separated `mention`, `class` pair per line, or `NONE`.
    pub instances: String,
    /// Raw tagged `GLOBAL/BACKGROUND/CAMERA` block.
    pub scene: String,
    /// `(mention, raw tagged APPEARANCE/ACTIONS_MOTION/POSITION block)`.
    pub instance_blocks: Vec<(String, String)>,
}

impl FewShotExample {
    pub fn parse(name: &str, text: &str) -> Result<Self, PromptError> {
        let bad = |reason: &str| PromptError::BadExample {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let mut sections: Vec<(String, String)> = Vec::new();
        for line in strip_header(text).lines() {
            if let Some(head) = line.strip_prefix("###") {
                sections.push((head.trim().to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                if !body.is_empty() {
                    body.push('\n');
                }
                body.push_str(line);
            } else if !line.trim().is_empty() {
                return Err(bad("text before the first ### section"));
            }
        }
        let take = |key: &str| {
            sections
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.trim().to_string())
        };
        let instance_blocks = sections
            .iter()
            .filter_map(|(k, v)| {
                k.strip_prefix("INSTANCE ")
                    .map(|m| (m.trim().to_string(), v.trim().to_string()))
            })
            .collect();
        Ok(Self {
            name: name.to_string(),
            short: take("SHORT").ok_or_else(|| bad("missing SHORT"))?,
            dense: take("DENSE").ok_or_else(|| bad("missing DENSE"))?,
            instances: take("INSTANCES").ok_or_else(|| bad("missing INSTANCES"))?,
            scene: take("SCENE").ok_or_else(|| bad("missing SCENE"))?,
            instance_blocks,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptPack {
    pub system: String,
    pub global: String,
    pub global_correction: String,
    pub background: String,
    pub camera: String,
    pub instance: String,
    pub format_correction: String,
    pub enhancer_system: String,
    pub stage_a: String,
    pub stage_b_segment: String,
    pub stage_b_scene: String,
    pub stage_b_instance: String,
    pub judge_system: String,
    pub judge: String,
    pub judge_correction: String,
    pub examples: Vec<FewShotExample>,
    hash: String,
}

impl Default for PromptPack {
    fn default() -> Self {
        Self::load(|p| shipped_file(p).map(String::from), shipped_examples().map(|(n, t)| (n.to_string(), t.to_string())).collect())
            .expect("shipped prompt pack is complete")
    }
}

impl PromptPack {
    /// Builds a pack from a file lookup (pack-relative path → contents) and
    /// the example files in the order they should be shown.
    pub fn load(
        mut file: impl FnMut(&str) -> Option<String>,
        examples: Vec<(String, String)>,
    ) -> Result<Self, PromptError> {
        let mut hasher = Sha256::new();
        let mut raw: Vec<String> = Vec::with_capacity(PACK_FILES.len());
        for name in PACK_FILES {
            let text = file(name).ok_or(PromptError::Missing(name))?;
            hasher.update(name.as_bytes());
            hasher.update([0]);
            hasher.update(text.as_bytes());
            hasher.update([0]);
            raw.push(strip_header(&text));
        }
        let mut parsed = Vec::with_capacity(examples.len());
        for (name, text) in &examples {
            hasher.update(name.as_bytes());
            hasher.update([0]);
            hasher.update(text.as_bytes());
            hasher.update([0]);
            parsed.push(FewShotExample::parse(name, text)?);
        }
        let hash = hex(&hasher.finalize());
        let mut it = raw.into_iter();
        let mut next = || it.next().expect("one entry per pack file");
        let system = [next(), next(), next()].join("\n\n");
        Ok(Self {
            system,
            global: next(),
            global_correction: next(),
            background: next(),
            camera: next(),
            instance: next(),
            format_correction: next(),
            enhancer_system: next(),
            stage_a: next(),
            stage_b_segment: next(),
            stage_b_scene: next(),
            stage_b_instance: next(),
            judge_system: next(),
            judge: next(),
            judge_correction: next(),
            examples: parsed,
            hash,
        })
    }

    /// SHA-256 over every file name and its raw contents, hex encoded.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// SHA-256 hex digest of arbitrary text.
pub fn sha256_hex(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

/// `static, pan_left, ...` (every label except `unknown`).
pub fn label_list() -> String {
    CameraMovement::ALL
        .iter()
        .filter(|m| **m != CameraMovement::Unknown)
        .map(|m| m.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}
