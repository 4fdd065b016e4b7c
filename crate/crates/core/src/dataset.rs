//! Manifest curation and corpus statistics.
//!
//! A manifest is newline-delimited JSON, one [`ManifestRecord`] per line.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::flow::{estimate_global_flow, FlowConfig, FlowError};
use crate::sampling::FrameSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub path: String,
    /// Seconds.
    pub duration: f64,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    /// Path of the record's caption document, if captioned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    /// Mean flow magnitude in px/frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_intensity: Option<f64>,
    /// Instance class names, one per detected instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<Vec<String>>,
}

impl ManifestRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(format!("fps must be positive, got {}", self.fps));
        }
        if let Some(m) = self.motion_intensity {
            if !(m.is_finite() && m >= 0.0) {
                return Err(format!("motion_intensity must be non-negative, got {m}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("manifest line {line}: {reason}")]
pub struct ManifestParseError {
    pub line: usize,
    pub reason: String,
}

/// Parses JSONL, skipping blank lines. Ids must be unique.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, ManifestParseError> {
    let mut out: Vec<ManifestRecord> = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| ManifestParseError { line: i + 1, reason };
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| err(format!("{e}")))?;
        rec.validate().map_err(err)?;
        if !ids.insert(rec.id.clone()) {
            return Err(err(format!("duplicate id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// One compact JSON object per line, each line newline-terminated.
pub fn to_jsonl(records: &[ManifestRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationFilter {
    pub min_duration: f64,
    pub max_duration: f64,
    /// When set, records need a motion intensity of at least this.
    pub min_motion: Option<f64>,
    /// When set, records need at least one instance.
    pub require_instance: bool,
}

impl Default for CurationFilter {
    fn default() -> Self {
        Self {
            min_duration: 2.0,
            max_duration: 10.0,
            min_motion: None,
            require_instance: false,
        }
    }
}

impl CurationFilter {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_duration.is_finite() && self.max_duration.is_finite()) || self.min_duration > self.max_duration {
            return Err(format!(
                "duration range [{}, {}] is empty",
                self.min_duration, self.max_duration
            ));
        }
        if self.min_motion.is_some_and(|m| !m.is_finite() || m < 0.0) {
            return Err("min_motion must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Duration,
    Motion,
    Instances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reasons: Vec<RejectReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curated {
    pub kept: Vec<ManifestRecord>,
    pub rejected: Vec<Rejection>,
}

/// Every clause the record fails. Missing motion or instance data fails the
/// corresponding clause when it is active.
pub fn rejection_reasons(r: &ManifestRecord, f: &CurationFilter) -> Vec<RejectReason> {
    let mut reasons = Vec::new();
    if r.duration < f.min_duration || r.duration > f.max_duration {
        reasons.push(RejectReason::Duration);
    }
    if let Some(min) = f.min_motion {
        if r.motion_intensity.is_none_or(|m| m < min) {
            reasons.push(RejectReason::Motion);
        }
    }
    if f.require_instance && r.instances.as_ref().is_none_or(Vec::is_empty) {
        reasons.push(RejectReason::Instances);
    }
    reasons
}

/// Keeps records meeting every clause (duration bounds inclusive), in
/// input order.
pub fn curate(records: &[ManifestRecord], f: &CurationFilter) -> Curated {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for r in records {
        let reasons = rejection_reasons(r, f);
        if reasons.is_empty() {
            kept.push(r.clone());
        } else {
            rejected.push(Rejection {
                id: r.id.clone(),
                reasons,
            });
        }
    }
    Curated { kept, rejected }
}

pub const DURATION_BUCKETS: [&str; 3] = ["(0,2)", "[2,10)", "[10,inf)"];

pub fn duration_bucket(seconds: f64) -> usize {
    if seconds < 2.0 {
        0
    } else if seconds < 10.0 {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub total_duration: f64,
    /// `(label, count)` in [`DURATION_BUCKETS`] order.
    pub duration_buckets: Vec<(String, usize)>,
    pub scenes: BTreeMap<String, usize>,
    pub untagged_scenes: usize,
    pub instance_classes: BTreeMap<String, usize>,
    pub records_with_instances: usize,
}

pub fn dataset_stats(records: &[ManifestRecord]) -> DatasetStats {
    let mut buckets = [0usize; 3];
    let mut scenes = BTreeMap::new();
    let mut untagged = 0;
    let mut classes = BTreeMap::new();
    let mut with_instances = 0;
    let mut total = 0.0;
    for r in records {
        total += r.duration;
        buckets[duration_bucket(r.duration)] += 1;
        match &r.scene {
            Some(s) if !s.trim().is_empty() => *scenes.entry(s.trim().into()).or_insert(0) += 1,
            _ => untagged += 1,
        }
        if let Some(inst) = &r.instances {
            with_instances += 1;
            for c in inst {
                *classes.entry(c.trim().to_lowercase()).or_insert(0) += 1;
            }
        }
    }
    DatasetStats {
        records: records.len(),
        total_duration: total,
        duration_buckets: DURATION_BUCKETS.iter().map(|l| String::from(*l)).zip(buckets).collect(),
        scenes,
        untagged_scenes: untagged,
        instance_classes: classes,
        records_with_instances: with_instances,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MotionError {
    #[error("motion intensity needs at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Mean flow magnitude (px/frame) over consecutive frame pairs.
pub fn motion_intensity(frames: &FrameSequence, cfg: &FlowConfig) -> Result<f64, MotionError> {
    if frames.len() < 2 {
        return Err(MotionError::TooFewFrames(frames.len()));
    }
    let mut sum = 0.0;
    for pair in frames.frames().windows(2) {
        sum += estimate_global_flow(&pair[0].image, &pair[1].image, cfg)?.mean_magnitude();
    }
    Ok(sum / (frames.len() - 1) as f64)
}
