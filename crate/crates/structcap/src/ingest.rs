//! Frame providers: where decoded frames come from.
//!
//! Two providers ship. [`ImageDirProvider`] reads a directory of
//! `%06d.png` files numbered from zero, with an optional `meta.json`
//! carrying `fps` and `duration`. [`CommandProvider`] shells out to an
//! external decoder, one process per call.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use structcap_core::image::RgbImage;
use structcap_core::sampling::{uniform_indices, Frame, FrameSequence, SamplingError, TemporalMetadata};

use crate::pngio::{frame_file_name, read_png};

/// Name of the sidecar file an image directory may carry.
pub const META_FILE: &str = "meta.json";

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("{path}: unreadable source: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("{0}: source has no frames")]
    NoFrames(String),
    #[error("{path}: frame {index}: {reason}")]
    BadFrame { path: String, index: u32, reason: String },
    #[error("{path}: decoder command failed: {reason}")]
    Command { path: String, reason: String },
    #[error("{path}: {source}")]
    Sampling {
        path: String,
        #[source]
        source: SamplingError,
    },
}

/// What a provider learns about a source without decoding pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub frame_count: u32,
    pub fps: f64,
    /// Container duration, when the source records one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

pub trait FrameProvider: Send + Sync {
    fn probe(&self, source: &Path) -> Result<SourceInfo, DecodeError>;

    /// Decodes the frames at `indices`, in the given order.
    fn read_frames(&self, source: &Path, indices: &[u32]) -> Result<Vec<RgbImage>, DecodeError>;
}

fn unreadable(path: &Path, reason: impl ToString) -> DecodeError {
    DecodeError::Unreadable {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct DirMeta {
    fps: Option<f64>,
    duration: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ImageDirProvider {
    /// Used when the directory has no `meta.json` or it lacks `fps`.
    pub default_fps: Option<f64>,
}

impl ImageDirProvider {
    pub fn new(default_fps: Option<f64>) -> Self {
        Self { default_fps }
    }

    fn frame_numbers(dir: &Path) -> Result<BTreeSet<u32>, DecodeError> {
        let entries = std::fs::read_dir(dir).map_err(|e| unreadable(dir, e))?;
        let mut found = BTreeSet::new();
        for entry in entries {
            let name = entry.map_err(|e| unreadable(dir, e))?.file_name();
            let Some(name) = name.to_str() else { continue };
            let Some(stem) = name.strip_suffix(".png") else { continue };
            if stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit()) {
                found.insert(stem.parse().expect("six digits"));
            }
        }
        Ok(found)
    }
}

impl FrameProvider for ImageDirProvider {
    fn probe(&self, source: &Path) -> Result<SourceInfo, DecodeError> {
        if !source.is_dir() {
            return Err(unreadable(source, "not a frame directory"));
        }
        let numbers = Self::frame_numbers(source)?;
        let frame_count = numbers.len() as u32;
        if frame_count == 0 {
            return Err(DecodeError::NoFrames(source.display().to_string()));
        }
        if numbers.iter().next_back() != Some(&(frame_count - 1)) {
            return Err(unreadable(source, "frame files are not numbered contiguously from 000000"));
        }
        let meta_path = source.join(META_FILE);
        let meta: DirMeta = if meta_path.exists() {
            let text = std::fs::read_to_string(&meta_path).map_err(|e| unreadable(&meta_path, e))?;
            serde_json::from_str(&text).map_err(|e| unreadable(&meta_path, e))?
        } else {
            DirMeta::default()
        };
        let fps = meta
            .fps
            .or(self.default_fps)
            .ok_or_else(|| unreadable(source, "no fps in meta.json and no default configured"))?;
        Ok(SourceInfo {
            frame_count,
            fps,
            duration: meta.duration,
        })
    }

    fn read_frames(&self, source: &Path, indices: &[u32]) -> Result<Vec<RgbImage>, DecodeError> {
        indices
            .iter()
            .map(|&i| {
                read_png(&source.join(frame_file_name(i))).map_err(|e| DecodeError::BadFrame {
                    path: source.display().to_string(),
                    index: i,
                    reason: e.to_string(),
                })
            })
            .collect()
    }
}

/// Runs an external decoder.
///
/// `probe` is an argv template whose process prints a [`SourceInfo`] JSON
/// object on stdout. `decode` is an argv template that must write the
/// requested frames as `{output}/%06d.png`, named by source frame index.
/// Placeholders: `{input}` (source path), `{output}` (scratch directory),
/// `{indices}` (comma-separated frame indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandProvider {
    pub probe: Vec<String>,
    pub decode: Vec<String>,
    /// Parent for per-call scratch directories; the system temp dir if unset.
    #[serde(default)]
    pub scratch: Option<PathBuf>,
}

static SCRATCH_SEQ: AtomicU64 = AtomicU64::new(0);

impl CommandProvider {
    fn expand(template: &[String], input: &Path, output: &Path, indices: &[u32]) -> Vec<String> {
        let list = indices.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        template
            .iter()
            .map(|a| {
                a.replace("{input}", &input.display().to_string())
                    .replace("{output}", &output.display().to_string())
                    .replace("{indices}", &list)
            })
            .collect()
    }

    fn run(&self, argv: &[String], source: &Path) -> Result<Vec<u8>, DecodeError> {
        let fail = |reason: String| DecodeError::Command {
            path: source.display().to_string(),
            reason,
        };
        let (program, args) = argv.split_first().ok_or_else(|| fail("empty command template".into()))?;
        let out = Command::new(program)
            .args(args)
            .output()
            .map_err(|e| fail(format!("{program}: {e}")))?;
        if !out.status.success() {
            return Err(fail(format!(
                "{program} exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(out.stdout)
    }
}

impl FrameProvider for CommandProvider {
    fn probe(&self, source: &Path) -> Result<SourceInfo, DecodeError> {
        let argv = Self::expand(&self.probe, source, Path::new(""), &[]);
        let stdout = self.run(&argv, source)?;
        let info: SourceInfo = serde_json::from_slice(&stdout).map_err(|e| unreadable(source, format!("probe output: {e}")))?;
        if info.frame_count == 0 {
            return Err(DecodeError::NoFrames(source.display().to_string()));
        }
        Ok(info)
    }

    fn read_frames(&self, source: &Path, indices: &[u32]) -> Result<Vec<RgbImage>, DecodeError> {
        let root = self.scratch.clone().unwrap_or_else(std::env::temp_dir);
        let dir = root.join(format!(
            "structcap-decode-{}-{}",
            std::process::id(),
            SCRATCH_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&dir).map_err(|e| unreadable(&dir, e))?;
        let result = self
            .run(&Self::expand(&self.decode, source, &dir, indices), source)
            .and_then(|_| ImageDirProvider::default().read_frames(&dir, indices));
        let _ = std::fs::remove_dir_all(&dir);
        result
    }
}

/// Temporal metadata for `n` uniformly sampled frames of `source`.
pub fn extract_metadata(provider: &dyn FrameProvider, source: &Path, n: usize) -> Result<TemporalMetadata, DecodeError> {
    let info = provider.probe(source)?;
    metadata_for(&info, source, n).map(|(_, m)| m)
}

fn metadata_for(info: &SourceInfo, source: &Path, n: usize) -> Result<(Vec<u32>, TemporalMetadata), DecodeError> {
    let wrap = |source_err| DecodeError::Sampling {
        path: source.display().to_string(),
        source: source_err,
    };
    let indices = uniform_indices(info.frame_count, n).map_err(wrap)?;
    let meta = TemporalMetadata::new(info.frame_count, info.fps, info.duration, &indices).map_err(wrap)?;
    Ok((indices, meta))
}

/// Decodes `n` uniformly sampled frames into a sequence named `frames`.
pub fn sample_frames(
    provider: &dyn FrameProvider,
    source: &Path,
    n: usize,
) -> Result<(FrameSequence, TemporalMetadata), DecodeError> {
    let info = provider.probe(source)?;
    let (indices, meta) = metadata_for(&info, source, n)?;
    let images = provider.read_frames(source, &indices)?;
    let frames = indices
        .iter()
        .zip(images)
        .zip(&meta.timestamps)
        .map(|((&index, image), &timestamp)| Frame { index, image, timestamp })
        .collect();
    let seq = FrameSequence::new("frames", frames).map_err(|source_err| DecodeError::Sampling {
        path: source.display().to_string(),
        source: source_err,
    })?;
    Ok((seq, meta))
}

/// Writes frames as an image directory that [`ImageDirProvider`] reads back.
pub fn write_image_dir(dir: &Path, frames: &[RgbImage], fps: f64) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        crate::pngio::write_png(&dir.join(frame_file_name(i as u32)), f)?;
    }
    let meta = serde_json::json!({ "fps": fps });
    std::fs::write(dir.join(META_FILE), serde_json::to_vec_pretty(&meta).expect("json"))
}
