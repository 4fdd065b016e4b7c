//! Captioning one video to disk, and batches of them with resume.
//!
//! Output tree for a record `<id>` under the output directory:
//!
//! ```text
//! <id>/caption.json          canonical caption document
//! <id>/caption.txt           flat training text
//! <id>/amc_result.json       detections, kept instances, camera label
//! <id>/instance_<k>/%06d.png composited instance clips
//! <id>/transcripts.jsonl     every backend exchange, one per line
//! <id>/provenance.json       seed, sampling, prompt pack hash
//! run_ledger.jsonl           batch outcomes with timestamps
//! ```
//!
//! A record is written to a hidden staging directory and renamed into
//! place, so a failing or interrupted record never leaves a partial tree.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use structcap_core::amc::{AmcError, AmcResult, Detection, ModelAdapter, ScriptedAdapter};
use structcap_core::camera::{CameraMotionLabel, MotionComponents};
use structcap_core::caption::{parse_caption, render_caption, RenderStyle, StructuredCaption};
use structcap_core::chat::{ChatBackend, MockChat, MockScript};
use structcap_core::dataset::ManifestRecord;
use structcap_core::image::Rect;
use structcap_core::orchestrator::{Orchestrator, OrchestratorError};
use structcap_core::pipeline::{caption_frames, PipelineError, PipelineStage};
use structcap_core::sampling::TemporalMetadata;

use crate::config::{ProviderKind, RunConfig};
use crate::http::{HttpAdapter, HttpChatBackend};
use crate::ingest::{sample_frames, FrameProvider, ImageDirProvider};
use crate::packs::Assets;
use crate::pngio::{frame_file_name, write_png};
use crate::ratelimit::{RateLimited, TokenBucket};
use crate::services::StubAdapter;

pub const CAPTION_FILE: &str = "caption.json";
pub const LEDGER_FILE: &str = "run_ledger.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Input,
    Backend,
    Output,
}

impl ErrorKind {
    /// Process exit status for a run that failed this way.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Input => 3,
            ErrorKind::Backend => 4,
            ErrorKind::Output => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct RunError {
    pub stage: PipelineStage,
    pub kind: ErrorKind,
    pub message: String,
}

impl RunError {
    pub fn new(stage: PipelineStage, kind: ErrorKind, message: impl ToString) -> Self {
        Self {
            stage,
            kind,
            message: message.to_string(),
        }
    }
}

impl From<PipelineError> for RunError {
    fn from(e: PipelineError) -> Self {
        let kind = match &e {
            _ if e.is_backend() => ErrorKind::Backend,
            PipelineError::Orchestrator {
                source: OrchestratorError::Precondition(_),
                ..
            } => ErrorKind::Input,
            PipelineError::Orchestrator { .. } | PipelineError::Assemble(_) => ErrorKind::Backend,
            PipelineError::Amc(AmcError::Adapter(_)) => ErrorKind::Backend,
            PipelineError::Amc(_) => ErrorKind::Input,
        };
        let message = match &e {
            PipelineError::Orchestrator { source, .. } => source.to_string(),
            other => other.to_string(),
        };
        Self::new(e.stage(), kind, message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptInstance {
    pub instance_id: u32,
    pub class_name: String,
    pub confidence: f64,
    pub clip_dir: String,
    /// Tight mask box per sampled frame: `[frame_index, x0, y0, x1, y1]`,
    /// omitted where the mask is empty.
    pub bboxes: Vec<(u32, Rect)>,
}

pub type DynAdapter = Box<dyn ModelAdapter + Send>;
pub type DynBackend = Box<dyn ChatBackend + Send>;

fn config_err(e: impl ToString) -> RunError {
    RunError::new(PipelineStage::Ingest, ErrorKind::Config, e)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{what} {}: {e}", path.display())))
}

pub fn provider(cfg: &RunConfig) -> Box<dyn FrameProvider> {
    match cfg.input.provider {
        ProviderKind::ImageDir => Box::new(ImageDirProvider::new(cfg.input.default_fps)),
        ProviderKind::Command => Box::new(cfg.input.command_provider()),
    }
}

/// `mock` is the built-in stub detector, `scripted` replays a
/// [`ScriptedAdapter`] JSON file, anything else is an adapter service URL.
pub fn build_adapter(cfg: &RunConfig) -> Result<DynAdapter, RunError> {
    match cfg.adapter.endpoint.as_str() {
        "mock" => Ok(Box::new(StubAdapter::default())),
        "scripted" => {
            let path = cfg.adapter.script.as_deref().ok_or_else(|| config_err("adapter.script is not set"))?;
            Ok(Box::new(read_json::<ScriptedAdapter>(path, "adapter script")?))
        }
        url => Ok(Box::new(HttpAdapter::with_timeout(
            url,
            cfg.adapter.token.clone(),
            Duration::from_secs(cfg.adapter.timeout_secs),
        ))),
    }
}

/// Builds fresh chat backends for one run. A mock script is read once; every
/// backend replays it from the start. All backends share one rate limit.
pub struct BackendFactory {
    endpoint: String,
    token: Option<String>,
    timeout: Duration,
    script: Option<MockScript>,
    bucket: Option<Arc<Mutex<TokenBucket>>>,
}

impl BackendFactory {
    pub fn new(cfg: &RunConfig) -> Result<Self, RunError> {
        let b = &cfg.backend;
        let script = match b.endpoint.as_str() {
            "mock" => {
                let path = b.script.as_deref().ok_or_else(|| config_err("backend.script is not set"))?;
                Some(read_json::<MockScript>(path, "chat script")?)
            }
            _ => None,
        };
        let bucket = (b.rate_per_second > 0.0)
            .then(|| Arc::new(Mutex::new(TokenBucket::new(b.burst.max(1), b.rate_per_second, Instant::now()))));
        Ok(Self {
            endpoint: b.endpoint.clone(),
            token: b.token.clone(),
            timeout: Duration::from_secs(b.timeout_secs),
            script,
            bucket,
        })
    }

    pub fn build(&self) -> DynBackend {
        let inner: DynBackend = match &self.script {
            Some(script) => Box::new(MockChat::new(script.clone())),
            None => Box::new(HttpChatBackend::with_timeout(&self.endpoint, self.token.clone(), self.timeout)),
        };
        match &self.bucket {
            Some(bucket) => Box::new(RateLimited::new(inner, bucket.clone())),
            None => inner,
        }
    }
}

/// Contents of `amc_result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmcReport {
    pub seed: u64,
    pub visual_prompt: String,
    pub sigma: f64,
    pub detections: Vec<Detection>,
    pub instances: Vec<KeptInstance>,
    pub camera: CameraMotionLabel,
    pub motion: Option<MotionComponents>,
    pub flow_magnitudes: Vec<f64>,
}

impl AmcReport {
    pub fn new(amc: &AmcResult, cfg: &RunConfig) -> Self {
        Self {
            seed: cfg.seed,
            visual_prompt: cfg.amc.visual_prompt.as_str().to_string(),
            sigma: cfg.amc.sigma,
            detections: amc.detections.clone(),
            instances: amc
                .assets
                .iter()
                .map(|a| KeptInstance {
                    instance_id: a.instance_id,
                    class_name: a.class_name.clone(),
                    confidence: a.confidence,
                    clip_dir: a.blurred_clip.clip().to_string(),
                    bboxes: a
                        .blurred_clip
                        .frames()
                        .iter()
                        .zip(&a.track.bboxes)
                        .filter_map(|(f, b)| b.map(|b| (f.index, b)))
                        .collect(),
                })
                .collect(),
            camera: amc.camera,
            motion: amc.motion,
            flow_magnitudes: amc.flow_magnitudes.clone(),
        }
    }
}

/// Contents of `provenance.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub id: String,
    pub source: String,
    pub seed: u64,
    pub samples: usize,
    pub prompt_pack_sha256: String,
    pub model: String,
    pub metadata: TemporalMetadata,
    /// `(operation, flag)` pairs raised while captioning.
    pub flags: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionOutcome {
    pub caption: StructuredCaption,
    pub dir: PathBuf,
    pub backend_calls: usize,
}

fn out_err(e: impl ToString) -> RunError {
    RunError::new(PipelineStage::Output, ErrorKind::Output, e)
}

fn json_pretty(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("output serializes");
    s.push(b'\n');
    s
}

/// Rejects ids that would escape the output directory.
pub fn check_id(id: &str) -> Result<(), RunError> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(RunError::new(
            PipelineStage::Ingest,
            ErrorKind::Input,
            format!("record id {id:?} is not a safe directory name"),
        ))
    }
}

/// Samples, captions and writes one video under `cfg.output_dir/<id>`.
#[allow(clippy::too_many_arguments)]
pub fn caption_video<A, B>(
    source: &Path,
    id: &str,
    cfg: &RunConfig,
    assets: &Assets,
    provider: &dyn FrameProvider,
    adapter: &mut A,
    backend: B,
) -> Result<CaptionOutcome, RunError>
where
    A: ModelAdapter + ?Sized,
    B: ChatBackend,
{
    check_id(id)?;
    let (frames, meta) = sample_frames(provider, source, cfg.samples)
        .map_err(|e| RunError::new(PipelineStage::Ingest, ErrorKind::Input, e))?;
    let mut orchestrator = Orchestrator::new(
        backend,
        assets.pack.clone(),
        assets.hints.clone(),
        assets.lexicon.clone(),
        cfg.orchestrator_config(),
    );
    let run = caption_frames(&frames, Some(&meta), adapter, &mut orchestrator, &cfg.amc_config())?;

    std::fs::create_dir_all(&cfg.output_dir).map_err(out_err)?;
    let staging = cfg.output_dir.join(format!(".{id}.partial"));
    let _ = std::fs::remove_dir_all(&staging);
    std::fs::create_dir_all(&staging).map_err(out_err)?;
    let write = |name: &str, bytes: &[u8]| std::fs::write(staging.join(name), bytes).map_err(out_err);

    for asset in &run.amc.assets {
        let dir = staging.join(asset.blurred_clip.clip());
        std::fs::create_dir_all(&dir).map_err(out_err)?;
        for f in asset.blurred_clip.frames() {
            write_png(&dir.join(frame_file_name(f.index)), &f.image).map_err(out_err)?;
        }
    }
    write("amc_result.json", &json_pretty(&AmcReport::new(&run.amc, cfg)))?;
    let mut transcript = Vec::new();
    for r in &run.records {
        serde_json::to_writer(&mut transcript, r).map_err(out_err)?;
        transcript.push(b'\n');
    }
    write("transcripts.jsonl", &transcript)?;
    let provenance = Provenance {
        id: id.to_string(),
        source: source.display().to_string(),
        seed: cfg.seed,
        samples: cfg.samples,
        prompt_pack_sha256: assets.pack.hash().to_string(),
        model: cfg.backend.model.clone(),
        metadata: meta,
        flags: run.flags.clone(),
    };
    write("provenance.json", &json_pretty(&provenance))?;
    let mut flat = render_caption(&run.caption, RenderStyle::FlatTrainingText);
    flat.push('\n');
    write("caption.txt", flat.as_bytes())?;
    // Written last: its presence marks the record complete.
    write(CAPTION_FILE, render_caption(&run.caption, RenderStyle::Structured).as_bytes())?;

    let dir = cfg.output_dir.join(id);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(out_err)?;
    }
    std::fs::rename(&staging, &dir).map_err(out_err)?;
    Ok(CaptionOutcome {
        caption: run.caption,
        dir,
        backend_calls: run.records.len(),
    })
}

/// True when `<out>/<id>/caption.json` exists and validates.
pub fn is_complete(output_dir: &Path, id: &str) -> bool {
    std::fs::read_to_string(output_dir.join(id).join(CAPTION_FILE))
        .ok()
        .is_some_and(|doc| parse_caption(&doc).is_ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub id: String,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<PipelineStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ErrorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub started_unix: u64,
    pub finished_unix: u64,
    pub ok: usize,
    pub failed: usize,
    pub skipped: usize,
    /// In manifest order.
    pub records: Vec<RecordOutcome>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Resolves a manifest path against the manifest's directory.
pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Captions every record with up to `cfg.jobs` workers. Each worker builds
/// its own adapter and backend. Records already complete on disk are
/// skipped; a failing record is logged and never stops the batch.
pub fn batch_run<A, B, FA, FB>(
    records: &[ManifestRecord],
    base_dir: &Path,
    cfg: &RunConfig,
    assets: &Assets,
    provider: &dyn FrameProvider,
    make_adapter: FA,
    make_backend: FB,
) -> RunReport
where
    A: ModelAdapter,
    B: ChatBackend,
    FA: Fn() -> Result<A, RunError> + Sync,
    FB: Fn() -> Result<B, RunError> + Sync,
{
    let started_unix = unix_now();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RecordOutcome>>> = Mutex::new(vec![None; records.len()]);
    let ledger = Mutex::new(());
    let _ = std::fs::create_dir_all(&cfg.output_dir);

    let work = || {
        let mut adapter: Option<A> = None;
        loop {
            let i = next.fetch_add(1, Ordering::SeqCst);
            let Some(rec) = records.get(i) else { break };
            let outcome = if check_id(&rec.id).is_ok() && is_complete(&cfg.output_dir, &rec.id) {
                RecordOutcome {
                    id: rec.id.clone(),
                    status: RecordStatus::Skipped,
                    stage: None,
                    kind: None,
                    reason: None,
                }
            } else {
                let result = (|| {
                    if adapter.is_none() {
                        adapter = Some(make_adapter()?);
                    }
                    let backend = make_backend()?;
                    let a = adapter.as_mut().expect("adapter just built");
                    caption_video(&resolve(base_dir, &rec.path), &rec.id, cfg, assets, provider, a, backend)
                })();
                match result {
                    Ok(_) => RecordOutcome {
                        id: rec.id.clone(),
                        status: RecordStatus::Ok,
                        stage: None,
                        kind: None,
                        reason: None,
                    },
                    Err(e) => RecordOutcome {
                        id: rec.id.clone(),
                        status: RecordStatus::Failed,
                        stage: Some(e.stage),
                        kind: Some(e.kind),
                        reason: Some(e.message),
                    },
                }
            };
            {
                let _guard = ledger.lock().expect("ledger");
                let line = serde_json::json!({ "unix": unix_now(), "outcome": &outcome });
                if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(cfg.output_dir.join(LEDGER_FILE)) {
                    let _ = writeln!(f, "{line}");
                }
            }
            slots.lock().expect("slots")[i] = Some(outcome);
        }
    };
    std::thread::scope(|s| {
        for _ in 0..cfg.jobs.max(1).min(records.len().max(1)) {
            s.spawn(&work);
        }
    });

    let records: Vec<RecordOutcome> = slots
        .into_inner()
        .expect("slots")
        .into_iter()
        .map(|o| o.expect("every record visited"))
        .collect();
    let count = |s| records.iter().filter(|r| r.status == s).count();
    RunReport {
        started_unix,
        finished_unix: unix_now(),
        ok: count(RecordStatus::Ok),
        failed: count(RecordStatus::Failed),
        skipped: count(RecordStatus::Skipped),
        records,
    }
}
