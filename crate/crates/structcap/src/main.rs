use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use structcap::config::RunConfig;
use structcap::contract::run_contract_suite;
use structcap::ingest::{sample_frames, ImageDirProvider};
use structcap::mock_server::{MockAdapterConfig, MockAdapterServer, MockChatMode, MockModels};
use structcap::packs::{assets, Assets};
use structcap::run::{batch_run, build_adapter, caption_video, provider, resolve, BackendFactory, ErrorKind, RunError};
use structcap::services::{EvalAdapter, StubAdapter};
use structcap::tensor::Tensor;
use structcap_core::amc::ScriptedAdapter;
use structcap_core::blur::VisualPrompt;
use structcap_core::caption::{parse_caption, render_caption, RenderStyle};
use structcap_core::chat::{ChatBackend, ImageRef, MockChat, MockScript};
use structcap_core::dataset::{curate, dataset_stats, motion_intensity, parse_manifest, to_jsonl, CurationFilter};
use structcap_core::enhancer::{Enhancer, EnhancerConfig, EnhancerError};
use structcap_core::flow::FlowConfig;
use structcap_core::metrics::inseval::{inseval_judge, inseval_score, InsevalPack};
use structcap_core::metrics::{
    clip_senbysen, cosine_similarity, split_sentences, vae_distance, vae_distance_mean, LayerWeights, SimilarityMatrix,
};

#[derive(Parser)]
#[command(name = "structcap", version, about = "Instance-aware structured video captions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Caption one video (an image directory, or anything the command provider decodes).
    Caption(CaptionArgs),
    /// Caption every record of a JSONL manifest, resuming over finished ones.
    Batch(BatchArgs),
    /// Expand short prompts into structured captions.
    Enhance(EnhanceArgs),
    #[command(subcommand)]
    Eval(EvalCommand),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// In-process mock of the model adapter service.
    #[command(subcommand, name = "mock-adapter")]
    MockAdapter(MockCommand),
}

/// Flags that override the config file.
#[derive(Args, Clone, Default)]
struct RunFlags {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Frames sampled per video.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_parser = parse_visual_prompt)]
    visual_prompt: Option<VisualPrompt>,
    /// `mock`, `scripted` or an adapter URL.
    #[arg(long)]
    adapter: Option<String>,
    /// ScriptedAdapter JSON for `--adapter scripted`.
    #[arg(long)]
    adapter_script: Option<PathBuf>,
    /// `mock` or a chat backend URL.
    #[arg(long)]
    backend: Option<String>,
    /// Mock chat script JSON for `--backend mock`.
    #[arg(long)]
    chat_script: Option<PathBuf>,
    /// Directory holding a replacement prompt pack.
    #[arg(long)]
    prompts_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CaptionArgs {
    video: PathBuf,
    /// Output subdirectory name; defaults to the video's file name.
    #[arg(long)]
    id: Option<String>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct BatchArgs {
    /// JSONL manifest; relative paths resolve against its directory.
    manifest: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long, conflicts_with = "prompts_file", required_unless_present = "prompts_file")]
    prompt: Option<String>,
    /// Newline-delimited prompts; writes one caption JSON per line.
    #[arg(long)]
    prompts_file: Option<PathBuf>,
    #[arg(long, default_value = "mock")]
    backend: String,
    #[arg(long)]
    chat_script: Option<PathBuf>,
    #[arg(long, env = "STRUCTCAP_BACKEND_TOKEN")]
    token: Option<String>,
    #[arg(long, env = "STRUCTCAP_BACKEND_MODEL", default_value = "mock")]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    prompts_dir: Option<PathBuf>,
    /// Render the flat training text instead of JSON.
    #[arg(long)]
    flat: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Weighted squared distance between two latent tensor files.
    Vae {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        /// JSON list of per-layer weights; unit weights when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        report: ReportFlags,
    },
    /// Sentence-by-sentence text/frame similarity of a caption.
    Senbysen {
        /// caption.json, or plain text.
        #[arg(long)]
        caption: PathBuf,
        /// Image directory of the video.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// `mock` or an adapter URL.
        #[arg(long, default_value = "mock")]
        adapter: String,
        #[arg(long, env = "STRUCTCAP_ADAPTER_TOKEN")]
        token: Option<String>,
        #[command(flatten)]
        report: ReportFlags,
    },
    /// Judge generated videos against an instance-level prompt pack.
    Inseval {
        /// JSONL of `{"prompt_id": .., "path": ..}`.
        #[arg(long)]
        videos: PathBuf,
        /// Prompt pack JSON; the shipped pack when absent.
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value = "mock")]
        backend: String,
        #[arg(long)]
        chat_script: Option<PathBuf>,
        #[arg(long, env = "STRUCTCAP_BACKEND_TOKEN")]
        token: Option<String>,
        #[arg(long, env = "STRUCTCAP_BACKEND_MODEL", default_value = "mock")]
        model: String,
        #[arg(long)]
        prompts_dir: Option<PathBuf>,
        /// Also report the dimensions left out of the Average.
        #[arg(long)]
        include_unscored: bool,
        #[command(flatten)]
        report: ReportFlags,
    },
}

#[derive(Args)]
struct ReportFlags {
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Keep records meeting every filter clause.
    Curate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        min_dur: f64,
        #[arg(long, default_value_t = 10.0)]
        max_dur: f64,
        #[arg(long)]
        min_motion: Option<f64>,
        #[arg(long)]
        require_instance: bool,
        /// JSONL of rejected ids and reasons.
        #[arg(long)]
        rejected: Option<PathBuf>,
    },
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill `motion_intensity` from each record's frames.
    Motion {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
}

#[derive(Subcommand)]
enum MockCommand {
    /// Serve until killed.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        /// ScriptedAdapter JSON; stub models when absent.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Mock chat script JSON; /chat echoes when absent.
        #[arg(long)]
        chat_script: Option<PathBuf>,
        #[arg(long, env = "STRUCTCAP_ADAPTER_TOKEN")]
        token: Option<String>,
    },
    /// Run the contract suite against a running service.
    Check {
        #[arg(long)]
        url: String,
        #[arg(long, env = "STRUCTCAP_ADAPTER_TOKEN")]
        token: Option<String>,
    },
}

fn parse_visual_prompt(s: &str) -> Result<VisualPrompt, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("{s:?} is not one of blur, red-screen, bbox-overlay"))
}

struct Failure {
    kind: ErrorKind,
    message: String,
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Self {
            kind: e.kind,
            message: e.to_string(),
        }
    }
}

fn fail(kind: ErrorKind, message: impl std::fmt::Display) -> Failure {
    Failure {
        kind,
        message: message.to_string(),
    }
}

fn config_fail(m: impl std::fmt::Display) -> Failure {
    fail(ErrorKind::Config, m)
}

fn input_fail(m: impl std::fmt::Display) -> Failure {
    fail(ErrorKind::Input, m)
}

fn backend_fail(m: impl std::fmt::Display) -> Failure {
    fail(ErrorKind::Backend, m)
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Caption(a) => cmd_caption(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Eval(c) => cmd_eval(c),
        Command::Dataset(c) => cmd_dataset(c),
        Command::MockAdapter(c) => cmd_mock(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.kind.exit_code() as u8)
        }
    }
}

fn load_config(flags: &RunFlags) -> Result<RunConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::load(path).map_err(config_fail)?,
        None => RunConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok());
    let f = flags.clone();
    if let Some(v) = f.out {
        cfg.output_dir = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(v) = f.samples {
        cfg.samples = v;
    }
    if let Some(v) = f.visual_prompt {
        cfg.amc.visual_prompt = v;
    }
    if let Some(v) = f.adapter {
        cfg.adapter.endpoint = v;
    }
    if let Some(v) = f.adapter_script {
        cfg.adapter.script = Some(v);
    }
    if let Some(v) = f.backend {
        cfg.backend.endpoint = v;
    }
    if let Some(v) = f.chat_script {
        cfg.backend.script = Some(v);
    }
    if let Some(v) = f.prompts_dir {
        cfg.prompts_dir = Some(v);
    }
    cfg.validate().map_err(config_fail)?;
    Ok(cfg)
}

fn load_assets(dir: Option<&Path>) -> Result<Assets, Failure> {
    assets(dir).map_err(config_fail)
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| fail(ErrorKind::Output, e))?;
            }
            std::fs::write(p, text).map_err(|e| fail(ErrorKind::Output, format!("{}: {e}", p.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| fail(ErrorKind::Output, e))
        }
    }
}

fn cmd_caption(a: CaptionArgs) -> Outcome {
    let cfg = load_config(&a.run)?;
    let assets = load_assets(cfg.prompts_dir.as_deref())?;
    let id = match a.id {
        Some(id) => id,
        None => a
            .video
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| input_fail(format!("cannot derive an id from {}", a.video.display())))?,
    };
    let mut adapter = build_adapter(&cfg)?;
    let backend = BackendFactory::new(&cfg)?.build();
    let provider = provider(&cfg);
    let outcome = caption_video(&a.video, &id, &cfg, &assets, provider.as_ref(), &mut adapter, backend)?;
    eprintln!(
        "{}: {} instance(s), {} backend call(s)",
        outcome.dir.display(),
        outcome.caption.instances.len(),
        outcome.backend_calls
    );
    write_output(None, &render_caption(&outcome.caption, RenderStyle::Structured))
}

fn cmd_batch(a: BatchArgs) -> Outcome {
    let mut cfg = load_config(&a.run)?;
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(config_fail("--jobs must be at least 1"));
        }
        cfg.jobs = j;
    }
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| input_fail(format!("{}: {e}", a.manifest.display())))?;
    let records = parse_manifest(&text).map_err(|e| input_fail(format!("{}: {e}", a.manifest.display())))?;
    let assets = load_assets(cfg.prompts_dir.as_deref())?;
    let factory = BackendFactory::new(&cfg)?;
    // Fail fast on adapter configuration before any worker starts.
    build_adapter(&cfg)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let provider = provider(&cfg);
    let report = batch_run(
        &records,
        base,
        &cfg,
        &assets,
        provider.as_ref(),
        || build_adapter(&cfg),
        || Ok(factory.build()),
    );
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_output(Some(&cfg.output_dir.join("run_report.json")), &json)?;
    for r in report.records.iter().filter(|r| r.reason.is_some()) {
        eprintln!(
            "{}: failed at {}: {}",
            r.id,
            r.stage.map_or("?", |s| s.as_str()),
            r.reason.as_deref().unwrap_or_default()
        );
    }
    println!("ok {} failed {} skipped {}", report.ok, report.failed, report.skipped);
    Ok(())
}

/// A chat backend for the standalone subcommands.
fn standalone_backend(
    endpoint: &str,
    script: Option<&Path>,
    token: Option<String>,
    model: &str,
) -> Result<(Box<dyn ChatBackend + Send>, RunConfig), Failure> {
    let mut cfg = RunConfig::default();
    cfg.backend.endpoint = endpoint.to_string();
    cfg.backend.script = script.map(Path::to_path_buf);
    cfg.backend.token = token;
    cfg.backend.model = model.to_string();
    cfg.validate().map_err(config_fail)?;
    Ok((BackendFactory::new(&cfg)?.build(), cfg))
}

fn cmd_enhance(a: EnhanceArgs) -> Outcome {
    let prompts: Vec<String> = match (&a.prompt, &a.prompts_file) {
        (Some(p), _) => vec![p.clone()],
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| input_fail(format!("{}: {e}", path.display())))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
        (None, None) => return Err(config_fail("give --prompt or --prompts-file")),
    };
    let (backend, mut cfg) = standalone_backend(&a.backend, a.chat_script.as_deref(), a.token, &a.model)?;
    cfg.seed = a.seed;
    let assets = load_assets(a.prompts_dir.as_deref())?;
    let ecfg = EnhancerConfig {
        backend: cfg.backend_config(),
        retry_budget: cfg.backend.retry_budget,
        style: RenderStyle::Structured,
        ..EnhancerConfig::default()
    };
    let mut enhancer = Enhancer::new(backend, assets.pack, ecfg);
    let mut out = String::new();
    for p in &prompts {
        let (_, job) = enhancer.enhance(p).map_err(|e| {
            let kind = match e {
                EnhancerError::EmptyPrompt => ErrorKind::Input,
                _ => ErrorKind::Backend,
            };
            fail(kind, format!("{p:?}: {e}"))
        })?;
        for flag in &job.flags {
            eprintln!("{p:?}: flagged {flag}");
        }
        let caption = job.final_caption.as_ref().expect("enhance sets the caption");
        if a.flat {
            out.push_str(&render_caption(caption, RenderStyle::FlatTrainingText));
        } else {
            out.push_str(&serde_json::to_string(caption).expect("caption serializes"));
        }
        out.push('\n');
    }
    write_output(a.out.as_deref(), &out)
}

fn emit_report<T: Serialize>(flags: &ReportFlags, report: &T, table: &str) -> Outcome {
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    if let Some(p) = &flags.out {
        write_output(Some(p), &json)?;
    }
    write_output(None, if flags.json { &json } else { table })
}

#[derive(Serialize)]
struct VaeReport {
    shape: [usize; 5],
    distance: f64,
    mean: f64,
}

#[derive(Serialize)]
struct SenbysenReport {
    score: f64,
    sentences: Vec<String>,
    frames: Vec<u32>,
    /// `similarity[i][j]`: sentence `i` against frame `j`.
    similarity: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct VideoEntry {
    prompt_id: String,
    path: String,
}

fn eval_adapter(endpoint: &str, token: Option<String>) -> Box<dyn EvalAdapter> {
    if endpoint == "mock" {
        Box::new(StubAdapter::default())
    } else {
        Box::new(structcap::http::HttpAdapter::new(endpoint, token))
    }
}

fn cmd_eval(c: EvalCommand) -> Outcome {
    match c {
        EvalCommand::Vae { gt, rec, weights, report } => {
            let read = |p: &Path| {
                Tensor::read(p)
                    .and_then(Tensor::into_latent)
                    .map_err(|e| input_fail(format!("{}: {e}", p.display())))
            };
            let (zg, zr) = (read(&gt)?, read(&rec)?);
            let w = match weights {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| config_fail(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<LayerWeights>(&text).map_err(|e| config_fail(format!("{}: {e}", p.display())))?
                }
                None => LayerWeights::unit(zg.shape()[0]),
            };
            let distance = vae_distance(&zg, &zr, &w).map_err(input_fail)?;
            let mean = vae_distance_mean(&zg, &zr, &w).map_err(input_fail)?;
            let r = VaeReport {
                shape: zg.shape(),
                distance,
                mean,
            };
            let table = format!("shape     {:?}\ndistance  {distance}\nmean      {mean}\n", r.shape);
            emit_report(&report, &r, &table)
        }
        EvalCommand::Senbysen {
            caption,
            frames,
            samples,
            adapter,
            token,
            report,
        } => {
            let doc = std::fs::read_to_string(&caption).map_err(|e| input_fail(format!("{}: {e}", caption.display())))?;
            let text = match parse_caption(&doc) {
                Ok(c) => render_caption(&c, RenderStyle::FlatTrainingText),
                Err(_) => doc,
            };
            let sentences = split_sentences(&text);
            if sentences.is_empty() {
                return Err(input_fail(format!("{} has no sentences", caption.display())));
            }
            let (seq, _) = sample_frames(&ImageDirProvider::default(), &frames, samples).map_err(input_fail)?;
            let mut a = eval_adapter(&adapter, token);
            let texts: Vec<String> = sentences.iter().map(str::to_string).collect();
            let images: Vec<_> = seq.frames().iter().map(|f| f.image.clone()).collect();
            let te = a.embed_text(&texts).map_err(backend_fail)?;
            let ie = a.embed_image(&images).map_err(backend_fail)?;
            let rows = te
                .iter()
                .map(|t| ie.iter().map(|i| cosine_similarity(t, i)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(backend_fail)?;
            let m = SimilarityMatrix::new(rows.clone()).map_err(backend_fail)?;
            let score = clip_senbysen(&m).map_err(backend_fail)?;
            let r = SenbysenReport {
                score,
                sentences: texts,
                frames: seq.frames().iter().map(|f| f.index).collect(),
                similarity: rows,
            };
            let table = format!("sentences {}\nframes    {}\nscore     {score:.6}\n", r.sentences.len(), r.frames.len());
            emit_report(&report, &r, &table)
        }
        EvalCommand::Inseval {
            videos,
            prompts,
            seed,
            samples,
            backend,
            chat_script,
            token,
            model,
            prompts_dir,
            include_unscored,
            report,
        } => {
            let pack = match prompts {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| config_fail(format!("{}: {e}", p.display())))?;
                    InsevalPack::from_json(&text).map_err(|e| config_fail(format!("{}: {e}", p.display())))?
                }
                None => InsevalPack::default(),
            };
            let assets = load_assets(prompts_dir.as_deref())?;
            let (mut chat, cfg) = standalone_backend(&backend, chat_script.as_deref(), token, &model)?;
            let text = std::fs::read_to_string(&videos).map_err(|e| input_fail(format!("{}: {e}", videos.display())))?;
            let base = videos.parent().unwrap_or(Path::new("."));
            let mut verdicts = Vec::new();
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: VideoEntry = serde_json::from_str(line)
                    .map_err(|e| input_fail(format!("{}:{}: {e}", videos.display(), n + 1)))?;
                let prompt = pack
                    .get(&entry.prompt_id)
                    .ok_or_else(|| input_fail(format!("unknown prompt id {:?}", entry.prompt_id)))?;
                if !include_unscored && !prompt.dimension.is_scored() {
                    continue;
                }
                let (seq, _) = sample_frames(&ImageDirProvider::default(), &resolve(base, &entry.path), samples)
                    .map_err(input_fail)?;
                chat.register_clip(&seq);
                let (verdict, _) =
                    inseval_judge(&mut chat, &ImageRef::all(&seq), prompt, &assets.pack, &cfg.backend_config(), seed)
                        .map_err(backend_fail)?;
                verdicts.push(verdict);
            }
            let r = inseval_score(&verdicts, &pack, include_unscored).map_err(input_fail)?;
            #[derive(Serialize)]
            struct Full<'a> {
                seed: u64,
                report: &'a structcap_core::metrics::inseval::InsevalReport,
                verdicts: &'a [structcap_core::metrics::inseval::JudgeVerdict],
            }
            let full = Full {
                seed,
                report: &r,
                verdicts: &verdicts,
            };
            emit_report(&report, &full, &r.table())
        }
    }
}

fn read_manifest(path: &Path) -> Result<Vec<structcap_core::dataset::ManifestRecord>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| input_fail(format!("{}: {e}", path.display())))?;
    parse_manifest(&text).map_err(|e| input_fail(format!("{}: {e}", path.display())))
}

fn cmd_dataset(c: DatasetCommand) -> Outcome {
    match c {
        DatasetCommand::Curate {
            input,
            out,
            min_dur,
            max_dur,
            min_motion,
            require_instance,
            rejected,
        } => {
            let filter = CurationFilter {
                min_duration: min_dur,
                max_duration: max_dur,
                min_motion,
                require_instance,
            };
            filter.validate().map_err(config_fail)?;
            let records = read_manifest(&input)?;
            let curated = curate(&records, &filter);
            write_output(Some(&out), &to_jsonl(&curated.kept))?;
            if let Some(p) = rejected {
                let lines: String = curated
                    .rejected
                    .iter()
                    .map(|r| serde_json::to_string(r).expect("rejection serializes") + "\n")
                    .collect();
                write_output(Some(&p), &lines)?;
            }
            eprintln!("kept {} of {}", curated.kept.len(), records.len());
            Ok(())
        }
        DatasetCommand::Stats { input, out } => {
            let stats = dataset_stats(&read_manifest(&input)?);
            let mut json = serde_json::to_string_pretty(&stats).expect("stats serialize");
            json.push('\n');
            write_output(out.as_deref(), &json)
        }
        DatasetCommand::Motion { input, out, samples } => {
            let mut records = read_manifest(&input)?;
            let base = input.parent().unwrap_or(Path::new("."));
            for r in &mut records {
                let (seq, _) = sample_frames(&ImageDirProvider::default(), &resolve(base, &r.path), samples)
                    .map_err(|e| input_fail(format!("{}: {e}", r.id)))?;
                r.motion_intensity =
                    Some(motion_intensity(&seq, &FlowConfig::default()).map_err(|e| input_fail(format!("{}: {e}", r.id)))?);
            }
            write_output(Some(&out), &to_jsonl(&records))
        }
    }
}

fn cmd_mock(c: MockCommand) -> Outcome {
    match c {
        MockCommand::Serve {
            addr,
            script,
            chat_script,
            token,
        } => {
            let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| config_fail(format!("{}: {e}", p.display())));
            let models = match script {
                Some(p) => MockModels::Scripted(
                    serde_json::from_str::<ScriptedAdapter>(&read(&p)?)
                        .map_err(|e| config_fail(format!("{}: {e}", p.display())))?,
                ),
                None => MockModels::Stub(StubAdapter::default()),
            };
            let chat = match chat_script {
                Some(p) => MockChatMode::Script(MockChat::new(
                    serde_json::from_str::<MockScript>(&read(&p)?)
                        .map_err(|e| config_fail(format!("{}: {e}", p.display())))?,
                )),
                None => MockChatMode::Echo,
            };
            let cfg = MockAdapterConfig {
                models,
                chat,
                token,
                unavailable: Vec::new(),
            };
            let server = MockAdapterServer::start(&addr, cfg).map_err(|e| config_fail(format!("{addr}: {e}")))?;
            println!("listening on {}", server.url());
            let _ = std::io::stdout().flush();
            server.join();
            Ok(())
        }
        MockCommand::Check { url, token } => {
            let outcomes = run_contract_suite(&url, token.as_deref());
            let mut failed = 0;
            for o in &outcomes {
                println!("{} {} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                failed += usize::from(!o.passed);
            }
            println!("{} of {} contract checks passed", outcomes.len() - failed, outcomes.len());
            if failed > 0 {
                Err(backend_fail(format!("{failed} contract check(s) failed")))
            } else {
                Ok(())
            }
        }
    }
}
