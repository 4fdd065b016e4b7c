//! Two-stage expansion of a short text-to-video prompt into the structured
//! caption format.
//!
//! Stage A expands the short prompt into a dense paragraph. Stage B(I) lists
//! the subject instances mentioned in that paragraph, and stage B(II) writes
//! the scene fields and one structured description per instance. Every stage
//! sees the few-shot examples from the prompt pack as prior turns.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::caption::{render_caption, CameraAnnotation, CaptionError, InstanceDescription, RenderStyle, StructuredCaption};
use crate::camera::CameraMovement;
use crate::chat::{BackendConfig, BackendError, BundleError, ChatBackend, ChatTurn, ExpectedFormat, PromptBundle};
use crate::orchestrator::{dispatch, parse_tagged_fields, render_prompt, split_camera_reply, CallRecord, INSTANCE_TAGS};
use crate::prompts::{label_list, sha256_hex, FewShotExample, PromptPack};
use crate::text::{count_words, fill, find_ignore_ascii_case, word_tokens, GLOBAL_SUMMARY_WORD_LIMIT};

pub const OP_STAGE_A: &str = "stage_a";
pub const OP_STAGE_B_SEGMENT: &str = "stage_b_segment";
pub const OP_STAGE_B_SCENE: &str = "stage_b_scene";
pub const OP_STAGE_B_INSTANCE: &str = "stage_b_instance";

pub const FLAG_CONTENT_DROP: &str = "content_drop";
pub const FLAG_UNGROUNDED_MENTION: &str = "ungrounded_mention";

pub const SCENE_TAGS: [&str; 3] = ["GLOBAL", "BACKGROUND", "CAMERA"];

/// Function words ignored by the content-preservation check.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "nor", "of", "in", "on", "at", "to", "into", "onto", "with", "without",
    "by", "for", "from", "as", "is", "are", "was", "were", "be", "been", "being", "it", "its", "this", "that",
    "these", "those", "he", "she", "they", "them", "his", "her", "their", "there", "here", "some", "very", "while",
    "s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "A")]
    Expand,
    #[serde(rename = "B1")]
    Segment,
    #[serde(rename = "B2")]
    Enhance,
}

impl Stage {
    pub fn id(self) -> &'static str {
        match self {
            Stage::Expand => "A",
            Stage::Segment => "B1",
            Stage::Enhance => "B2",
        }
    }
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnhancerError {
    #[error("the short prompt is empty")]
    EmptyPrompt,
    #[error("stage {requested} requested but the job expects {}", .expected.map_or("nothing", Stage::id))]
    StageOrder { expected: Option<Stage>, requested: Stage },
    #[error("stage {stage}: {operation}: {source}")]
    Backend {
        stage: Stage,
        operation: String,
        #[source]
        source: BackendError,
    },
    #[error("stage {stage}: could not parse reply: {reason}")]
    Parse { stage: Stage, reason: String },
    #[error("stage {stage}: {source}")]
    Schema {
        stage: Stage,
        #[source]
        source: CaptionError,
    },
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

impl EnhancerError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Self::Backend { stage, .. } | Self::Parse { stage, .. } | Self::Schema { stage, .. } => Some(*stage),
            Self::StageOrder { requested, .. } => Some(*requested),
            _ => None,
        }
    }
}

/// A subject named in the dense prompt. `mention` is the exact span copied
/// from the dense prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMention {
    pub mention: String,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLogEntry {
    pub stage: Stage,
    /// SHA-256 of the stage's JSON call records.
    pub transcript_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancerJob {
    pub short_prompt: String,
    pub dense_prompt: Option<String>,
    pub instance_list: Option<Vec<InstanceMention>>,
    pub final_caption: Option<StructuredCaption>,
    pub stage_log: Vec<StageLogEntry>,
    /// Content words of the short prompt absent from the dense prompt.
    pub missing_content_words: Vec<String>,
    pub flags: Vec<String>,
}

impl EnhancerJob {
    pub fn new(short_prompt: &str) -> Result<Self, EnhancerError> {
        let short_prompt = short_prompt.trim();
        if short_prompt.is_empty() {
            return Err(EnhancerError::EmptyPrompt);
        }
        Ok(Self {
            short_prompt: short_prompt.to_string(),
            dense_prompt: None,
            instance_list: None,
            final_caption: None,
            stage_log: Vec::new(),
            missing_content_words: Vec::new(),
            flags: Vec::new(),
        })
    }

    pub fn next_stage(&self) -> Option<Stage> {
        [Stage::Expand, Stage::Segment, Stage::Enhance].get(self.stage_log.len()).copied()
    }

    fn expect(&self, requested: Stage) -> Result<(), EnhancerError> {
        match self.next_stage() {
            Some(s) if s == requested => Ok(()),
            expected => Err(EnhancerError::StageOrder { expected, requested }),
        }
    }

    fn flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

/// Content words (stop words removed) of `short` that `dense` lacks, in
/// first-appearance order.
pub fn missing_content_words(short: &str, dense: &str) -> Vec<String> {
    let have: BTreeSet<String> = word_tokens(dense).into_iter().collect();
    let mut seen = BTreeSet::new();
    word_tokens(short)
        .into_iter()
        .filter(|w| !STOP_WORDS.contains(&w.as_str()) && !have.contains(w))
        .filter(|w| seen.insert(w.clone()))
        .collect()
}

const MENTION_SEPARATORS: [&str; 4] = ["\u{2014}", "\u{2013}", " -- ", " - "];

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix(['-', '*', '\u{2022}']) {
        return rest.trim_start();
    }
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        if let Some(rest) = line[digits..].strip_prefix(['.', ')']) {
            return rest.trim_start();
        }
    }
    line
}

/// Parses `mention <sep> class` lines, or `NONE`. Fails on anything else.
pub fn parse_mention_list(reply: &str) -> Result<Vec<InstanceMention>, String> {
    let body = reply.trim();
    if body.is_empty() {
        return Err("the answer was empty".into());
    }
    if body.trim_end_matches('.').eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in body.lines().map(strip_list_marker).filter(|l| !l.is_empty()) {
        let (mention, class) = MENTION_SEPARATORS
            .iter()
            .find_map(|sep| line.rsplit_once(sep))
            .ok_or_else(|| format!("line {line:?} is not `mention - class`"))?;
        let mention = mention.trim().trim_matches(['"', '\'']).trim();
        let class = class.trim().trim_end_matches('.').trim().to_lowercase();
        if mention.is_empty() || class.is_empty() {
            return Err(format!("line {line:?} has an empty mention or class"));
        }
        out.push(InstanceMention {
            mention: mention.to_string(),
            class_name: class,
        });
    }
    Ok(out)
}

/// Keeps mentions found in `dense` (ASCII case-insensitive), replacing each
/// with the exact span from `dense`. Returns the survivors and whether any
/// were dropped. Repeated spans are kept once.
pub fn ground_mentions(mentions: Vec<InstanceMention>, dense: &str) -> (Vec<InstanceMention>, bool) {
    let mut dropped = false;
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    for m in mentions {
        match find_ignore_ascii_case(dense, &m.mention) {
            Some((a, b)) => {
                if seen.insert((a, b)) {
                    kept.push(InstanceMention {
                        mention: dense[a..b].to_string(),
                        class_name: m.class_name,
                    });
                }
            }
            None => dropped = true,
        }
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhancerConfig {
    pub backend: BackendConfig,
    /// Calls per operation are capped at `1 + retry_budget`.
    pub retry_budget: u32,
    pub use_examples: bool,
    pub style: RenderStyle,
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        Self {
            backend: BackendConfig::default(),
            retry_budget: 1,
            use_examples: true,
            style: RenderStyle::FlatTrainingText,
        }
    }
}

pub struct Enhancer<B> {
    backend: B,
    pack: PromptPack,
    pub cfg: EnhancerConfig,
    records: Vec<CallRecord>,
}

impl<B: ChatBackend> Enhancer<B> {
    pub fn new(backend: B, pack: PromptPack, cfg: EnhancerConfig) -> Self {
        Self {
            backend,
            pack,
            cfg,
            records: Vec::new(),
        }
    }

    pub fn with_defaults(backend: B) -> Self {
        Self::new(backend, PromptPack::default(), EnhancerConfig::default())
    }

    /// Every call made so far, across jobs.
    pub fn records(&self) -> &[CallRecord] {
        &self.records
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn into_backend(self) -> B {
        self.backend
    }

    fn examples(&self) -> &[FewShotExample] {
        if self.cfg.use_examples {
            &self.pack.examples
        } else {
            &[]
        }
    }

    fn bundle(&self, shots: Vec<(String, String)>, user: String, format: ExpectedFormat) -> Result<PromptBundle, EnhancerError> {
        let mut turns = vec![ChatTurn::system(self.pack.enhancer_system.clone())];
        for (q, a) in shots {
            turns.push(ChatTurn::user(q));
            turns.push(ChatTurn::assistant(a));
        }
        turns.push(ChatTurn::user(user));
        Ok(PromptBundle::new(turns, format, self.cfg.retry_budget)?)
    }

    fn ask(&mut self, stage: Stage, op: &str, bundle: &PromptBundle, used: &mut u32) -> Result<String, EnhancerError> {
        dispatch(&mut self.backend, &self.cfg.backend, &mut self.records, op, bundle, used).map_err(|source| {
            EnhancerError::Backend {
                stage,
                operation: op.to_string(),
                source,
            }
        })
    }

    /// Asks until `parse` succeeds, with a single corrective re-ask.
    fn ask_parsed<T>(
        &mut self,
        stage: Stage,
        op: &str,
        mut bundle: PromptBundle,
        mut parse: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, EnhancerError> {
        let mut used = 0;
        let mut corrected = false;
        loop {
            let reply = self.ask(stage, op, &bundle, &mut used)?;
            match parse(&reply) {
                Ok(v) => return Ok(v),
                Err(reason) if corrected || used > bundle.retry_budget => {
                    return Err(EnhancerError::Parse { stage, reason });
                }
                Err(reason) => {
                    corrected = true;
                    let fix = fill(&self.pack.format_correction, &[("problem", &reason)]);
                    bundle = bundle.with_correction(&reply, &fix);
                }
            }
        }
    }

    fn log_stage(&self, job: &mut EnhancerJob, stage: Stage, first_record: usize) {
        let doc = serde_json::to_string(&self.records[first_record..]).expect("records serialize");
        job.stage_log.push(StageLogEntry {
            stage,
            transcript_hash: sha256_hex(&doc),
        });
    }

    pub fn stage_a_expand(&mut self, job: &mut EnhancerJob) -> Result<(), EnhancerError> {
        job.expect(Stage::Expand)?;
        let mark = self.records.len();
        let shots = self
            .examples()
            .iter()
            .map(|e| (render_prompt(&self.pack.stage_a, &[("short_prompt", &e.short)]), e.dense.clone()))
            .collect();
        let user = render_prompt(&self.pack.stage_a, &[("short_prompt", &job.short_prompt)]);
        let bundle = self.bundle(shots, user, ExpectedFormat::FreeText)?;
        let dense = self.ask_parsed(Stage::Expand, OP_STAGE_A, bundle, |r| {
            let t = r.trim();
            if t.is_empty() {
                Err("the answer was empty".into())
            } else {
                Ok(t.to_string())
            }
        })?;
        job.missing_content_words = missing_content_words(&job.short_prompt, &dense);
        if !job.missing_content_words.is_empty() {
            job.flag(FLAG_CONTENT_DROP);
        }
        job.dense_prompt = Some(dense);
        self.log_stage(job, Stage::Expand, mark);
        Ok(())
    }

    pub fn stage_b_segment(&mut self, job: &mut EnhancerJob) -> Result<(), EnhancerError> {
        job.expect(Stage::Segment)?;
        let mark = self.records.len();
        let dense = job.dense_prompt.clone().expect("stage A sets the dense prompt");
        let shots = self
            .examples()
            .iter()
            .map(|e| {
                let q = render_prompt(
                    &self.pack.stage_b_segment,
                    &[("short_prompt", &e.short), ("dense_prompt", &e.dense)],
                );
                (q, e.instances.clone())
            })
            .collect();
        let user = render_prompt(
            &self.pack.stage_b_segment,
            &[("short_prompt", &job.short_prompt), ("dense_prompt", &dense)],
        );
        let bundle = self.bundle(shots, user, ExpectedFormat::StructuredFields)?;
        let listed = self.ask_parsed(Stage::Segment, OP_STAGE_B_SEGMENT, bundle, parse_mention_list)?;
        let (kept, dropped) = ground_mentions(listed, &dense);
        if dropped {
            job.flag(FLAG_UNGROUNDED_MENTION);
        }
        job.instance_list = Some(kept);
        self.log_stage(job, Stage::Segment, mark);
        Ok(())
    }

    fn scene_shots(&self) -> Vec<(String, String)> {
        let labels = label_list();
        self.examples()
            .iter()
            .map(|e| {
                let q = render_prompt(
                    &self.pack.stage_b_scene,
                    &[("short_prompt", &e.short), ("dense_prompt", &e.dense), ("labels", &labels)],
                );
                (q, e.scene.clone())
            })
            .collect()
    }

    fn instance_shots(&self) -> Vec<(String, String)> {
        let mut shots = Vec::new();
        for e in self.examples() {
            let classes = parse_mention_list(&e.instances).unwrap_or_default();
            for (mention, block) in &e.instance_blocks {
                let class = classes
                    .iter()
                    .find(|m| &m.mention == mention)
                    .map_or("object", |m| m.class_name.as_str());
                let q = render_prompt(
                    &self.pack.stage_b_instance,
                    &[
                        ("short_prompt", &e.short),
                        ("dense_prompt", &e.dense),
                        ("mention", mention),
                        ("class_name", class),
                    ],
                );
                shots.push((q, block.clone()));
            }
        }
        shots
    }

    fn scene(&mut self, job: &EnhancerJob, dense: &str) -> Result<(String, String, CameraAnnotation), EnhancerError> {
        let labels = label_list();
        let user = render_prompt(
            &self.pack.stage_b_scene,
            &[("short_prompt", &job.short_prompt), ("dense_prompt", dense), ("labels", &labels)],
        );
        let mut bundle = self.bundle(self.scene_shots(), user, ExpectedFormat::StructuredFields)?;
        let mut used = 0;
        let mut corrected = false;
        loop {
            let reply = self.ask(Stage::Enhance, OP_STAGE_B_SCENE, &bundle, &mut used)?;
            let can_retry = !corrected && used <= bundle.retry_budget;
            let fields = match parse_tagged_fields(&reply, &SCENE_TAGS) {
                Ok(f) => f,
                Err(reason) if can_retry => {
                    corrected = true;
                    let fix = fill(&self.pack.format_correction, &[("problem", &reason)]);
                    bundle = bundle.with_correction(&reply, &fix);
                    continue;
                }
                Err(reason) => return Err(EnhancerError::Parse { stage: Stage::Enhance, reason }),
            };
            let words = count_words(&fields[0]);
            if words > GLOBAL_SUMMARY_WORD_LIMIT {
                if can_retry {
                    corrected = true;
                    let fix = fill(&self.pack.global_correction, &[("words", &words.to_string())]);
                    bundle = bundle.with_correction(&reply, &fix);
                    continue;
                }
                return Err(EnhancerError::Schema {
                    stage: Stage::Enhance,
                    source: CaptionError::SchemaViolation(format!(
                        "global summary has {words} words, limit is {GLOBAL_SUMMARY_WORD_LIMIT}"
                    )),
                });
            }
            let mut it = fields.into_iter();
            let global = it.next().expect("three scene fields");
            let background = it.next().expect("three scene fields");
            let (movement, qualitative) = split_camera_reply(&it.next().expect("three scene fields"));
            let camera = CameraAnnotation {
                basic_movement: movement.unwrap_or(CameraMovement::Unknown),
                qualitative,
                shot_notes: None,
            };
            return Ok((global, background, camera));
        }
    }

    pub fn stage_b_enhance(&mut self, job: &mut EnhancerJob) -> Result<(), EnhancerError> {
        job.expect(Stage::Enhance)?;
        let mark = self.records.len();
        let dense = job.dense_prompt.clone().expect("stage A sets the dense prompt");
        let mentions = job.instance_list.clone().expect("stage B(I) sets the instance list");
        let (global_summary, background, camera) = self.scene(job, &dense)?;

        let shots = self.instance_shots();
        let mut instances = Vec::with_capacity(mentions.len());
        for (k, m) in mentions.iter().enumerate() {
            let user = render_prompt(
                &self.pack.stage_b_instance,
                &[
                    ("short_prompt", &job.short_prompt),
                    ("dense_prompt", &dense),
                    ("mention", &m.mention),
                    ("class_name", &m.class_name),
                ],
            );
            let bundle = self.bundle(shots.clone(), user, ExpectedFormat::StructuredFields)?;
            let op = format!("{OP_STAGE_B_INSTANCE}:{k}");
            let fields = self.ask_parsed(Stage::Enhance, &op, bundle, |r| parse_tagged_fields(r, &INSTANCE_TAGS))?;
            let mut it = fields.into_iter();
            let mut next = || it.next().expect("three instance fields");
            instances.push(InstanceDescription {
                id: format!("i{k}"),
                class_name: m.class_name.clone(),
                appearance: next(),
                actions_motion: next(),
                position: next(),
                bbox_track: None,
            });
        }

        let caption = StructuredCaption {
            global_summary,
            background,
            camera,
            instances,
            source_meta: None,
        };
        caption.validate().map_err(|source| EnhancerError::Schema {
            stage: Stage::Enhance,
            source,
        })?;
        job.final_caption = Some(caption);
        self.log_stage(job, Stage::Enhance, mark);
        Ok(())
    }

    /// Runs all three stages and renders the result in the configured style.
    pub fn enhance(&mut self, short_prompt: &str) -> Result<(String, EnhancerJob), EnhancerError> {
        let mut job = EnhancerJob::new(short_prompt)?;
        self.stage_a_expand(&mut job)?;
        self.stage_b_segment(&mut job)?;
        self.stage_b_enhance(&mut job)?;
        let text = render_caption(job.final_caption.as_ref().expect("stage B(II) sets the caption"), self.cfg.style);
        Ok((text, job))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::parse_caption;
    use crate::chat::{MockChat, MockScript};

    const DENSE: &str = "A powerful male lion with a golden mane runs across the dry savanna while a small bird flies overhead.";
    const SCENE: &str = "GLOBAL: A lion runs across the savanna.\nBACKGROUND: Dry grass and acacia trees.\nCAMERA: pan_left, smooth";
    const FIELDS: &str = "APPEARANCE: Golden mane.\nACTIONS_MOTION: Runs to the right.\nPOSITION: Centre.";

    fn script(list: &str) -> MockScript {
        MockScript::new()
            .then(OP_STAGE_A, DENSE)
            .then(OP_STAGE_B_SEGMENT, list)
            .then(OP_STAGE_B_SCENE, SCENE)
            .always(OP_STAGE_B_INSTANCE, FIELDS)
    }

    fn run(list: &str, short: &str) -> (String, EnhancerJob, Enhancer<MockChat>) {
        let mut e = Enhancer::with_defaults(MockChat::new(script(list)));
        let (text, job) = e.enhance(short).unwrap();
        (text, job, e)
    }

    #[test]
    fn content_words_kept() {
        let (_, job, _) = run("A powerful male lion \u{2014} lion", "A lion runs across the savanna");
        assert!(job.missing_content_words.is_empty());
        assert!(!job.has_flag(FLAG_CONTENT_DROP));
    }

    #[test]
    fn dropped_word_flags_and_continues() {
        let (_, job, _) = run("A powerful male lion \u{2014} lion", "A lion with a bag");
        assert_eq!(job.missing_content_words, ["bag"]);
        assert!(job.has_flag(FLAG_CONTENT_DROP));
        assert!(job.final_caption.is_some());
    }

    #[test]
    fn empty_prompt_rejected() {
        let mut e = Enhancer::with_defaults(MockChat::new(MockScript::new()));
        assert_eq!(e.enhance("   ").unwrap_err(), EnhancerError::EmptyPrompt);
    }

    #[test]
    fn one_grounded_entry() {
        let (_, job, _) = run("a powerful male lion \u{2014} lion", "A lion runs");
        let list = job.instance_list.unwrap();
        assert_eq!(list.len(), 1);
        assert_eq!(list[0].mention, "A powerful male lion");
        assert_eq!(job.final_caption.unwrap().instances.len(), 1);
    }

    #[test]
    fn ungrounded_mentions_dropped() {
        let (_, job, _) = run("A powerful male lion \u{2014} lion\nA zebra \u{2014} zebra", "A lion runs");
        assert_eq!(job.instance_list.as_ref().unwrap().len(), 1);
        assert!(job.has_flag(FLAG_UNGROUNDED_MENTION));
    }

    #[test]
    fn prose_twice_is_parse_error() {
        let s = MockScript::new().then(OP_STAGE_A, DENSE).always(OP_STAGE_B_SEGMENT, "There is a lion and a bird.");
        let mut e = Enhancer::with_defaults(MockChat::new(s));
        let err = e.enhance("A lion runs").unwrap_err();
        assert!(matches!(err, EnhancerError::Parse { stage: Stage::Segment, .. }));
        assert_eq!(e.backend().calls(OP_STAGE_B_SEGMENT), 2);
    }

    #[test]
    fn two_instances_and_none() {
        let (_, job, _) = run("1. A powerful male lion - lion\n2. a small bird - bird", "A lion runs");
        let c = job.final_caption.unwrap();
        assert_eq!(c.instances.len(), 2);
        assert_eq!(c.instances[1].class_name, "bird");
        let (text, job, _) = run("NONE", "A lion runs");
        assert!(job.final_caption.unwrap().instances.is_empty());
        assert!(text.starts_with("A lion runs across the savanna."));
    }

    #[test]
    fn stage_order_enforced() {
        let mut e = Enhancer::with_defaults(MockChat::new(script("NONE")));
        let mut job = EnhancerJob::new("A lion").unwrap();
        assert_eq!(
            e.stage_b_segment(&mut job).unwrap_err(),
            EnhancerError::StageOrder { expected: Some(Stage::Expand), requested: Stage::Segment }
        );
        e.stage_a_expand(&mut job).unwrap();
        assert!(e.stage_b_enhance(&mut job).is_err());
        assert!(e.stage_a_expand(&mut job).is_err());
        assert_eq!(e.backend().total_calls(), 1);
    }

    #[test]
    fn long_global_is_schema_violation() {
        let long = "GLOBAL: one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty more\nBACKGROUND: b\nCAMERA: static";
        let s = MockScript::new()
            .then(OP_STAGE_A, DENSE)
            .then(OP_STAGE_B_SEGMENT, "NONE")
            .always(OP_STAGE_B_SCENE, long);
        let mut e = Enhancer::with_defaults(MockChat::new(s));
        let err = e.enhance("A lion").unwrap_err();
        assert!(matches!(err, EnhancerError::Schema { stage: Stage::Enhance, .. }));
        assert_eq!(e.backend().calls(OP_STAGE_B_SCENE), 2);
    }

    #[test]
    fn stage_log_and_determinism() {
        let (a, ja, _) = run("A powerful male lion \u{2014} lion", "A lion runs");
        let (b, jb, _) = run("A powerful male lion \u{2014} lion", "A lion runs");
        assert_eq!(a, b);
        assert_eq!(ja.stage_log, jb.stage_log);
        let stages: Vec<Stage> = ja.stage_log.iter().map(|s| s.stage).collect();
        assert_eq!(stages, [Stage::Expand, Stage::Segment, Stage::Enhance]);
        assert!(ja.stage_log.iter().all(|s| s.transcript_hash.len() == 64));
    }

    #[test]
    fn examples_are_prior_turns() {
        let (_, _, e) = run("NONE", "A lion runs");
        let req = &e.backend().ledger()[0].turns;
        assert_eq!(req.len(), 1 + 2 * e.pack.examples.len() + 1);
    }

    #[test]
    fn shipped_lion_example_replays() {
        let pack = PromptPack::default();
        let ex = pack.examples.iter().find(|e| e.name.contains("lion")).unwrap().clone();
        let mut s = MockScript::new()
            .then(OP_STAGE_A, ex.dense.as_str())
            .then(OP_STAGE_B_SEGMENT, ex.instances.as_str())
            .then(OP_STAGE_B_SCENE, ex.scene.as_str());
        for (k, (_, block)) in ex.instance_blocks.iter().enumerate() {
            s = s.then(&format!("{OP_STAGE_B_INSTANCE}:{k}"), block.as_str());
        }
        let mut e = Enhancer::with_defaults(MockChat::new(s));
        let (_, job) = e.enhance(&ex.short).unwrap();
        let c = job.final_caption.unwrap();
        assert_eq!(c.instances.len(), ex.instance_blocks.len());
        assert_eq!(c.instances[0].class_name, "lion");
        assert_eq!(c.camera.basic_movement, CameraMovement::PanLeft);
        let doc = render_caption(&c, RenderStyle::Structured);
        assert_eq!(parse_caption(&doc).unwrap(), c);
    }

    #[test]
    fn mention_list_forms() {
        assert!(parse_mention_list("NONE.").unwrap().is_empty());
        assert!(parse_mention_list("").is_err());
        let l = parse_mention_list("- \"a red kite\" \u{2013} Kite.").unwrap();
        assert_eq!(l[0], InstanceMention { mention: "a red kite".into(), class_name: "kite".into() });
        let l = parse_mention_list("* a golden-brown dog - dog").unwrap();
        assert_eq!(l[0].mention, "a golden-brown dog");
    }
}
