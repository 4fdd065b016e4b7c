//! Instance-level text-to-video benchmark: per-target yes/no judging and
//! per-dimension success rates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::chat::{BackendConfig, BackendError, BundleError, ChatBackend, ChatTurn, ExpectedFormat, ImageRef, PromptBundle};
use crate::orchestrator::{dispatch, CallRecord};
use crate::prompts::{sha256_hex, PromptPack};
use crate::text::fill;

pub const DEFAULT_PACK_JSON: &str = include_str!("../../../../prompts/inseval/prompts.json");

pub const OP_JUDGE: &str = "judge";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "Single-Action")]
    SingleAction,
    #[serde(rename = "Single-Color")]
    SingleColor,
    #[serde(rename = "Single-Shape")]
    SingleShape,
    #[serde(rename = "Single-Texture")]
    SingleTexture,
    #[serde(rename = "Single-Detail")]
    SingleDetail,
    #[serde(rename = "Multiple-Action")]
    MultipleAction,
    #[serde(rename = "Multiple-Color")]
    MultipleColor,
    #[serde(rename = "Multiple-Texture")]
    MultipleTexture,
    #[serde(rename = "Multiple-Shape")]
    MultipleShape,
    #[serde(rename = "Multiple-Detail")]
    MultipleDetail,
}

impl Dimension {
    /// The eight dimensions that make up the Average, in report order.
    pub const SCORED: [Dimension; 8] = [
        Dimension::SingleAction,
        Dimension::SingleColor,
        Dimension::SingleShape,
        Dimension::SingleTexture,
        Dimension::SingleDetail,
        Dimension::MultipleAction,
        Dimension::MultipleColor,
        Dimension::MultipleTexture,
    ];

    pub const UNSCORED: [Dimension; 2] = [Dimension::MultipleShape, Dimension::MultipleDetail];

    pub fn is_multiple(self) -> bool {
        matches!(
            self,
            Dimension::MultipleAction
                | Dimension::MultipleColor
                | Dimension::MultipleTexture
                | Dimension::MultipleShape
                | Dimension::MultipleDetail
        )
    }

    pub fn is_scored(self) -> bool {
        Self::SCORED.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::SingleAction => "Single-Action",
            Dimension::SingleColor => "Single-Color",
            Dimension::SingleShape => "Single-Shape",
            Dimension::SingleTexture => "Single-Texture",
            Dimension::SingleDetail => "Single-Detail",
            Dimension::MultipleAction => "Multiple-Action",
            Dimension::MultipleColor => "Multiple-Color",
            Dimension::MultipleTexture => "Multiple-Texture",
            Dimension::MultipleShape => "Multiple-Shape",
            Dimension::MultipleDetail => "Multiple-Detail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsevalTarget {
    pub entity: String,
    pub attribute: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsevalPrompt {
    pub id: String,
    pub dimension: Dimension,
    pub prompt: String,
    pub targets: Vec<InsevalTarget>,
    pub answer_key: String,
}

impl InsevalPrompt {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("prompt id is empty".into());
        }
        let n = self.targets.len();
        if self.dimension.is_multiple() && n < 2 {
            return Err(format!("{}: {} needs at least two targets", self.id, self.dimension.name()));
        }
        if !self.dimension.is_multiple() && n != 1 {
            return Err(format!("{}: {} needs exactly one target", self.id, self.dimension.name()));
        }
        if self.targets.iter().any(|t| t.entity.trim().is_empty() || t.attribute.trim().is_empty()) {
            return Err(format!("{}: target with empty entity or attribute", self.id));
        }
        Ok(())
    }
}

/// A prompt registry as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsevalPack {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub prompts: Vec<InsevalPrompt>,
}

impl Default for InsevalPack {
    fn default() -> Self {
        Self::from_json(DEFAULT_PACK_JSON).expect("shipped inseval pack is valid")
    }
}

impl InsevalPack {
    pub fn new(prompts: Vec<InsevalPrompt>) -> Result<Self, MetricError> {
        let pack = Self { note: None, prompts };
        pack.validate()?;
        Ok(pack)
    }

    pub fn from_json(doc: &str) -> Result<Self, MetricError> {
        let pack: Self = serde_json::from_str(doc).map_err(|e| MetricError::BadPack(format!("{e}")))?;
        pack.validate()?;
        Ok(pack)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let mut ids = BTreeSet::new();
        for p in &self.prompts {
            p.validate().map_err(MetricError::BadPack)?;
            if !ids.insert(p.id.as_str()) {
                return Err(MetricError::BadPack(format!("duplicate prompt id {:?}", p.id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&InsevalPrompt> {
        self.prompts.iter().find(|p| p.id == id)
    }

    /// Prompts to evaluate: scored dimensions, plus the rest if asked.
    pub fn active(&self, include_unscored: bool) -> impl Iterator<Item = &InsevalPrompt> {
        self.prompts
            .iter()
            .filter(move |p| include_unscored || p.dimension.is_scored())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub prompt_id: String,
    pub targets: Vec<bool>,
    /// Conjunction of `targets`.
    pub overall: bool,
    /// SHA-256 of the judge conversation's call records.
    pub transcript: String,
    pub seed: Option<u64>,
}

impl JudgeVerdict {
    /// A verdict whose overall result is always the conjunction.
    pub fn from_targets(prompt_id: &str, targets: Vec<bool>, transcript: String, seed: Option<u64>) -> Self {
        Self {
            prompt_id: prompt_id.to_string(),
            overall: targets.iter().all(|t| *t),
            targets,
            transcript,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("judge {prompt_id}: {source}")]
    Backend {
        prompt_id: String,
        #[source]
        source: BackendError,
    },
    #[error("judge {prompt_id}: could not read a yes/no answer")]
    Parse { prompt_id: String },
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Reads the final `Answer: yes|no` line, or a bare yes/no reply.
pub fn parse_judge_answer(reply: &str) -> Option<bool> {
    let word = |s: &str| match s.trim().trim_end_matches(['.', '!']).trim().to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    };
    if let Some(v) = word(reply) {
        return Some(v);
    }
    reply.lines().rev().find_map(|line| {
        let line = line.trim().trim_matches('*');
        let (head, tail) = line.split_once(':')?;
        if head.trim().trim_matches('*').eq_ignore_ascii_case("answer") {
            word(tail.trim_start_matches('*'))
        } else {
            None
        }
    })
}

/// Judges one prompt: one yes/no conversation per target, each allowed a
/// single corrective re-ask. The seed is sent with every call.
pub fn inseval_judge<B: ChatBackend + ?Sized>(
    backend: &mut B,
    video: &[ImageRef],
    prompt: &InsevalPrompt,
    pack: &PromptPack,
    cfg: &BackendConfig,
    seed: u64,
) -> Result<(JudgeVerdict, Vec<CallRecord>), JudgeError> {
    let cfg = BackendConfig {
        seed: Some(seed),
        ..cfg.clone()
    };
    let mut records = Vec::new();
    let mut answers = Vec::with_capacity(prompt.targets.len());
    for (k, target) in prompt.targets.iter().enumerate() {
        let question = fill(
            &pack.judge,
            &[
                ("prompt", &prompt.prompt),
                ("answer_key", &prompt.answer_key),
                ("entity", &target.entity),
                ("attribute", &target.attribute),
            ],
        );
        let mut bundle = PromptBundle::new(
            vec![
                ChatTurn::system(pack.judge_system.clone()),
                ChatTurn::user_with_images(question, video.to_vec()),
            ],
            ExpectedFormat::OneSentence,
            1,
        )?;
        let op = format!("{OP_JUDGE}:{}:{k}", prompt.id);
        let mut used = 0;
        let answer = loop {
            let reply = dispatch(backend, &cfg, &mut records, &op, &bundle, &mut used).map_err(|source| {
                JudgeError::Backend {
                    prompt_id: prompt.id.clone(),
                    source,
                }
            })?;
            match parse_judge_answer(&reply) {
                Some(v) => break v,
                None if used <= bundle.retry_budget => {
                    bundle = bundle.with_correction(&reply, &pack.judge_correction);
                }
                None => {
                    return Err(JudgeError::Parse {
                        prompt_id: prompt.id.clone(),
                    })
                }
            }
        };
        answers.push(answer);
    }
    let transcript = sha256_hex(&serde_json::to_string(&records).expect("records serialize"));
    Ok((JudgeVerdict::from_targets(&prompt.id, answers, transcript, Some(seed)), records))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub dimension: Dimension,
    pub prompts: usize,
    pub passed: usize,
    /// Whole percent, rounded half up; `None` when the dimension is empty.
    pub rate_percent: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsevalReport {
    pub dimensions: Vec<DimensionScore>,
    /// Mean of the scored dimension rates in hundredths of a percent.
    pub average_hundredths: Option<u64>,
    pub average_percent: Option<f64>,
}

/// `100 * passed / total` rounded half up to a whole percent.
pub fn rate_percent(passed: usize, total: usize) -> Option<u32> {
    if total == 0 {
        return None;
    }
    let (p, t) = (passed as u64, total as u64);
    Some(((200 * p + t) / (2 * t)) as u32)
}

/// Mean of whole-percent rates in hundredths, rounded half up.
pub fn average_hundredths(rates: &[u32]) -> Option<u64> {
    if rates.is_empty() {
        return None;
    }
    let n = rates.len() as u64;
    let sum: u64 = rates.iter().map(|r| u64::from(*r)).sum();
    Some((sum * 200 + n) / (2 * n))
}

/// Success rate per dimension over every prompt in the pack's dimension; a
/// prompt without a verdict counts as a failure. The Average covers the
/// scored dimensions that have prompts. Unscored dimensions are reported
/// only when `include_unscored` is set and never enter the Average.
pub fn inseval_score(
    verdicts: &[JudgeVerdict],
    pack: &InsevalPack,
    include_unscored: bool,
) -> Result<InsevalReport, MetricError> {
    let mut seen = BTreeSet::new();
    let mut passed: BTreeMap<Dimension, usize> = BTreeMap::new();
    for v in verdicts {
        let p = pack.get(&v.prompt_id).ok_or_else(|| MetricError::UnknownPrompt(v.prompt_id.clone()))?;
        if !seen.insert(v.prompt_id.as_str()) {
            return Err(MetricError::DuplicateVerdict(v.prompt_id.clone()));
        }
        if v.targets.iter().all(|t| *t) && !v.targets.is_empty() {
            *passed.entry(p.dimension).or_default() += 1;
        }
    }
    let mut dims: Vec<Dimension> = Dimension::SCORED.to_vec();
    if include_unscored {
        dims.extend(Dimension::UNSCORED);
    }
    let dimensions: Vec<DimensionScore> = dims
        .into_iter()
        .map(|d| {
            let total = pack.prompts.iter().filter(|p| p.dimension == d).count();
            let ok = passed.get(&d).copied().unwrap_or(0);
            DimensionScore {
                dimension: d,
                prompts: total,
                passed: ok,
                rate_percent: rate_percent(ok, total),
            }
        })
        .collect();
    let rates: Vec<u32> = dimensions
        .iter()
        .filter(|d| d.dimension.is_scored())
        .filter_map(|d| d.rate_percent)
        .collect();
    let average_hundredths = average_hundredths(&rates);
    Ok(InsevalReport {
        dimensions,
        average_hundredths,
        average_percent: average_hundredths.map(|h| h as f64 / 100.0),
    })
}

impl InsevalReport {
    /// `37.88` style Average, or `n/a`.
    pub fn average_display(&self) -> String {
        match self.average_hundredths {
            Some(h) => format!("{}.{:02}", h / 100, h % 100),
            None => "n/a".into(),
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:>7} {:>7} {:>6}", "dimension", "passed", "prompts", "rate");
        for d in &self.dimensions {
            let rate = d.rate_percent.map_or("n/a".to_string(), |r| format!("{r}%"));
            let _ = writeln!(s, "{:<18} {:>7} {:>7} {:>6}", d.dimension.name(), d.passed, d.prompts, rate);
        }
        let _ = writeln!(s, "{:<18} {:>22}", "Average", format!("{}%", self.average_display()));
        s
    }
}
