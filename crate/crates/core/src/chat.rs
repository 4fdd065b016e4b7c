//! Chat-completion contract shared by real backends and the scripted mock.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::sampling::FrameSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// Points at one frame of a named clip (`frames`, `instance_0`, ...).
/// Backends resolve it to pixels; the orchestrator never embeds pixels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageRef {
    pub clip: String,
    pub frame_index: u32,
}

impl ImageRef {
    pub fn all(frames: &FrameSequence) -> Vec<ImageRef> {
        frames
            .indices()
            .map(|frame_index| ImageRef {
                clip: frames.clip().to_string(),
                frame_index,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageRef>,
}

impl ChatTurn {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user_with_images(text: impl Into<String>, images: Vec<ImageRef>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            images,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
            images: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedFormat {
    FreeText,
    OneSentence,
    StructuredFields,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BundleError {
    #[error("a bundle needs exactly one system turn, placed first")]
    SystemTurn,
    #[error("system turns cannot carry images")]
    SystemImages,
}

/// A complete conversation ready for dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    turns: Vec<ChatTurn>,
    pub expected_format: ExpectedFormat,
    pub retry_budget: u32,
}

impl PromptBundle {
    pub fn new(
        turns: Vec<ChatTurn>,
        expected_format: ExpectedFormat,
        retry_budget: u32,
    ) -> Result<Self, BundleError> {
        let systems = turns.iter().filter(|t| t.role == Role::System).count();
        if systems != 1 || turns.first().map(|t| t.role) != Some(Role::System) {
            return Err(BundleError::SystemTurn);
        }
        if !turns[0].images.is_empty() {
            return Err(BundleError::SystemImages);
        }
        Ok(Self {
            turns,
            expected_format,
            retry_budget,
        })
    }

    pub fn turns(&self) -> &[ChatTurn] {
        &self.turns
    }

    /// A copy extended with the model's reply and a corrective user turn.
    pub fn with_correction(&self, reply: &str, correction: &str) -> Self {
        let mut turns = self.turns.clone();
        turns.push(ChatTurn::assistant(reply));
        turns.push(ChatTurn::user(correction));
        Self {
            turns,
            ..self.clone()
        }
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.turns.iter().flat_map(|t| t.images.iter())
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map(|t| t.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Endpoint reference (URL or `mock`).
    pub endpoint: String,
    pub model: String,
    pub temperature: f32,
    pub seed: Option<u64>,
    pub max_tokens: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "mock".into(),
            model: "default".into(),
            temperature: 0.0,
            seed: Some(0),
            max_tokens: 1024,
        }
    }
}

/// Wire request body for `POST /chat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub turns: Vec<ChatTurn>,
    pub temperature: f32,
    pub seed: Option<u64>,
    pub max_tokens: u32,
    /// Which toolkit operation issued the call; mock backends key on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
}

impl ChatRequest {
    pub fn new(operation: &str, bundle: &PromptBundle, cfg: &BackendConfig) -> Self {
        Self {
            model: cfg.model.clone(),
            turns: bundle.turns().to_vec(),
            temperature: cfg.temperature.max(0.0),
            seed: cfg.seed,
            max_tokens: cfg.max_tokens,
            operation: Some(operation.to_string()),
        }
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map(|t| t.text.as_str())
    }
}

/// Wire reply body for `POST /chat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("mock has no reply scripted for {operation} call #{ordinal}")]
    Unscripted { operation: String, ordinal: usize },
}

pub trait ChatBackend {
    fn chat(&mut self, request: &ChatRequest) -> Result<String, BackendError>;

    /// Called before a conversation references `clip`, so backends that
    /// ship pixels can resolve [`ImageRef`]s. The default ignores it.
    fn register_clip(&mut self, _clip: &FrameSequence) {}
}

impl<B: ChatBackend + ?Sized> ChatBackend for &mut B {
    fn chat(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).chat(request)
    }

    fn register_clip(&mut self, clip: &FrameSequence) {
        (**self).register_clip(clip)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for alloc::boxed::Box<B> {
    fn chat(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).chat(request)
    }

    fn register_clip(&mut self, clip: &FrameSequence) {
        (**self).register_clip(clip)
    }
}

/// One scripted mock reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    /// Simulated transport failure.
    Fail { fail: String },
    /// Echo the text of the last user turn.
    Echo { echo: EchoSource },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoSource {
    LastUser,
}

impl From<&str> for MockReply {
    fn from(s: &str) -> Self {
        MockReply::Text(s.to_string())
    }
}

/// Replies for one operation: `replies[k]` answers the k-th call,
/// `default` answers every call past the list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScriptEntry {
    #[serde(default)]
    pub replies: Vec<MockReply>,
    #[serde(default)]
    pub default: Option<MockReply>,
}

/// Operation name → scripted replies. Serialized as a JSON object.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    pub entries: BTreeMap<String, MockScriptEntry>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends ordinal replies for `operation`.
    pub fn then(mut self, operation: &str, reply: impl Into<MockReply>) -> Self {
        self.entries
            .entry(operation.to_string())
            .or_default()
            .replies
            .push(reply.into());
        self
    }

    /// Reply for every call past the ordinal list.
    pub fn always(mut self, operation: &str, reply: impl Into<MockReply>) -> Self {
        self.entries.entry(operation.to_string()).or_default().default = Some(reply.into());
        self
    }

    pub fn fail(self, operation: &str, message: &str) -> Self {
        self.then(
            operation,
            MockReply::Fail {
                fail: message.to_string(),
            },
        )
    }
}

/// Deterministic chat backend driven by a [`MockScript`]. Requests without
/// an operation tag are answered under the operation name `"chat"`. An
/// operation `base:detail` with no entry of its own uses the `base` entry.
/// Every request is kept for auditing.
#[derive(Debug, Clone, Default)]
pub struct MockChat {
    script: MockScript,
    counters: BTreeMap<String, usize>,
    ledger: Vec<ChatRequest>,
}

impl MockChat {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            ..Self::default()
        }
    }

    pub fn ledger(&self) -> &[ChatRequest] {
        &self.ledger
    }

    pub fn calls(&self, operation: &str) -> usize {
        self.counters.get(operation).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.ledger.len()
    }
}

impl ChatBackend for MockChat {
    fn chat(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let op = request.operation.clone().unwrap_or_else(|| "chat".to_string());
        self.ledger.push(request.clone());
        let counter = self.counters.entry(op.clone()).or_insert(0);
        let ordinal = *counter;
        *counter += 1;
        // `instance:i1` falls back to the `instance` entry; ordinals stay
        // per full operation name.
        let entry = self.script.entries.get(&op).or_else(|| {
            op.split_once(':')
                .and_then(|(base, _)| self.script.entries.get(base))
        });
        let reply = entry
            .and_then(|e| e.replies.get(ordinal).or(e.default.as_ref()))
            .ok_or(BackendError::Unscripted {
                operation: op,
                ordinal,
            })?;
        match reply {
            MockReply::Text(t) => Ok(t.clone()),
            MockReply::Fail { fail } => Err(BackendError::Transport(fail.clone())),
            MockReply::Echo { .. } => Ok(request.last_user_text().unwrap_or_default().to_string()),
        }
    }
}
