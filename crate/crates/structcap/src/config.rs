//! Run configuration: a TOML file, then environment overrides, then flags.
//!
//! ```toml
//! seed = 0
//! samples = 8
//! output_dir = "out"
//!
//! [input]
//! provider = "image_dir"          # or "command"
//! default_fps = 30.0
//!
//! [adapter]
//! endpoint = "mock"               # "mock", "scripted" or an http(s) URL
//!
//! [backend]
//! endpoint = "mock"               # "mock" or an http(s) URL
//! script = "chat_script.json"     # required for "mock"
//!
//! [amc]
//! visual_prompt = "blur"
//! ```
//!
//! Environment: `STRUCTCAP_ADAPTER_URL`, `STRUCTCAP_ADAPTER_TOKEN`,
//! `STRUCTCAP_BACKEND_URL`, `STRUCTCAP_BACKEND_TOKEN`,
//! `STRUCTCAP_BACKEND_MODEL`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use structcap_core::amc::{AmcConfig, FlowSource};
use structcap_core::blur::VisualPrompt;
use structcap_core::camera::CameraConfig;
use structcap_core::chat::BackendConfig;
use structcap_core::flow::FlowConfig;
use structcap_core::orchestrator::OrchestratorConfig;
use structcap_core::sampling::DEFAULT_SAMPLE_COUNT;

use crate::ingest::CommandProvider;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    ImageDir,
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub provider: ProviderKind,
    /// Used by image directories without `meta.json`.
    pub default_fps: Option<f64>,
    pub probe_command: Vec<String>,
    pub decode_command: Vec<String>,
    pub scratch_dir: Option<PathBuf>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::ImageDir,
            default_fps: None,
            probe_command: Vec::new(),
            decode_command: Vec::new(),
            scratch_dir: None,
        }
    }
}

impl InputConfig {
    pub fn command_provider(&self) -> CommandProvider {
        CommandProvider {
            probe: self.probe_command.clone(),
            decode: self.decode_command.clone(),
            scratch: self.scratch_dir.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterSettings {
    /// `mock` (stub models), `scripted` (see `script`) or a base URL.
    pub endpoint: String,
    /// JSON `ScriptedAdapter` for `endpoint = "scripted"`.
    pub script: Option<PathBuf>,
    pub token: Option<String>,
    pub flow_source: FlowSource,
    pub timeout_secs: u64,
}

impl Default for AdapterSettings {
    fn default() -> Self {
        Self {
            endpoint: "mock".into(),
            script: None,
            token: None,
            flow_source: FlowSource::Internal,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    /// `mock` (see `script`) or a base URL serving `POST /chat`.
    pub endpoint: String,
    /// JSON `MockScript` for `endpoint = "mock"`.
    pub script: Option<PathBuf>,
    pub token: Option<String>,
    pub model: String,
    pub temperature: f32,
    pub max_tokens: u32,
    pub retry_budget: u32,
    pub use_camera_hint: bool,
    pub include_metadata: bool,
    /// Calls per second across all workers; 0 disables limiting.
    pub rate_per_second: f64,
    pub burst: u32,
    pub timeout_secs: u64,
}

impl Default for BackendSettings {
    fn default() -> Self {
        let o = OrchestratorConfig::default();
        Self {
            endpoint: "mock".into(),
            script: None,
            token: None,
            model: o.backend.model,
            temperature: o.backend.temperature,
            max_tokens: o.backend.max_tokens,
            retry_budget: o.retry_budget,
            use_camera_hint: o.use_camera_hint,
            include_metadata: o.include_metadata,
            rate_per_second: 0.0,
            burst: 4,
            timeout_secs: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmcSettings {
    pub confidence_threshold: f64,
    pub max_instances: usize,
    pub sigma: f64,
    pub visual_prompt: VisualPrompt,
    pub grid: u32,
    pub search_radius: u32,
    pub static_threshold: f64,
    pub margin: f64,
}

impl Default for AmcSettings {
    fn default() -> Self {
        let a = AmcConfig::default();
        Self {
            confidence_threshold: a.confidence_threshold,
            max_instances: a.max_instances,
            sigma: a.sigma,
            visual_prompt: a.visual_prompt,
            grid: a.flow.grid,
            search_radius: a.flow.search_radius,
            static_threshold: a.camera.static_threshold,
            margin: a.camera.margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub samples: usize,
    pub output_dir: PathBuf,
    /// Prompt pack root overriding the shipped pack.
    pub prompts_dir: Option<PathBuf>,
    pub jobs: usize,
    pub input: InputConfig,
    pub adapter: AdapterSettings,
    pub backend: BackendSettings,
    pub amc: AmcSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: DEFAULT_SAMPLE_COUNT,
            output_dir: PathBuf::from("out"),
            prompts_dir: None,
            jobs: 1,
            input: InputConfig::default(),
            adapter: AdapterSettings::default(),
            backend: BackendSettings::default(),
            amc: AmcSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads a TOML file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| ConfigError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [
            self.prompts_dir.as_mut(),
            self.adapter.script.as_mut(),
            self.backend.script.as_mut(),
            self.input.scratch_dir.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Applies `STRUCTCAP_*` overrides from `lookup` (normally `std::env::var`).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(v) = lookup("STRUCTCAP_ADAPTER_URL") {
            self.adapter.endpoint = v;
        }
        if let Some(v) = lookup("STRUCTCAP_ADAPTER_TOKEN") {
            self.adapter.token = Some(v);
        }
        if let Some(v) = lookup("STRUCTCAP_BACKEND_URL") {
            self.backend.endpoint = v;
        }
        if let Some(v) = lookup("STRUCTCAP_BACKEND_TOKEN") {
            self.backend.token = Some(v);
        }
        if let Some(v) = lookup("STRUCTCAP_BACKEND_MODEL") {
            self.backend.model = v;
        }
    }

    /// Checks value ranges and that every referenced path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if !(self.backend.temperature >= 0.0) {
            return bad("backend.temperature must be >= 0".into());
        }
        if !(self.backend.rate_per_second >= 0.0 && self.backend.rate_per_second.is_finite()) {
            return bad("backend.rate_per_second must be finite and >= 0".into());
        }
        let a = &self.amc;
        if !(0.0..=1.0).contains(&a.confidence_threshold) {
            return bad("amc.confidence_threshold must lie in [0, 1]".into());
        }
        if !(a.sigma > 0.0 && a.sigma.is_finite()) {
            return bad("amc.sigma must be positive".into());
        }
        if a.grid < 2 {
            return bad("amc.grid must be at least 2".into());
        }
        if let Some(fps) = self.input.default_fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return bad("input.default_fps must be positive".into());
            }
        }
        if self.input.provider == ProviderKind::Command
            && (self.input.probe_command.is_empty() || self.input.decode_command.is_empty())
        {
            return bad("the command provider needs input.probe_command and input.decode_command".into());
        }
        match self.adapter.endpoint.as_str() {
            "mock" => {}
            "scripted" if self.adapter.script.is_none() => return bad("adapter.endpoint = \"scripted\" needs adapter.script".into()),
            "scripted" => {}
            url if is_url(url) => {}
            other => return bad(format!("adapter.endpoint {other:?} is not mock, scripted or a URL")),
        }
        match self.backend.endpoint.as_str() {
            "mock" if self.backend.script.is_none() => return bad("backend.endpoint = \"mock\" needs backend.script".into()),
            "mock" => {}
            url if is_url(url) => {}
            other => return bad(format!("backend.endpoint {other:?} is not mock or a URL")),
        }
        for (what, p) in [
            ("prompts_dir", &self.prompts_dir),
            ("adapter.script", &self.adapter.script),
            ("backend.script", &self.backend.script),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("{what} {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    pub fn amc_config(&self) -> AmcConfig {
        let a = &self.amc;
        AmcConfig {
            confidence_threshold: a.confidence_threshold,
            max_instances: a.max_instances,
            sigma: a.sigma,
            visual_prompt: a.visual_prompt,
            flow: FlowConfig {
                grid: a.grid,
                search_radius: a.search_radius,
            },
            camera: CameraConfig {
                static_threshold: a.static_threshold,
                margin: a.margin,
            },
            flow_source: self.adapter.flow_source,
        }
    }

    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            endpoint: self.backend.endpoint.clone(),
            model: self.backend.model.clone(),
            temperature: self.backend.temperature,
            seed: Some(self.seed),
            max_tokens: self.backend.max_tokens,
        }
    }

    pub fn orchestrator_config(&self) -> OrchestratorConfig {
        OrchestratorConfig {
            backend: self.backend_config(),
            retry_budget: self.backend.retry_budget,
            use_camera_hint: self.backend.use_camera_hint,
            include_metadata: self.backend.include_metadata,
        }
    }
}

pub fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse_and_unknown_keys_fail() {
        let cfg = RunConfig::from_toml(
            "seed = 7\n[amc]\nvisual_prompt = \"red-screen\"\nmax_instances = 2\n[backend]\nuse_camera_hint = false\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.amc_config().visual_prompt, VisualPrompt::RedScreen);
        assert_eq!(cfg.amc_config().max_instances, 2);
        assert!(!cfg.orchestrator_config().use_camera_hint);
        assert_eq!(cfg.backend_config().seed, Some(7));
        assert!(RunConfig::from_toml("[amc]\nsigmaa = 3\n").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_env(|k| (k == "STRUCTCAP_BACKEND_URL").then(|| "http://h:1".to_string()));
        assert_eq!(cfg.backend.endpoint, "http://h:1");
        assert_eq!(cfg.adapter.endpoint, "mock");
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_err(), "mock backend without a script");
        cfg.backend.endpoint = "http://localhost:9".into();
        cfg.validate().unwrap();
        cfg.adapter.endpoint = "ftp://x".into();
        assert!(cfg.validate().is_err());
        cfg.adapter.endpoint = "mock".into();
        cfg.prompts_dir = Some("/definitely/not/here".into());
        assert!(cfg.validate().is_err());
    }
}
