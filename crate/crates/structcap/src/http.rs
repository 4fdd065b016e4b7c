//! HTTP clients for the model adapter and chat backends.

use std::collections::HashMap;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use structcap_core::amc::{AdapterError, Detection, ModelAdapter};
use structcap_core::chat::{BackendError, ChatBackend, ChatRequest};
use structcap_core::image::{Mask, RgbImage};
use structcap_core::metrics::LatentTensor;
use structcap_core::sampling::FrameSequence;

use crate::services::EvalAdapter;
use crate::tensor::Tensor;
use crate::wire::*;

/// Largest reply body accepted (latents can be large).
const MAX_BODY: u64 = 512 * 1024 * 1024;

/// Failure of one HTTP exchange, before mapping onto a caller's error type.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HttpError {
    #[error("{0}")]
    Transport(String),
    #[error("HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("{0}")]
    Protocol(String),
}

impl HttpError {
    /// 5xx and connection failures are worth retrying; 4xx are not.
    pub fn is_transient(&self) -> bool {
        match self {
            HttpError::Transport(_) => true,
            HttpError::Status { status, .. } => *status >= 500,
            HttpError::Protocol(_) => false,
        }
    }
}

impl From<HttpError> for AdapterError {
    fn from(e: HttpError) -> Self {
        if e.is_transient() {
            AdapterError::Transport(e.to_string())
        } else {
            AdapterError::Protocol(e.to_string())
        }
    }
}

impl From<HttpError> for BackendError {
    fn from(e: HttpError) -> Self {
        if e.is_transient() {
            BackendError::Transport(e.to_string())
        } else {
            BackendError::Protocol(e.to_string())
        }
    }
}

/// Shared plumbing: base URL, token, request ids.
#[derive(Debug, Clone)]
pub struct HttpClient {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
    prefix: String,
    seq: u64,
}

impl HttpClient {
    pub fn new(base: &str, token: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: base.trim_end_matches('/').to_string(),
            token,
            agent,
            prefix: format!("{:x}", std::process::id()),
            seq: 0,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn next_id(&mut self) -> String {
        self.seq += 1;
        format!("{}-{}", self.prefix, self.seq)
    }

    fn check(mut resp: ureq::http::Response<ureq::Body>) -> Result<ureq::http::Response<ureq::Body>, HttpError> {
        let status = resp.status().as_u16();
        if status == 200 {
            return Ok(resp);
        }
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        let message = serde_json::from_str::<ErrorReply>(&text)
            .map(|e| e.error.message)
            .unwrap_or(text);
        Err(HttpError::Status { status, message })
    }

    pub fn get_json<R: DeserializeOwned>(&self, path: &str) -> Result<R, HttpError> {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.header(TOKEN_HEADER, t);
        }
        let resp = req.call().map_err(|e| HttpError::Transport(e.to_string()))?;
        Self::check(resp)?
            .body_mut()
            .read_json()
            .map_err(|e| HttpError::Protocol(format!("GET {path}: {e}")))
    }

    fn post(&self, path: &str, body: &impl Serialize) -> Result<ureq::http::Response<ureq::Body>, HttpError> {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.header(TOKEN_HEADER, t);
        }
        let resp = req.send_json(body).map_err(|e| HttpError::Transport(e.to_string()))?;
        Self::check(resp)
    }

    pub fn post_json<R: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<R, HttpError> {
        self.post(path, body)?
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_json()
            .map_err(|e| HttpError::Protocol(format!("POST {path}: {e}")))
    }

    /// POSTs JSON and returns the raw reply body plus its echoed request id.
    pub fn post_bytes(&self, path: &str, body: &impl Serialize) -> Result<(Vec<u8>, Option<String>), HttpError> {
        let mut resp = self.post(path, body)?;
        let id = resp
            .headers()
            .get(REQUEST_ID_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_vec()
            .map_err(|e| HttpError::Protocol(format!("POST {path}: {e}")))?;
        Ok((bytes, id))
    }
}

fn echoed(sent: &str, got: &str) -> Result<(), HttpError> {
    if sent == got {
        Ok(())
    } else {
        Err(HttpError::Protocol(format!("reply echoes request id {got:?}, sent {sent:?}")))
    }
}

/// [`ModelAdapter`] and [`EvalAdapter`] over the adapter HTTP contract.
#[derive(Debug, Clone)]
pub struct HttpAdapter {
    client: HttpClient,
}

impl HttpAdapter {
    pub fn new(base: &str, token: Option<String>) -> Self {
        Self::with_timeout(base, token, Duration::from_secs(120))
    }

    pub fn with_timeout(base: &str, token: Option<String>, timeout: Duration) -> Self {
        Self {
            client: HttpClient::new(base, token, timeout),
        }
    }

    pub fn health(&self) -> Result<HealthReply, AdapterError> {
        Ok(self.client.get_json("/health")?)
    }

    fn check_unit(vectors: &[Vec<f32>], count: usize, shape: [usize; 2]) -> Result<(), AdapterError> {
        if vectors.len() != count || shape[0] != count || vectors.iter().any(|v| v.len() != shape[1]) {
            return Err(AdapterError::Protocol(format!(
                "embedding reply declares {shape:?} for {count} inputs"
            )));
        }
        Ok(())
    }
}

impl ModelAdapter for HttpAdapter {
    fn detect(&mut self, frame: &RgbImage) -> Result<Vec<Detection>, AdapterError> {
        let request_id = self.client.next_id();
        let body = DetectRequest {
            request_id: request_id.clone(),
            image: WireImage::encode(frame),
        };
        let reply: DetectReply = self.client.post_json("/detect", &body)?;
        echoed(&request_id, &reply.request_id)?;
        Ok(reply.detections)
    }

    fn segment(&mut self, frames: &FrameSequence, seeds: &[Detection]) -> Result<Vec<Vec<Mask>>, AdapterError> {
        let request_id = self.client.next_id();
        let body = SegmentRequest {
            request_id: request_id.clone(),
            frames: frames.frames().iter().map(|f| WireImage::encode(&f.image)).collect(),
            seeds: seeds.to_vec(),
        };
        let reply: SegmentReply = self.client.post_json("/segment", &body)?;
        echoed(&request_id, &reply.request_id)?;
        reply
            .tracks
            .iter()
            .map(|t| {
                t.masks
                    .iter()
                    .map(|m| m.decode().map_err(AdapterError::Protocol))
                    .collect()
            })
            .collect()
    }
}

impl EvalAdapter for HttpAdapter {
    fn info(&mut self) -> Result<InfoReply, AdapterError> {
        Ok(self.client.get_json("/info")?)
    }

    fn embed_text(&mut self, texts: &[String]) -> Result<Vec<Vec<f32>>, AdapterError> {
        let request_id = self.client.next_id();
        let body = EmbedTextRequest {
            request_id: request_id.clone(),
            texts: texts.to_vec(),
        };
        let reply: EmbedReply = self.client.post_json("/embed_text", &body)?;
        echoed(&request_id, &reply.request_id)?;
        Self::check_unit(&reply.vectors, texts.len(), reply.shape)?;
        Ok(reply.vectors)
    }

    fn embed_image(&mut self, images: &[RgbImage]) -> Result<Vec<Vec<f32>>, AdapterError> {
        let request_id = self.client.next_id();
        let body = EmbedImageRequest {
            request_id: request_id.clone(),
            images: images.iter().map(WireImage::encode).collect(),
        };
        let reply: EmbedReply = self.client.post_json("/embed_image", &body)?;
        echoed(&request_id, &reply.request_id)?;
        Self::check_unit(&reply.vectors, images.len(), reply.shape)?;
        Ok(reply.vectors)
    }

    fn vae_latent(&mut self, frames: &[RgbImage]) -> Result<LatentTensor, AdapterError> {
        let request_id = self.client.next_id();
        let body = VaeLatentRequest {
            request_id: request_id.clone(),
            frames: frames.iter().map(WireImage::encode).collect(),
        };
        let (bytes, id) = self.client.post_bytes("/vae_latent", &body)?;
        if let Some(id) = id {
            echoed(&request_id, &id)?;
        }
        Tensor::decode(&bytes)
            .and_then(Tensor::into_latent)
            .map_err(|e| AdapterError::Protocol(e.to_string()))
    }
}

/// Chat backend over `POST /chat`. Image references are resolved against
/// clips handed over through [`ChatBackend::register_clip`] and shipped
/// inline as PNG.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    client: HttpClient,
    clips: HashMap<String, FrameSequence>,
}

impl HttpChatBackend {
    pub fn new(base: &str, token: Option<String>) -> Self {
        Self::with_timeout(base, token, Duration::from_secs(300))
    }

    pub fn with_timeout(base: &str, token: Option<String>, timeout: Duration) -> Self {
        Self {
            client: HttpClient::new(base, token, timeout),
            clips: HashMap::new(),
        }
    }

    fn image_data(&self, request: &ChatRequest) -> Result<Vec<WireFrame>, BackendError> {
        let mut refs: Vec<_> = request.turns.iter().flat_map(|t| &t.images).collect();
        refs.sort();
        refs.dedup();
        refs.into_iter()
            .map(|r| {
                let frame = self
                    .clips
                    .get(&r.clip)
                    .and_then(|c| c.frames().iter().find(|f| f.index == r.frame_index))
                    .ok_or_else(|| BackendError::Protocol(format!("no pixels for {}#{}", r.clip, r.frame_index)))?;
                Ok(WireFrame {
                    clip: r.clip.clone(),
                    frame_index: r.frame_index,
                    image: WireImage::encode(&frame.image),
                })
            })
            .collect()
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let request_id = self.client.next_id();
        let body = ChatWireRequest {
            request_id: request_id.clone(),
            chat: request.clone(),
            image_data: self.image_data(request)?,
        };
        let reply: ChatWireReply = self.client.post_json("/chat", &body)?;
        echoed(&request_id, &reply.request_id)?;
        Ok(reply.text)
    }

    fn register_clip(&mut self, clip: &FrameSequence) {
        self.clips.insert(clip.clip().to_string(), clip.clone());
    }
}
