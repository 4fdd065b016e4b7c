//! In-process mock of the model-adapter service.
//!
//! Serves the full contract on a background thread. Detection and
//! segmentation come from [`StubAdapter`] or a [`ScriptedAdapter`];
//! embeddings and latents always come from the stub; `/chat` either echoes
//! the last user turn or plays a [`MockScript`].

use std::io::Read;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Serialize;
use structcap_core::amc::{AdapterError, ModelAdapter, ScriptedAdapter};
use structcap_core::chat::{ChatBackend, ExpectedFormat, MockChat, MockScript, PromptBundle};
use structcap_core::image::RgbImage;
use structcap_core::sampling::{Frame, FrameSequence};

use crate::services::{EvalAdapter, StubAdapter};
use crate::tensor::{Tensor, CONTENT_TYPE};
use crate::wire::*;

const MAX_REQUEST: u64 = 256 * 1024 * 1024;

pub enum MockModels {
    Stub(StubAdapter),
    Scripted(ScriptedAdapter),
}

pub enum MockChatMode {
    Echo,
    Script(MockChat),
}

pub struct MockAdapterConfig {
    pub models: MockModels,
    pub chat: MockChatMode,
    /// Required in [`TOKEN_HEADER`] when set.
    pub token: Option<String>,
    /// Endpoints that answer 503, to exercise client error paths.
    pub unavailable: Vec<String>,
}

impl Default for MockAdapterConfig {
    fn default() -> Self {
        Self {
            models: MockModels::Stub(StubAdapter::default()),
            chat: MockChatMode::Echo,
            token: None,
            unavailable: Vec::new(),
        }
    }
}

impl MockAdapterConfig {
    pub fn with_chat_script(mut self, script: MockScript) -> Self {
        self.chat = MockChatMode::Script(MockChat::new(script));
        self
    }
}

/// A fully formed HTTP reply.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
    pub request_id: Option<String>,
}

impl Reply {
    fn json(value: &impl Serialize) -> Self {
        Self {
            status: 200,
            content_type: "application/json",
            body: serde_json::to_vec(value).expect("reply serializes"),
            request_id: None,
        }
    }

    fn error(status: u16, request_id: Option<String>, message: impl Into<String>) -> Self {
        let body = ErrorReply {
            request_id: request_id.clone(),
            error: ErrorBody {
                code: status,
                message: message.into(),
            },
        };
        Self {
            request_id,
            status,
            ..Self::json(&body)
        }
    }
}

/// Request handling, independent of the socket layer.
pub struct MockState {
    cfg: MockAdapterConfig,
    eval: StubAdapter,
    chat_log: Vec<ChatWireRequest>,
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, Reply> {
    serde_json::from_slice(body).map_err(|e| {
        let id = serde_json::from_slice::<serde_json::Value>(body)
            .ok()
            .and_then(|v| v.get("request_id").and_then(|i| i.as_str()).map(str::to_string));
        Reply::error(400, id, format!("bad payload: {e}"))
    })
}

fn images(id: &str, wire: &[WireImage]) -> Result<Vec<RgbImage>, Reply> {
    wire.iter()
        .map(|w| w.decode().map_err(|e| Reply::error(400, Some(id.to_string()), e)))
        .collect()
}

fn adapter_reply(id: &str, e: AdapterError) -> Reply {
    match e {
        AdapterError::Protocol(m) => Reply::error(400, Some(id.to_string()), m),
        AdapterError::Unsupported(m) => Reply::error(400, Some(id.to_string()), format!("unsupported: {m}")),
        AdapterError::Transport(m) => Reply::error(503, Some(id.to_string()), m),
    }
}

impl MockState {
    pub fn new(cfg: MockAdapterConfig) -> Self {
        Self {
            cfg,
            eval: StubAdapter::default(),
            chat_log: Vec::new(),
        }
    }

    pub fn chat_log(&self) -> &[ChatWireRequest] {
        &self.chat_log
    }

    fn models(&mut self) -> &mut dyn ModelAdapter {
        match &mut self.cfg.models {
            MockModels::Stub(s) => s,
            MockModels::Scripted(s) => s,
        }
    }

    pub fn handle(&mut self, method: &str, path: &str, token: Option<&str>, body: &[u8]) -> Reply {
        if let Some(want) = &self.cfg.token {
            if token != Some(want.as_str()) {
                return Reply::error(401, None, "missing or wrong adapter token");
            }
        }
        let known = crate::services::ENDPOINTS.contains(&path);
        if !known {
            return Reply::error(404, None, format!("no endpoint {path}"));
        }
        let want_get = matches!(path, "/info" | "/health");
        if want_get != (method == "GET") || (!want_get && method != "POST") {
            return Reply::error(405, None, format!("{method} not allowed on {path}"));
        }
        if self.cfg.unavailable.iter().any(|u| u == path) {
            return Reply::error(503, None, format!("{path} model unavailable"));
        }
        let result = match path {
            "/health" => Ok(Reply::json(&HealthReply { status: "ok".into() })),
            "/info" => self.info(),
            "/detect" => self.detect(body),
            "/segment" => self.segment(body),
            "/embed_text" => self.embed_text(body),
            "/embed_image" => self.embed_image(body),
            "/vae_latent" => self.vae_latent(body),
            "/chat" => self.chat(body),
            _ => unreachable!("endpoint list is exhaustive"),
        };
        result.unwrap_or_else(|r| r)
    }

    fn info(&mut self) -> Result<Reply, Reply> {
        let mut info = self.eval.info().map_err(|e| adapter_reply("", e))?;
        if matches!(self.cfg.models, MockModels::Scripted(_)) {
            info.mode = "scripted".into();
        }
        Ok(Reply::json(&info))
    }

    fn detect(&mut self, body: &[u8]) -> Result<Reply, Reply> {
        let req: DetectRequest = parse(body)?;
        let img = images(&req.request_id, std::slice::from_ref(&req.image))?.remove(0);
        let detections = self.models().detect(&img).map_err(|e| adapter_reply(&req.request_id, e))?;
        Ok(Reply::json(&DetectReply {
            request_id: req.request_id,
            detections,
        }))
    }

    fn segment(&mut self, body: &[u8]) -> Result<Reply, Reply> {
        let req: SegmentRequest = parse(body)?;
        let id = req.request_id.clone();
        let bad = |m: String| Reply::error(400, Some(id.clone()), m);
        let imgs = images(&id, &req.frames)?;
        let Some(first) = imgs.first() else {
            return Err(bad("frames must be non-empty".into()));
        };
        let (w, h) = first.dimensions();
        for s in &req.seeds {
            s.validate(w, h).map_err(&bad)?;
        }
        let frames = imgs
            .into_iter()
            .enumerate()
            .map(|(i, image)| Frame {
                index: i as u32,
                image,
                timestamp: i as f64,
            })
            .collect();
        let seq = FrameSequence::new("frames", frames).map_err(|e| bad(e.to_string()))?;
        let tracks = if req.seeds.is_empty() {
            Vec::new()
        } else {
            self.models().segment(&seq, &req.seeds).map_err(|e| adapter_reply(&id, e))?
        };
        Ok(Reply::json(&SegmentReply {
            request_id: req.request_id,
            tracks: tracks
                .iter()
                .map(|t| WireTrack {
                    masks: t.iter().map(WireMask::encode).collect(),
                })
                .collect(),
        }))
    }

    fn embed_reply(request_id: String, vectors: Vec<Vec<f32>>) -> Reply {
        let dim = vectors.first().map_or(0, Vec::len);
        Reply::json(&EmbedReply {
            request_id,
            shape: [vectors.len(), dim],
            vectors,
        })
    }

    fn embed_text(&mut self, body: &[u8]) -> Result<Reply, Reply> {
        let req: EmbedTextRequest = parse(body)?;
        let v = self.eval.embed_text(&req.texts).map_err(|e| adapter_reply(&req.request_id, e))?;
        Ok(Self::embed_reply(req.request_id, v))
    }

    fn embed_image(&mut self, body: &[u8]) -> Result<Reply, Reply> {
        let req: EmbedImageRequest = parse(body)?;
        let imgs = images(&req.request_id, &req.images)?;
        let v = self.eval.embed_image(&imgs).map_err(|e| adapter_reply(&req.request_id, e))?;
        Ok(Self::embed_reply(req.request_id, v))
    }

    fn vae_latent(&mut self, body: &[u8]) -> Result<Reply, Reply> {
        let req: VaeLatentRequest = parse(body)?;
        let imgs = images(&req.request_id, &req.frames)?;
        let z = self.eval.vae_latent(&imgs).map_err(|e| adapter_reply(&req.request_id, e))?;
        Ok(Reply {
            status: 200,
            content_type: CONTENT_TYPE,
            body: Tensor::from_latent(&z).encode(),
            request_id: Some(req.request_id),
        })
    }

    fn chat(&mut self, body: &[u8]) -> Result<Reply, Reply> {
        let req: ChatWireRequest = parse(body)?;
        let id = req.request_id.clone();
        let bad = |m: String| Reply::error(400, Some(id.clone()), m);
        PromptBundle::new(req.chat.turns.clone(), ExpectedFormat::FreeText, 0).map_err(|e| bad(e.to_string()))?;
        for r in req.chat.turns.iter().flat_map(|t| &t.images) {
            let frame = req
                .image_data
                .iter()
                .find(|f| f.clip == r.clip && f.frame_index == r.frame_index)
                .ok_or_else(|| bad(format!("no image_data for {}#{}", r.clip, r.frame_index)))?;
            frame.image.decode().map_err(&bad)?;
        }
        self.chat_log.push(req.clone());
        let text = match &mut self.cfg.chat {
            MockChatMode::Echo => req.chat.last_user_text().unwrap_or_default().to_string(),
            MockChatMode::Script(mock) => match mock.chat(&req.chat) {
                Ok(t) => t,
                // Scripted failures and unscripted calls both look like a
                // broken upstream model.
                Err(e) => return Err(Reply::error(502, Some(id), e.to_string())),
            },
        };
        Ok(Reply::json(&ChatWireReply { request_id: id, text }))
    }
}

/// A running mock service. Dropping it stops the listener.
pub struct MockAdapterServer {
    server: Arc<tiny_http::Server>,
    state: Arc<Mutex<MockState>>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl MockAdapterServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts serving.
    pub fn start(addr: &str, cfg: MockAdapterConfig) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("listener has no IP address"))?;
        let server = Arc::new(server);
        let state = Arc::new(Mutex::new(MockState::new(cfg)));
        let worker = {
            let (server, state) = (Arc::clone(&server), Arc::clone(&state));
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    serve_one(&state, request);
                }
            })
        };
        Ok(Self {
            server,
            state,
            addr,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Every accepted `/chat` request, in arrival order.
    pub fn chat_log(&self) -> Vec<ChatWireRequest> {
        self.state.lock().expect("mock state").chat_log().to_vec()
    }

    /// Blocks until the listener stops.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockAdapterServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn serve_one(state: &Mutex<MockState>, mut request: tiny_http::Request) {
    let method = request.method().as_str().to_string();
    let path = request.url().split('?').next().unwrap_or("").to_string();
    let token = request
        .headers()
        .iter()
        .find(|h| h.field.equiv(TOKEN_HEADER))
        .map(|h| h.value.as_str().to_string());
    let mut body = Vec::new();
    let reply = match request.as_reader().take(MAX_REQUEST).read_to_end(&mut body) {
        Ok(_) => state
            .lock()
            .expect("mock state")
            .handle(&method, &path, token.as_deref(), &body),
        Err(e) => Reply::error(400, None, format!("unreadable body: {e}")),
    };
    let mut response = tiny_http::Response::from_data(reply.body)
        .with_status_code(reply.status)
        .with_header(tiny_http::Header::from_bytes("Content-Type", reply.content_type).expect("static header"));
    if let Some(id) = reply.request_id {
        if let Ok(h) = tiny_http::Header::from_bytes(REQUEST_ID_HEADER, id.as_bytes()) {
            response.add_header(h);
        }
    }
    let _ = request.respond(response);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_and_status_codes() {
        let mut s = MockState::new(MockAdapterConfig {
            token: Some("t".into()),
            unavailable: vec!["/embed_image".into()],
            ..MockAdapterConfig::default()
        });
        assert_eq!(s.handle("GET", "/health", None, b"").status, 401);
        assert_eq!(s.handle("GET", "/health", Some("t"), b"").status, 200);
        assert_eq!(s.handle("GET", "/nope", Some("t"), b"").status, 404);
        assert_eq!(s.handle("GET", "/detect", Some("t"), b"").status, 405);
        assert_eq!(s.handle("POST", "/info", Some("t"), b"").status, 405);
        assert_eq!(s.handle("POST", "/embed_image", Some("t"), b"{}").status, 503);
        let r = s.handle("POST", "/detect", Some("t"), br#"{"request_id":"x","image":"#);
        assert_eq!(r.status, 400);
    }

    #[test]
    fn chat_requires_resolvable_images() {
        use structcap_core::chat::{BackendConfig, ChatRequest, ChatTurn, ImageRef};
        let mut s = MockState::new(MockAdapterConfig::default());
        let turns = vec![
            ChatTurn::system("s"),
            ChatTurn::user_with_images(
                "look",
                vec![ImageRef {
                    clip: "frames".into(),
                    frame_index: 0,
                }],
            ),
        ];
        let bundle = PromptBundle::new(turns, ExpectedFormat::FreeText, 0).unwrap();
        let mut req = ChatWireRequest {
            request_id: "c1".into(),
            chat: ChatRequest::new("global", &bundle, &BackendConfig::default()),
            image_data: vec![],
        };
        let r = s.handle("POST", "/chat", None, &serde_json::to_vec(&req).unwrap());
        assert_eq!(r.status, 400);
        req.image_data.push(WireFrame {
            clip: "frames".into(),
            frame_index: 0,
            image: WireImage::encode(&RgbImage::new(2, 2)),
        });
        let r = s.handle("POST", "/chat", None, &serde_json::to_vec(&req).unwrap());
        assert_eq!(r.status, 200);
        let reply: ChatWireReply = serde_json::from_slice(&r.body).unwrap();
        assert_eq!(reply.text, "look");
        assert_eq!(s.chat_log().len(), 1);
    }
}
