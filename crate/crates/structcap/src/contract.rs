//! Contract suite for model-adapter services.
//!
//! [`run_contract_suite`] drives any deployment (the in-process mock or a
//! real service) through the same requests and checks status codes and
//! reply bodies against the OpenAPI document shipped in [`OPENAPI_JSON`].

use std::time::Duration;

use serde_json::{json, Value};
use structcap_core::image::RgbImage;

use crate::tensor::Tensor;
use crate::wire::{InfoReply, WireImage, TOKEN_HEADER};

pub const OPENAPI_JSON: &str = include_str!("../openapi.json");

pub fn openapi() -> Value {
    serde_json::from_str(OPENAPI_JSON).expect("shipped OpenAPI document is valid JSON")
}

fn resolve<'a>(schema: &'a Value, root: &'a Value) -> Result<&'a Value, String> {
    match schema.get("$ref").and_then(Value::as_str) {
        Some(r) => {
            let ptr = r.strip_prefix('#').ok_or_else(|| format!("external $ref {r}"))?;
            root.pointer(ptr).ok_or_else(|| format!("dangling $ref {r}"))
        }
        None => Ok(schema),
    }
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "integer" => v.is_u64() || v.is_i64(),
        "number" => v.is_number(),
        "boolean" => v.is_boolean(),
        _ => false,
    }
}

/// Validates `value` against the subset of OpenAPI schema keywords the
/// contract uses: `$ref`, `type`, `nullable`, `enum`, `properties`,
/// `required`, `additionalProperties: false`, `items`, `minItems`,
/// `maxItems`, `minimum`, `maximum`, `minLength`.
pub fn validate(schema: &Value, value: &Value, root: &Value, at: &str) -> Result<(), String> {
    let schema = resolve(schema, root)?;
    if value.is_null() && schema.get("nullable").and_then(Value::as_bool) == Some(true) {
        return Ok(());
    }
    if let Some(ty) = schema.get("type").and_then(Value::as_str) {
        if !type_matches(ty, value) {
            return Err(format!("{at}: expected {ty}, got {value}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(format!("{at}: {value} not in {options:?}"));
        }
    }
    if let (Some(min), Some(v)) = (schema.get("minimum").and_then(Value::as_f64), value.as_f64()) {
        if v < min {
            return Err(format!("{at}: {v} < minimum {min}"));
        }
    }
    if let (Some(max), Some(v)) = (schema.get("maximum").and_then(Value::as_f64), value.as_f64()) {
        if v > max {
            return Err(format!("{at}: {v} > maximum {max}"));
        }
    }
    if let (Some(min), Some(s)) = (schema.get("minLength").and_then(Value::as_u64), value.as_str()) {
        if (s.chars().count() as u64) < min {
            return Err(format!("{at}: shorter than {min}"));
        }
    }
    if let Some(obj) = value.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        for req in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = req.as_str().unwrap_or_default();
            if !obj.contains_key(key) {
                return Err(format!("{at}: missing required field {key}"));
            }
        }
        for (k, v) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(s) => validate(s, v, root, &format!("{at}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{at}: unexpected field {k}"))
                }
                None => {}
            }
        }
    }
    if let Some(items) = value.as_array() {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                return Err(format!("{at}: fewer than {min} items"));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > max {
                return Err(format!("{at}: more than {max} items"));
            }
        }
        if let Some(s) = schema.get("items") {
            for (i, v) in items.iter().enumerate() {
                validate(s, v, root, &format!("{at}[{i}]"))?;
            }
        }
    }
    Ok(())
}

/// The schema a `method path` reply with `status` must satisfy, if JSON.
pub fn response_schema(doc: &Value, method: &str, path: &str, status: u16) -> Option<Value> {
    let resp = doc.pointer(&format!("/paths/{}/{method}/responses/{status}", path.replace('/', "~1")))?;
    resp.pointer("/content/application~1json/schema").cloned()
}

pub fn request_schema(doc: &Value, path: &str) -> Option<Value> {
    doc.pointer(&format!(
        "/paths/{}/post/requestBody/content/application~1json/schema",
        path.replace('/', "~1")
    ))
    .cloned()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Exchange {
    status: u16,
    body: Vec<u8>,
    request_id: Option<String>,
}

impl Exchange {
    fn json(&self) -> Result<Value, String> {
        serde_json::from_slice(&self.body).map_err(|e| format!("reply is not JSON: {e}"))
    }
}

struct Driver {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
    doc: Value,
}

impl Driver {
    fn send(&self, method: &str, path: &str, body: Option<&[u8]>) -> Result<Exchange, String> {
        let url = format!("{}{path}", self.base);
        let resp = match (method, body) {
            ("GET", _) => {
                let mut r = self.agent.get(&url);
                if let Some(t) = &self.token {
                    r = r.header(TOKEN_HEADER, t);
                }
                r.call()
            }
            (_, body) => {
                let mut r = self.agent.post(&url).header("Content-Type", "application/json");
                if let Some(t) = &self.token {
                    r = r.header(TOKEN_HEADER, t);
                }
                r.send(body.unwrap_or_default())
            }
        };
        let mut resp = resp.map_err(|e| format!("transport: {e}"))?;
        let status = resp.status().as_u16();
        let request_id = resp
            .headers()
            .get(crate::wire::REQUEST_ID_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = resp
            .body_mut()
            .with_config()
            .limit(512 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| format!("body: {e}"))?;
        Ok(Exchange { status, body, request_id })
    }

    /// Sends a JSON body after checking it against the request schema.
    fn post(&self, path: &str, body: &Value) -> Result<Exchange, String> {
        if let Some(schema) = request_schema(&self.doc, path) {
            validate(&schema, body, &self.doc, "request")?;
        }
        self.send("POST", path, Some(&serde_json::to_vec(body).expect("json")))
    }

    /// Checks the status and, for JSON replies, the documented schema.
    fn expect(&self, method: &str, path: &str, ex: &Exchange, status: u16) -> Result<Value, String> {
        if ex.status != status {
            return Err(format!(
                "{method} {path}: status {} (expected {status}): {}",
                ex.status,
                String::from_utf8_lossy(&ex.body)
            ));
        }
        let documented = self
            .doc
            .pointer(&format!("/paths/{}/{method}/responses/{status}", path.replace('/', "~1")));
        if documented.is_none() && status != 404 {
            return Err(format!("{method} {path}: status {status} is not documented"));
        }
        let schema = response_schema(&self.doc, method, path, status)
            .or_else(|| (status >= 400).then(|| json!({"$ref": "#/components/schemas/ErrorReply"})));
        match schema {
            Some(s) => {
                let v = ex.json()?;
                validate(&s, &v, &self.doc, "reply")?;
                Ok(v)
            }
            None => Ok(Value::Null),
        }
    }
}

fn blank(w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| [40, 40, 40])
}

/// 32x32 dark frame with an 8x8 red square whose left edge is at `x`.
pub fn square_frame(x: u32) -> RgbImage {
    RgbImage::from_fn(32, 32, |px, py| {
        if (x..x + 8).contains(&px) && (12..20).contains(&py) {
            [220, 30, 30]
        } else {
            [40, 40, 40]
        }
    })
}

fn img(i: &RgbImage) -> Value {
    serde_json::to_value(WireImage::encode(i)).expect("json")
}

fn norm(v: &Value) -> f64 {
    v.as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).map(|x| x * x).sum::<f64>().sqrt())
        .unwrap_or(0.0)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn iou(a: &structcap_core::image::Mask, b: &structcap_core::image::Mask) -> f64 {
    let inter = a.bits().iter().zip(b.bits()).filter(|(x, y)| **x && **y).count();
    let union = a.bits().iter().zip(b.bits()).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

type Case = (&'static str, fn(&Driver) -> Result<(), String>);

const CASES: &[Case] = &[
    ("health is ok", |d| {
        let ex = d.send("GET", "/health", None)?;
        d.expect("get", "/health", &ex, 200).map(|_| ())
    }),
    ("info declares every endpoint", |d| {
        let ex = d.send("GET", "/info", None)?;
        let v = d.expect("get", "/info", &ex, 200)?;
        let info: InfoReply = serde_json::from_value(v).map_err(|e| e.to_string())?;
        let missing: Vec<_> = crate::services::ENDPOINTS
            .iter()
            .filter(|e| !info.endpoints.iter().any(|x| x == *e))
            .collect();
        ensure(missing.is_empty(), || format!("info omits {missing:?}"))
    }),
    ("unknown path is 404", |d| {
        let ex = d.send("GET", "/no-such-endpoint", None)?;
        d.expect("get", "/no-such-endpoint", &ex, 404).map(|_| ())
    }),
    ("detect on a blank image finds nothing", |d| {
        let ex = d.post("/detect", &json!({"request_id": "c-detect", "image": img(&blank(32, 32))}))?;
        let v = d.expect("post", "/detect", &ex, 200)?;
        ensure(v["request_id"] == "c-detect", || "request id not echoed".into())?;
        ensure(v["detections"].as_array().is_some_and(Vec::is_empty), || format!("got {}", v["detections"]))
    }),
    ("detect boxes lie inside the frame", |d| {
        let ex = d.post("/detect", &json!({"request_id": "c-detect-sq", "image": img(&square_frame(6))}))?;
        let v = d.expect("post", "/detect", &ex, 200)?;
        for det in v["detections"].as_array().into_iter().flatten() {
            let b: Vec<u64> = det["bbox"].as_array().into_iter().flatten().filter_map(Value::as_u64).collect();
            ensure(b.len() == 4 && b[0] < b[2] && b[2] <= 32 && b[1] < b[3] && b[3] <= 32, || {
                format!("box {b:?} outside a 32x32 frame")
            })?;
        }
        Ok(())
    }),
    ("truncated detect payload is 400", |d| {
        let ex = d.send("POST", "/detect", Some(br#"{"request_id": "c-trunc", "image": {"wid"#))?;
        d.expect("post", "/detect", &ex, 400).map(|_| ())
    }),
    ("undecodable image is 400", |d| {
        let body = json!({"request_id": "c-badpng", "image": {"width": 2, "height": 2, "png_base64": "AAAA"}});
        let ex = d.post("/detect", &body)?;
        d.expect("post", "/detect", &ex, 400).map(|_| ())
    }),
    ("segment with no seeds returns no tracks", |d| {
        let body = json!({"request_id": "c-seg0", "frames": [img(&square_frame(4))], "seeds": []});
        let ex = d.post("/segment", &body)?;
        let v = d.expect("post", "/segment", &ex, 200)?;
        ensure(v["tracks"].as_array().is_some_and(Vec::is_empty), || "expected no tracks".into())
    }),
    ("segment follows the moving square", |d| {
        let xs = [4u32, 10, 16];
        let frames: Vec<Value> = xs.iter().map(|x| img(&square_frame(*x))).collect();
        let seed = json!({"class_name": "square", "confidence": 0.9, "bbox": [4, 12, 12, 20]});
        let ex = d.post("/segment", &json!({"request_id": "c-seg", "frames": frames, "seeds": [seed]}))?;
        let v = d.expect("post", "/segment", &ex, 200)?;
        let reply: crate::wire::SegmentReply = serde_json::from_value(v).map_err(|e| e.to_string())?;
        ensure(reply.tracks.len() == 1, || format!("{} tracks for one seed", reply.tracks.len()))?;
        ensure(reply.tracks[0].masks.len() == xs.len(), || "one mask per frame".into())?;
        for (m, x) in reply.tracks[0].masks.iter().zip(xs) {
            let m = m.decode()?;
            let truth = structcap_core::image::Mask::from_rect(32, 32, [x, 12, x + 8, 20].into());
            let score = iou(&m, &truth);
            ensure(score >= 0.5, || format!("IoU {score:.2} at x={x}"))?;
        }
        Ok(())
    }),
    ("segment rejects a malformed box", |d| {
        let seed = json!({"class_name": "square", "confidence": 0.9, "bbox": [12, 12, 4, 20]});
        let body = json!({"request_id": "c-segbad", "frames": [img(&square_frame(4))], "seeds": [seed]});
        let ex = d.post("/segment", &body)?;
        d.expect("post", "/segment", &ex, 400).map(|_| ())
    }),
    ("text embeddings are unit norm and deterministic", |d| {
        let info: InfoReply =
            serde_json::from_value(d.expect("get", "/info", &d.send("GET", "/info", None)?, 200)?).map_err(|e| e.to_string())?;
        let body = json!({"request_id": "c-et", "texts": ["a red square", "a red square", "a blue circle"]});
        let v = d.expect("post", "/embed_text", &d.post("/embed_text", &body)?, 200)?;
        let vs = v["vectors"].as_array().cloned().unwrap_or_default();
        ensure(vs.len() == 3 && v["shape"] == json!([3, info.embedding_dim]), || format!("shape {}", v["shape"]))?;
        for x in &vs {
            ensure((norm(x) - 1.0).abs() <= 1e-4, || format!("norm {}", norm(x)))?;
            ensure(x.as_array().map(Vec::len) == Some(info.embedding_dim), || "dimension differs from info".into())?;
        }
        ensure(vs[0] == vs[1], || "identical texts embed differently".into())
    }),
    ("empty text list is 400", |d| {
        let ex = d.send("POST", "/embed_text", Some(br#"{"request_id": "c-et0", "texts": []}"#))?;
        d.expect("post", "/embed_text", &ex, 400).map(|_| ())
    }),
    ("image embeddings are unit norm", |d| {
        let body = json!({"request_id": "c-ei", "images": [img(&square_frame(4)), img(&blank(16, 16))]});
        let v = d.expect("post", "/embed_image", &d.post("/embed_image", &body)?, 200)?;
        let vs = v["vectors"].as_array().cloned().unwrap_or_default();
        ensure(vs.len() == 2, || "one vector per image".into())?;
        vs.iter()
            .try_for_each(|x| ensure((norm(x) - 1.0).abs() <= 1e-4, || format!("norm {}", norm(x))))
    }),
    ("latents match the declared shape and repeat exactly", |d| {
        let info: InfoReply =
            serde_json::from_value(d.expect("get", "/info", &d.send("GET", "/info", None)?, 200)?).map_err(|e| e.to_string())?;
        let frames: Vec<Value> = [4u32, 8, 12].iter().map(|x| img(&square_frame(*x))).collect();
        let body = json!({"request_id": "c-vae", "frames": frames});
        let a = d.post("/vae_latent", &body)?;
        d.expect("post", "/vae_latent", &a, 200)?;
        ensure(a.request_id.as_deref() == Some("c-vae"), || "request id header not echoed".into())?;
        let t = Tensor::decode(&a.body).map_err(|e| e.to_string())?;
        ensure(t.shape == info.latent.shape(3).to_vec(), || format!("shape {:?}", t.shape))?;
        ensure(t.data.iter().all(|v| v.is_finite()), || "non-finite latent".into())?;
        let b = d.post("/vae_latent", &body)?;
        ensure(a.body == b.body, || "same clip gave different bytes".into())
    }),
    ("latents of no frames is 400", |d| {
        let ex = d.send("POST", "/vae_latent", Some(br#"{"request_id": "c-vae0", "frames": []}"#))?;
        d.expect("post", "/vae_latent", &ex, 400).map(|_| ())
    }),
    ("chat replies with text and echoes the id", |d| {
        let body = json!({
            "request_id": "c-chat", "model": "default", "temperature": 0.0, "seed": 7, "max_tokens": 64,
            "turns": [{"role": "system", "text": "Be brief."}, {"role": "user", "text": "Say hi.",
                "images": [{"clip": "frames", "frame_index": 0}]}],
            "image_data": [{"clip": "frames", "frame_index": 0, "image": img(&square_frame(4))}]
        });
        let v = d.expect("post", "/chat", &d.post("/chat", &body)?, 200)?;
        ensure(v["request_id"] == "c-chat", || "request id not echoed".into())
    }),
    ("chat without a system turn is 400", |d| {
        let body = json!({
            "request_id": "c-chatbad", "model": "default", "temperature": 0.0, "seed": null, "max_tokens": 64,
            "turns": [{"role": "user", "text": "hi"}]
        });
        let ex = d.post("/chat", &body)?;
        d.expect("post", "/chat", &ex, 400).map(|_| ())
    }),
];

/// Runs every contract case against `base_url`. Cases are independent;
/// one failure never stops the rest.
pub fn run_contract_suite(base_url: &str, token: Option<&str>) -> Vec<ContractOutcome> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .http_status_as_error(false)
        .build()
        .into();
    let driver = Driver {
        base: base_url.trim_end_matches('/').to_string(),
        token: token.map(str::to_string),
        agent,
        doc: openapi(),
    };
    CASES
        .iter()
        .map(|(name, case)| {
            let result = case(&driver);
            ContractOutcome {
                name,
                passed: result.is_ok(),
                detail: result.err().unwrap_or_default(),
            }
        })
        .collect()
}
