//! Independent reference implementations and case generators shared by the
//! integration tests and the acceptance report.

#![allow(dead_code)]

use proptest::prelude::*;
use structcap_core::caption::{parse_caption, render_caption, RenderStyle};
use structcap_core::camera::CameraMovement;
use structcap_core::chat::{MockChat, MockScript};
use structcap_core::enhancer::{
    Enhancer, EnhancerConfig, Stage, FLAG_CONTENT_DROP, FLAG_UNGROUNDED_MENTION, OP_STAGE_A, OP_STAGE_B_INSTANCE, OP_STAGE_B_SCENE,
    OP_STAGE_B_SEGMENT,
};
use structcap_core::image::{Mask, RgbImage};
use structcap_core::metrics::{LatentTensor, LayerWeight, LayerWeights};
use structcap_core::prompts::PromptPack;

// ---- metrics ------------------------------------------------------------

/// Five nested loops, weights looked up by explicit broadcasting.
pub fn vae_oracle(a: &LatentTensor, b: &LatentTensor, w: &LayerWeights) -> f64 {
    let [nl, nt, nh, nw, nc] = a.shape();
    let mut total = 0.0;
    for l in 0..nl {
        let lw = &w.0[l];
        for t in 0..nt {
            for h in 0..nh {
                for x in 0..nw {
                    for c in 0..nc {
                        let pick = |dim: usize, i: usize| if lw.shape[dim] == 1 { 0 } else { i };
                        let (wh, ww, wc) = (pick(0, h), pick(1, x), pick(2, c));
                        let weight = lw.values[wh * lw.shape[1] * lw.shape[2] + ww * lw.shape[2] + wc];
                        let diff = a.get(l, t, h, x, c) as f64 - b.get(l, t, h, x, c) as f64;
                        total += (weight * diff).powi(2);
                    }
                }
            }
        }
    }
    total
}

/// Plain two-level arithmetic mean.
pub fn senbysen_oracle(rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).sum::<f64>() / rows.len() as f64
}

pub fn latent_pair() -> impl Strategy<Value = (LatentTensor, LatentTensor, LayerWeights)> {
    (1usize..3, 1usize..4, 1usize..4, 1usize..4, 1usize..5)
        .prop_flat_map(|(l, t, h, w, c)| {
            let n = l * t * h * w * c;
            (
                Just([l, t, h, w, c]),
                prop::collection::vec(-10.0f32..10.0, n),
                prop::collection::vec(-10.0f32..10.0, n),
                prop::collection::vec(layer_weight(h, w, c), l),
            )
        })
        .prop_map(|(shape, a, b, w)| {
            (
                LatentTensor::new(shape, a).unwrap(),
                LatentTensor::new(shape, b).unwrap(),
                LayerWeights(w),
            )
        })
}

fn layer_weight(h: usize, w: usize, c: usize) -> impl Strategy<Value = LayerWeight> {
    prop_oneof![
        (0.0f64..3.0).prop_map(LayerWeight::scalar),
        prop::collection::vec(0.0f64..3.0, c).prop_map(LayerWeight::per_channel),
        prop::collection::vec(0.0f64..3.0, h * w * c).prop_map(move |v| LayerWeight::full(h, w, c, v)),
    ]
}

pub fn similarity_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..12, 1usize..16)
        .prop_flat_map(|(s, f)| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, f), s))
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

// ---- blur ---------------------------------------------------------------

/// Mirror fold by repeated reflection: `... c b a | a b c d | d c b ...`.
fn fold(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian in f64 over a mirror-folded neighbourhood.
pub fn blur_oracle(img: &RgbImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = ((3.0 * sigma).ceil() as i64).max(1);
    let raw: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = raw.iter().sum();
    let taps: Vec<f64> = raw.iter().map(|t| t / norm).collect();
    let mut tmp = vec![0.0f64; (w * h * 3) as usize];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sx = fold(x + k as i64 - r, w) as u32;
                    acc += t * img.pixel(sx, y as u32)[c] as f64;
                }
                tmp[((y * w + x) * 3) as usize + c] = acc;
            }
        }
    }
    let mut out = vec![0.0f64; tmp.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sy = fold(y + k as i64 - r, h) as i64;
                    acc += t * tmp[((sy * w + x) * 3) as usize + c];
                }
                out[((y * w + x) * 3) as usize + c] = acc;
            }
        }
    }
    out
}

pub fn image(max: u32) -> impl Strategy<Value = RgbImage> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h * 3) as usize)
            .prop_map(move |data| RgbImage::from_raw(w, h, data).unwrap())
    })
}

pub fn image_and_mask(max: u32) -> impl Strategy<Value = (RgbImage, Mask)> {
    image(max).prop_flat_map(|img| {
        let (w, h) = img.dimensions();
        prop::collection::vec(any::<bool>(), (w * h) as usize)
            .prop_map(move |bits| (img.clone(), Mask::from_bits(w, h, bits).unwrap()))
    })
}

// ---- camera -------------------------------------------------------------

/// Smooth texture: a few incommensurate sinusoids, so block matching has a
/// unique optimum within a small search window.
pub fn texture(x: f64, y: f64) -> f64 {
    128.0
        + 40.0 * (x * 0.31 + y * 0.07).sin()
        + 35.0 * (y * 0.23 - x * 0.11).sin()
        + 25.0 * (x * 0.17 + y * 0.19 + 1.3).cos()
        + 15.0 * ((x * 0.53).sin() * (y * 0.47).cos())
}

/// Frame whose pixel `(x, y)` shows the texture at `map(x, y)`.
pub fn render(w: u32, h: u32, map: impl Fn(f64, f64) -> (f64, f64)) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let (u, v) = map(x as f64, y as f64);
        let g = texture(u, v).round().clamp(0.0, 255.0) as u8;
        [g, g, g]
    })
}

// ---- enhancer -----------------------------------------------------------

const SUBJECTS: &[(&str, &str, &str)] = &[
    ("a tabby cat", "cat", "naps on a windowsill"),
    ("an elderly man", "person", "reads a newspaper"),
    ("a red kite", "kite", "dances in the wind"),
    ("a golden retriever", "dog", "chases a ball"),
    ("a vintage car", "car", "rolls down the street"),
    ("a young girl", "person", "waves at the camera"),
    ("a wooden boat", "boat", "drifts on the lake"),
    ("a grey heron", "bird", "wades through reeds"),
];

const PHANTOMS: &[(&str, &str)] = &[("a purple giraffe", "giraffe"), ("the silver robot", "robot")];

const WORDS: &[&str] = &[
    "quiet", "bright", "morning", "scene", "soft", "light", "falls", "across", "open", "space", "gentle", "breeze",
];

#[derive(Debug, Clone)]
pub struct EnhancerCase {
    pub short: String,
    pub dense: String,
    /// Listed `(mention, class, grounded)` in reply order.
    pub listed: Vec<(String, String, bool)>,
    pub list_reply: String,
    pub garbled_list_first: bool,
    pub global: String,
    pub background: String,
    pub camera: CameraMovement,
    pub instance_fields: Vec<[String; 3]>,
    pub drop_word: bool,
}

pub fn enhancer_case() -> impl Strategy<Value = EnhancerCase> {
    (
        prop::sample::subsequence((0..SUBJECTS.len()).collect::<Vec<_>>(), 0..=4).prop_shuffle(),
        prop::collection::vec(any::<bool>(), 8),
        prop::sample::subsequence(vec![0usize, 1], 0..=2),
        prop::sample::select(vec!["\u{2014}", "\u{2013}", " -- ", " - "]),
        prop::sample::select(vec!["", "- ", "* ", "1. "]),
        any::<bool>(),
        prop::collection::vec(prop::sample::select(WORDS.to_vec()), 3..20),
        prop::sample::select(CameraMovement::ALL.iter().copied().filter(|m| *m != CameraMovement::Unknown).collect::<Vec<_>>()),
        any::<bool>(),
    )
        .prop_map(|(subjects, caps, phantoms, sep, marker, garbled, global_words, camera, drop_word)| {
            let mut dense = String::from("Under a pale sky, ");
            let mut listed = Vec::new();
            for (n, &k) in subjects.iter().enumerate() {
                let (mention, class, action) = SUBJECTS[k];
                dense.push_str(&format!("{mention} {action}"));
                dense.push_str(if n + 1 == subjects.len() { ". " } else { ", and " });
                // The listed span may differ in ASCII case from the dense text.
                let shown = if caps[n] { mention.to_uppercase() } else { mention.to_string() };
                listed.push((shown, class.to_string(), true));
            }
            dense.push_str("The light is soft and warm.");
            for &p in &phantoms {
                let (mention, class) = PHANTOMS[p];
                let at = p.min(listed.len());
                listed.insert(at, (mention.to_string(), class.to_string(), false));
            }
            let list_reply = if listed.is_empty() {
                "NONE".to_string()
            } else {
                listed
                    .iter()
                    .map(|(m, c, _)| format!("{marker}{m}{sep}{c}"))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let short_subjects: Vec<&str> = subjects
                .iter()
                .map(|&k| SUBJECTS[k].0.rsplit(' ').next().unwrap())
                .collect();
            let mut short = format!("pale sky {}", short_subjects.join(" and "));
            if drop_word {
                short.push_str(" tomorrow");
            }
            let instance_fields = (0..subjects.len())
                .map(|k| {
                    [
                        format!("Looks like subject {k}."),
                        format!("Moves in pattern {k}."),
                        format!("Zone {k}."),
                    ]
                })
                .collect();
            EnhancerCase {
                short,
                dense,
                listed,
                list_reply,
                garbled_list_first: garbled,
                global: global_words.join(" "),
                background: "A pale sky over open ground.".into(),
                camera,
                instance_fields,
                drop_word,
            }
        })
}

impl EnhancerCase {
    pub fn script(&self) -> MockScript {
        let mut s = MockScript::new().then(OP_STAGE_A, self.dense.as_str());
        if self.garbled_list_first {
            s = s.then(OP_STAGE_B_SEGMENT, "Here are the subjects I noticed in the text");
        }
        s = s.then(OP_STAGE_B_SEGMENT, self.list_reply.as_str()).then(
            OP_STAGE_B_SCENE,
            format!(
                "GLOBAL: {}\nBACKGROUND: {}\nCAMERA: {}, steady",
                self.global,
                self.background,
                self.camera.as_str()
            )
            .as_str(),
        );
        for (k, [a, m, p]) in self.instance_fields.iter().enumerate() {
            s = s.then(
                &format!("{OP_STAGE_B_INSTANCE}:{k}"),
                format!("APPEARANCE: {a}\nACTIONS_MOTION: {m}\nPOSITION: {p}").as_str(),
            );
        }
        s
    }

    /// Spans a case-insensitive search of the dense prompt would return.
    fn expected_mentions(&self) -> Vec<(String, String)> {
        let lower = self.dense.to_ascii_lowercase();
        let mut out: Vec<(String, String)> = Vec::new();
        for (m, c, _) in &self.listed {
            if let Some(at) = lower.find(&m.to_ascii_lowercase()) {
                let span = self.dense[at..at + m.len()].to_string();
                if !out.iter().any(|(s, _)| *s == span) {
                    out.push((span, c.clone()));
                }
            }
        }
        out
    }
}

/// Runs one scripted job through all three stages and checks ordering,
/// grounding and lossless rendering.
pub fn check_enhancer_case(case: &EnhancerCase) -> Result<(), String> {
    let cfg = EnhancerConfig {
        style: RenderStyle::Structured,
        ..EnhancerConfig::default()
    };
    let mut e = Enhancer::new(MockChat::new(case.script()), PromptPack::default(), cfg);
    let (text, job) = e.enhance(&case.short).map_err(|err| format!("enhance failed: {err}"))?;

    let stages: Vec<Stage> = job.stage_log.iter().map(|s| s.stage).collect();
    if stages != [Stage::Expand, Stage::Segment, Stage::Enhance] {
        return Err(format!("stage order {stages:?}"));
    }
    if job.stage_log.iter().any(|s| s.transcript_hash.len() != 64) {
        return Err("stage transcript hash is not a sha256 hex digest".into());
    }
    let ops: Vec<&str> = e.records().iter().map(|r| r.operation.as_str()).collect();
    let first = |p: &str| ops.iter().position(|o| o.starts_with(p));
    let last = |p: &str| ops.iter().rposition(|o| o.starts_with(p));
    if !(last(OP_STAGE_A) < first(OP_STAGE_B_SEGMENT) && last(OP_STAGE_B_SEGMENT) < first(OP_STAGE_B_SCENE)) {
        return Err(format!("call order {ops:?}"));
    }

    let dense = job.dense_prompt.as_deref().ok_or("no dense prompt")?;
    let list = job.instance_list.as_ref().ok_or("no instance list")?;
    let want = case.expected_mentions();
    let got: Vec<(String, String)> = list.iter().map(|m| (m.mention.clone(), m.class_name.clone())).collect();
    if got != want {
        return Err(format!("grounded mentions {got:?}, expected {want:?}"));
    }
    if let Some(m) = list.iter().find(|m| !dense.contains(&m.mention)) {
        return Err(format!("mention {:?} is not a span of the dense prompt", m.mention));
    }
    let ungrounded = case.listed.iter().any(|l| !l.2);
    if job.has_flag(FLAG_UNGROUNDED_MENTION) != ungrounded {
        return Err(format!("ungrounded flag {} but expected {ungrounded}", !ungrounded));
    }
    if job.has_flag(FLAG_CONTENT_DROP) != case.drop_word {
        return Err(format!("content_drop flag mismatch, missing {:?}", job.missing_content_words));
    }

    let caption = job.final_caption.as_ref().ok_or("no caption")?;
    if caption.instances.len() != want.len() {
        return Err(format!("{} instances for {} mentions", caption.instances.len(), want.len()));
    }
    for (k, (inst, (_, class))) in caption.instances.iter().zip(&want).enumerate() {
        let fields = &case.instance_fields[k];
        if inst.id != format!("i{k}") || inst.class_name != *class {
            return Err(format!("instance {k} is {}/{}", inst.id, inst.class_name));
        }
        if [&inst.appearance, &inst.actions_motion, &inst.position] != [&fields[0], &fields[1], &fields[2]] {
            return Err(format!("instance {k} fields {inst:?}"));
        }
    }
    if caption.global_summary != case.global || caption.camera.basic_movement != case.camera {
        return Err(format!("scene fields {:?} / {:?}", caption.global_summary, caption.camera));
    }

    let back = parse_caption(&text).map_err(|err| format!("rendered caption does not parse: {err}"))?;
    if &back != caption {
        return Err("render/parse round trip changed the caption".into());
    }
    if render_caption(&back, RenderStyle::Structured) != text {
        return Err("re-rendering the parsed caption changed the text".into());
    }
    Ok(())
}
