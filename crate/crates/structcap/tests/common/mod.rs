#![allow(dead_code)]

use std::path::{Path, PathBuf};

use structcap::config::RunConfig;
use structcap::fixtures::{moving_square_adapter, moving_square_script, write_moving_square, FRAMES};
use structcap_core::chat::MockScript;
use structcap_core::sampling::uniform_indices;

pub const SAMPLES: usize = 8;

pub fn write_json(path: &Path, v: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
}

/// Writes the moving-square clip and both scripts under `root`; returns the
/// clip directory and a config that captions it with scripted mocks.
pub fn moving_square_setup(root: &Path) -> (PathBuf, RunConfig) {
    let video = root.join("square");
    write_moving_square(&video).unwrap();
    let indices = uniform_indices(FRAMES, SAMPLES).unwrap();
    write_json(&root.join("adapter.json"), &moving_square_adapter(&indices));
    write_json(&root.join("chat.json"), &moving_square_script());
    (video, config(root, "adapter.json", "chat.json"))
}

pub fn config(root: &Path, adapter: &str, chat: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.samples = SAMPLES;
    cfg.output_dir = root.join("out");
    cfg.adapter.endpoint = "scripted".into();
    cfg.adapter.script = Some(root.join(adapter));
    cfg.backend.endpoint = "mock".into();
    cfg.backend.script = Some(root.join(chat));
    cfg.validate().unwrap();
    cfg
}

pub fn with_chat_script(root: &Path, cfg: &mut RunConfig, name: &str, script: &MockScript) {
    write_json(&root.join(name), script);
    cfg.backend.script = Some(root.join(name));
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
