use structcap::config::{ConfigError, ProviderKind, RunConfig};
use structcap::packs::{assets, load_assets, Assets};

#[test]
fn relative_paths_follow_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let sub = tmp.path().join("conf");
    std::fs::create_dir_all(&sub).unwrap();
    std::fs::write(sub.join("chat.json"), "{}").unwrap();
    std::fs::write(
        sub.join("run.toml"),
        "output_dir = \"../captions\"\n[backend]\nendpoint = \"mock\"\nscript = \"chat.json\"\n",
    )
    .unwrap();
    let cfg = RunConfig::load(&sub.join("run.toml")).unwrap();
    assert_eq!(cfg.backend.script.as_deref(), Some(sub.join("chat.json").as_path()));
    assert_eq!(cfg.output_dir, sub.join("../captions"));
    cfg.validate().unwrap();
}

#[test]
fn load_errors_name_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "samples = \"eight\"\n").unwrap();
    match RunConfig::load(&path) {
        Err(ConfigError::File { path: p, .. }) => assert!(p.ends_with("bad.toml")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn command_provider_needs_templates() {
    let mut cfg = RunConfig::from_toml("[input]\nprovider = \"command\"\n[backend]\nendpoint = \"http://x\"\n").unwrap();
    assert_eq!(cfg.input.provider, ProviderKind::Command);
    assert!(cfg.validate().is_err());
    cfg.input.probe_command = vec!["ffprobe".into(), "{input}".into()];
    cfg.input.decode_command = vec!["ffmpeg".into(), "{input}".into()];
    cfg.validate().unwrap();
}

#[test]
fn every_env_override_applies() {
    let mut cfg = RunConfig::default();
    cfg.apply_env(|k| Some(format!("v-{k}")));
    assert_eq!(cfg.adapter.endpoint, "v-STRUCTCAP_ADAPTER_URL");
    assert_eq!(cfg.adapter.token.as_deref(), Some("v-STRUCTCAP_ADAPTER_TOKEN"));
    assert_eq!(cfg.backend.endpoint, "v-STRUCTCAP_BACKEND_URL");
    assert_eq!(cfg.backend.token.as_deref(), Some("v-STRUCTCAP_BACKEND_TOKEN"));
    assert_eq!(cfg.backend.model, "v-STRUCTCAP_BACKEND_MODEL");
}

#[test]
fn prompt_pack_directory_overrides() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../prompts");
    assert_eq!(load_assets(&root).unwrap().pack.hash(), Assets::default().pack.hash());

    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&root, tmp.path());
    let global = tmp.path().join("global.txt");
    let text = std::fs::read_to_string(&global).unwrap();
    std::fs::write(&global, format!("{text}\nKeep it short.\n")).unwrap();
    let changed = assets(Some(tmp.path())).unwrap();
    assert_ne!(changed.pack.hash(), Assets::default().pack.hash());
    assert!(changed.pack.global.contains("Keep it short."));
}

fn copy_dir(from: &std::path::Path, to: &std::path::Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            std::fs::copy(&p, &dest).unwrap();
        }
    }
}
