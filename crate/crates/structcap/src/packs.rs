//! Loading prompt packs, class hints and lexicons from disk.

use std::path::Path;

use structcap_core::hints::{ClassHintRegistry, Lexicon};
use structcap_core::prompts::{PromptPack, PACK_FILES};

#[derive(Debug, thiserror::Error)]
pub enum PackLoadError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("prompt pack: {0}")]
    Pack(#[from] structcap_core::prompts::PromptError),
    #[error("{0}")]
    Hints(#[from] structcap_core::hints::PackError),
}

/// Everything the orchestrator and enhancer read from a pack root.
#[derive(Debug, Clone, PartialEq)]
pub struct Assets {
    pub pack: PromptPack,
    pub hints: ClassHintRegistry,
    pub lexicon: Lexicon,
}

impl Default for Assets {
    fn default() -> Self {
        Self {
            pack: PromptPack::default(),
            hints: ClassHintRegistry::default(),
            lexicon: Lexicon::default(),
        }
    }
}

fn read(path: &Path) -> Result<String, PackLoadError> {
    std::fs::read_to_string(path).map_err(|e| PackLoadError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Loads a pack laid out like the shipped `prompts/` directory. Every file
/// in [`PACK_FILES`] plus `lexicon/positive.txt` and `lexicon/negative.txt`
/// must exist; few-shot examples are `enhancer/examples/*.txt` in name order.
pub fn load_assets(root: &Path) -> Result<Assets, PackLoadError> {
    for name in PACK_FILES {
        read(&root.join(name))?;
    }
    let examples_dir = root.join("enhancer/examples");
    let mut examples = Vec::new();
    if examples_dir.is_dir() {
        let mut names: Vec<_> = std::fs::read_dir(&examples_dir)
            .map_err(|e| PackLoadError::Io {
                path: examples_dir.display().to_string(),
                reason: e.to_string(),
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        names.sort();
        for p in names {
            let name = format!("enhancer/examples/{}", p.file_name().expect("file").to_string_lossy());
            examples.push((name, read(&p)?));
        }
    }
    let pack = PromptPack::load(|name| std::fs::read_to_string(root.join(name)).ok(), examples)?;
    let hints = ClassHintRegistry::from_json(&read(&root.join("class_hints.json"))?)?;
    let lexicon = Lexicon::from_lists(
        &read(&root.join("lexicon/positive.txt"))?,
        &read(&root.join("lexicon/negative.txt"))?,
    )?;
    Ok(Assets { pack, hints, lexicon })
}

/// Shipped assets, or the pack at `root` when given.
pub fn assets(root: Option<&Path>) -> Result<Assets, PackLoadError> {
    root.map_or_else(|| Ok(Assets::default()), load_assets)
}
