//! Evaluation metrics: latent-space reconstruction distance, sentence-level
//! text/frame similarity, and the instance-level generation benchmark.

pub mod inseval;
pub mod senbysen;
pub mod vae;

use alloc::string::String;

pub use inseval::{
    average_hundredths, inseval_judge, inseval_score, Dimension, InsevalPack, InsevalPrompt, InsevalReport,
    JudgeError, JudgeVerdict,
};
pub use senbysen::{clip_senbysen, cosine_similarity, split_sentences, SentenceSet, SimilarityMatrix};
pub use vae::{vae_distance, vae_distance_mean, LatentTensor, LayerWeight, LayerWeights};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid weights: {0}")]
    BadWeights(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("zero-length vector")]
    ZeroVector,
    #[error("unknown prompt id {0:?}")]
    UnknownPrompt(String),
    #[error("more than one verdict for prompt {0:?}")]
    DuplicateVerdict(String),
    #[error("invalid prompt pack: {0}")]
    BadPack(String),
}
