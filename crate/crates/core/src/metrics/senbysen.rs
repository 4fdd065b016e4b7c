//! Sentence-by-sentence text/frame similarity for captions longer than a
//! text encoder's context.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::MetricError;

/// Tokens ending in `.` that never end a sentence. Compared lowercase.
pub const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.", "vs.", "etc.", "e.g.", "i.e.", "approx.",
    "no.", "fig.",
];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentenceSet(pub Vec<String>);

impl SentenceSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

fn is_abbreviation(text: &str, dot: usize) -> bool {
    let start = text[..dot].rfind(char::is_whitespace).map_or(0, |i| i + 1);
    let token = text[start..=dot].to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}

/// Splits after `.`, `!` or `?` when the text ends there or whitespace and
/// then an uppercase letter follow. A `.` closing a listed abbreviation
/// never splits. Sentences are trimmed; empty ones are dropped.
pub fn split_sentences(text: &str) -> SentenceSet {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        if !matches!(ch, '.' | '!' | '?') {
            continue;
        }
        let end = i + ch.len_utf8();
        let rest = &text[end..];
        let after_space = rest.trim_start();
        let boundary = rest.is_empty()
            || (after_space.len() < rest.len() && after_space.chars().next().is_some_and(char::is_uppercase));
        if boundary && !(ch == '.' && is_abbreviation(text, i)) {
            out.push(text[start..end].trim().to_string());
            start = end;
        }
    }
    out.push(text[start..].trim().to_string());
    out.retain(|s| !s.is_empty() && s.chars().any(char::is_alphanumeric));
    SentenceSet(out)
}

/// `values[i][j]`: similarity of sentence `i` with frame `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(MetricError::EmptyInput("similarity matrix needs at least one frame"));
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MetricError::ShapeMismatch("similarity rows differ in length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite("similarity matrix"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Running mean, clamped to the input range so rounding can never leave it.
/// Exact for constant input.
fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut m, mut lo, mut hi, mut k) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for x in xs {
        k += 1.0;
        m += (x - m) / k;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    m.clamp(lo, hi)
}

/// Mean over sentences of each sentence's mean similarity across frames.
pub fn clip_senbysen(m: &SimilarityMatrix) -> Result<f64, MetricError> {
    if m.rows == 0 {
        return Err(MetricError::EmptyInput("no sentences"));
    }
    Ok(mean((0..m.rows).map(|i| mean(m.row(i).iter().copied()))))
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::ShapeMismatch("embedding lengths differ".into()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok((dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sentence_examples() {
        assert_eq!(split_sentences("A cat runs. It jumps!").0, ["A cat runs.", "It jumps!"]);
        assert_eq!(split_sentences("Mr. Smith walks.").0, ["Mr. Smith walks."]);
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("  ...  ").is_empty());
    }

    #[test]
    fn lowercase_follow_does_not_split() {
        assert_eq!(split_sentences("It costs 3.5 dollars. then stops").len(), 1);
        assert_eq!(split_sentences("Wait... What? Yes").0, ["Wait...", "What?", "Yes"]);
        assert_eq!(split_sentences("He saw a fox, e.g. Foxy. Done.").len(), 2);
    }

    #[test]
    fn senbysen_examples() {
        let m = SimilarityMatrix::new(vec![vec![0.2, 0.2, 0.2]]).unwrap();
        assert_eq!(clip_senbysen(&m).unwrap(), 0.2);
        let m = SimilarityMatrix::new(vec![vec![0.1, 0.3], vec![0.5, 0.7]]).unwrap();
        assert!((clip_senbysen(&m).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn matrix_errors() {
        assert!(SimilarityMatrix::new(vec![]).is_err());
        assert!(SimilarityMatrix::new(vec![vec![]]).is_err());
        assert!(SimilarityMatrix::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(SimilarityMatrix::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn cosine() {
        assert!((cosine_similarity(&[1.0, 0.0], &[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap().abs() < 1e-12);
        assert_eq!(cosine_similarity(&[0.0], &[1.0]), Err(MetricError::ZeroVector));
    }
}
