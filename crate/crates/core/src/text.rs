//! Word counting and small text utilities shared by the caption schema,
//! the orchestrator, and the enhancer.

use alloc::string::String;
use alloc::vec::Vec;

/// Maximum number of words in a one-sentence global summary.
pub const GLOBAL_SUMMARY_WORD_LIMIT: usize = 20;

fn trim_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Counts whitespace-delimited tokens that still contain something after
/// leading/trailing punctuation is trimmed. A lone dash is not a word.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace()
        .filter(|t| !trim_punct(t).is_empty())
        .count()
}

/// Keeps the first `limit` words (as counted by [`count_words`]), joining the
/// original tokens with single spaces. Punctuation-only tokens between kept
/// words are retained.
pub fn truncate_words(text: &str, limit: usize) -> String {
    let mut out = String::new();
    let mut words = 0;
    for token in text.split_whitespace() {
        let is_word = !trim_punct(token).is_empty();
        if is_word && words == limit {
            break;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
        if is_word {
            words += 1;
        }
    }
    out
}

/// Lowercased alphanumeric word tokens (apostrophes and hyphens inside a
/// word are split points).
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Replaces every `{key}` placeholder in `template` in a single pass, so
/// substituted values are never themselves expanded.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let hit = vars.iter().find(|(k, _)| {
            tail.strip_prefix(*k).is_some_and(|t| t.starts_with('}'))
        });
        match hit {
            Some((k, v)) => {
                out.push_str(v);
                rest = &tail[k.len() + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Case-insensitive substring search returning the byte span in `haystack`.
/// Only ASCII case folding is applied so byte offsets stay aligned.
pub fn find_ignore_ascii_case(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    (0..=h.len() - n.len())
        .filter(|&i| haystack.is_char_boundary(i) && haystack.is_char_boundary(i + n.len()))
        .find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
        .map(|i| (i, i + n.len()))
}
