//! Tokenization shared by the rationale metrics.
//!
//! Lowercase, split on Unicode whitespace, strip punctuation from each token
//! and drop tokens that end up empty.

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let tok: String = raw
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect();
            (!tok.is_empty()).then_some(tok)
        })
        .collect()
}
