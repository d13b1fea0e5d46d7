use super::ExplainError;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextStats {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
}

/// Flesch reading ease.
pub fn fres(words: usize, sentences: usize, syllables: usize) -> Result<f64, ExplainError> {
    if words == 0 {
        return Err(ExplainError::ZeroDenominator("word count"));
    }
    if sentences == 0 {
        return Err(ExplainError::ZeroDenominator("sentence count"));
    }
    let w = words as f64;
    Ok(206.835 - 1.015 * (w / sentences as f64) - 84.6 * (syllables as f64 / w))
}

pub fn fres_of_text(text: &str) -> Result<f64, ExplainError> {
    let s = count_text_stats(text);
    fres(s.words, s.sentences, s.syllables)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel groups, minus a trailing silent `e`, at least 1.
pub fn count_syllables(word: &str) -> usize {
    let chars: Vec<char> = word.chars().flat_map(char::to_lowercase).filter(|c| c.is_alphabetic()).collect();
    if chars.is_empty() {
        return 0;
    }
    let mut groups = 0usize;
    let mut prev_vowel = false;
    for &c in &chars {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = chars.len();
    if n >= 2 && chars[n - 1] == 'e' && !is_vowel(chars[n - 2]) {
        groups = groups.saturating_sub(1);
    }
    groups.max(1)
}

/// Words are punctuation-stripped whitespace tokens; sentences are runs
/// ending in `.`, `!` or `?` (at least 1).
pub fn count_text_stats(text: &str) -> TextStats {
    let tokens = tokenize(text);
    let mut sentences = 0;
    let mut pending = false;
    for c in text.chars() {
        if matches!(c, '.' | '!' | '?') {
            if pending {
                sentences += 1;
                pending = false;
            }
        } else if c.is_alphanumeric() {
            pending = true;
        }
    }
    TextStats {
        words: tokens.len(),
        sentences: sentences.max(1),
        syllables: tokens.iter().map(|t| count_syllables(t)).sum(),
    }
}
