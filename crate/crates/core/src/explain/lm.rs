use std::collections::HashMap;

use super::ExplainError;
use crate::text::tokenize;

/// Token scorer for perplexity. An external LM scorer implements this.
pub trait LanguageModel: Send + Sync {
    /// Natural-log probability of one token; must be finite.
    fn log_prob(&self, token: &str) -> f64;
}

/// Unigram model. Trained models use add-one smoothing over the training
/// vocabulary plus one bucket for unseen tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    log_probs: HashMap<String, f64>,
    unknown: f64,
}

impl UnigramModel {
    pub fn train<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for doc in docs {
            for t in tokenize(doc) {
                *counts.entry(t).or_default() += 1;
                total += 1;
            }
        }
        let denom = (total + counts.len() as u64 + 1) as f64;
        Self {
            log_probs: counts
                .into_iter()
                .map(|(t, c)| (t, ((c + 1) as f64 / denom).ln()))
                .collect(),
            unknown: (1.0 / denom).ln(),
        }
    }

    /// Equal mass on each type; unseen tokens get probability 0 and would
    /// make perplexity infinite, so they are scored as one extra type.
    pub fn uniform<S: AsRef<str>>(types: &[S]) -> Self {
        let p = (1.0 / types.len().max(1) as f64).ln();
        Self {
            log_probs: types.iter().map(|t| (t.as_ref().to_lowercase(), p)).collect(),
            unknown: (1.0 / (types.len() + 1) as f64).ln(),
        }
    }

    /// Reference corpus file: one document per line.
    pub fn from_reference_file(path: &std::path::Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::train(text.lines()))
    }
}

impl LanguageModel for UnigramModel {
    fn log_prob(&self, token: &str) -> f64 {
        self.log_probs.get(token).copied().unwrap_or(self.unknown)
    }
}

/// `exp` of the mean negative log-probability of the text's tokens.
pub fn perplexity(text: &str, lm: &dyn LanguageModel) -> Result<f64, ExplainError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(ExplainError::EmptyText);
    }
    let nll: f64 = tokens.iter().map(|t| -lm.log_prob(t)).sum::<f64>() / tokens.len() as f64;
    Ok(nll.exp())
}
