//! The consolidated explanation and the rationale quality metrics.

mod coherence;
mod lm;
mod readability;
mod similarity;

use serde::{Deserialize, Serialize};

use crate::agents::{
    build_simplifier_prompt, run_with_retry, AgentError, AgentReport, AgentRole, ChatBackend,
    ChatRequest, ExplanationMode,
};

pub use coherence::{npmi, topic_coherence, CoherenceConfig};
pub use lm::{perplexity, LanguageModel, UnigramModel};
pub use readability::{count_syllables, count_text_stats, fres, fres_of_text, TextStats};
pub use similarity::{cosine_sim, embed_text, rouge1_recall, shared_vocab, tf_cosine, Embedder, TfEmbedder};

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("the simplifier returned an empty explanation")]
    EmptyExplanation,
    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),
    #[error("empty reference text")]
    EmptyReference,
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("empty text")]
    EmptyText,
    #[error("{docs} document(s) cannot support {topics} topic(s)")]
    CorpusTooSmall { docs: usize, topics: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedExplanation {
    pub text: String,
    pub mode: ExplanationMode,
    /// Roles of the three reports the explanation draws on.
    pub sources: [AgentRole; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextQualityReport {
    pub perplexity: f64,
    pub topic_coherence: f64,
    pub fres: f64,
    pub rouge1_recall: f64,
    pub cosine: f64,
}

/// Some chat models wrap prose in a JSON object despite the instructions;
/// pull the first string field out when that happens.
fn unwrap_json_prose(reply: &str) -> String {
    let trimmed = reply.trim();
    if trimmed.starts_with('{') {
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(trimmed) {
            let preferred = ["explanation", "summary", "text", "reasons"];
            let field = preferred
                .iter()
                .find_map(|k| map.get(*k).and_then(|v| v.as_str()))
                .or_else(|| map.values().find_map(|v| v.as_str()));
            if let Some(s) = field {
                return s.trim().to_string();
            }
        }
    }
    trimmed.to_string()
}

/// Runs the simplifier agent over the three detection reports.
pub fn simplify(
    backend: &dyn ChatBackend,
    reports: &[AgentReport],
    mode: ExplanationMode,
) -> Result<SimplifiedExplanation, ExplainError> {
    let messages = build_simplifier_prompt(reports, mode)?;
    let request = ChatRequest {
        agent: AgentRole::Simplifier,
        messages,
        json_mode: false,
    };
    let (text, _, _) = run_with_retry(backend, &request, |raw| Ok::<_, String>(unwrap_json_prose(raw)))?;
    if text.is_empty() {
        return Err(ExplainError::EmptyExplanation);
    }
    Ok(SimplifiedExplanation {
        text,
        mode,
        sources: AgentRole::DETECTION,
    })
}

/// All five metrics for one explanation. `reference` is the text the
/// explanation is compared against, usually the concatenated agent reasons.
pub fn assess(
    candidate: &str,
    reference: &str,
    lm: &dyn LanguageModel,
    embedder: &dyn Embedder,
    topic_coherence: f64,
) -> Result<TextQualityReport, ExplainError> {
    let cand = crate::text::tokenize(candidate);
    let refs = crate::text::tokenize(reference);
    let (a, b) = embedder.embed_pair(candidate, reference);
    Ok(TextQualityReport {
        perplexity: perplexity(candidate, lm)?,
        topic_coherence,
        fres: fres_of_text(candidate)?,
        rouge1_recall: rouge1_recall(&cand, &refs)?,
        cosine: cosine_sim(&a, &b).or_else(|e| match e {
            // An explanation sharing no vocabulary with nothing to compare is orthogonal.
            ExplainError::ZeroVector => Ok(0.0),
            other => Err(other),
        })?,
    })
}
