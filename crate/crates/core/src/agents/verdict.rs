use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Label;

/// The structured answer of a detection agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub verdict: Label,
    pub confidence: f64,
    pub reasons: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerdictError {
    #[error("verdict unparseable: {0}")]
    Unparseable(String),
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
}

impl AgentVerdict {
    pub fn new(verdict: Label, confidence: f64, reasons: &str) -> Result<Self, VerdictError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(VerdictError::ConfidenceOutOfRange(confidence));
        }
        if reasons.trim().is_empty() {
            return Err(VerdictError::Unparseable("empty reasons".into()));
        }
        Ok(Self {
            verdict,
            confidence,
            reasons: reasons.to_string(),
        })
    }

    /// The JSON object the agents are asked to produce.
    pub fn render(&self) -> String {
        serde_json::json!({
            "verdict": self.verdict.as_str(),
            "confidence": self.confidence,
            "reasons": self.reasons,
        })
        .to_string()
    }
}

/// Reads `{"verdict", "confidence", "reasons"}` from a model reply. Prose
/// around the object is ignored: the first balanced `{...}` that decodes as a
/// JSON object with a verdict is used. `rationale` is accepted for
/// `reasons`.
pub fn parse_verdict_json(text: &str) -> Result<AgentVerdict, VerdictError> {
    let mut last_problem = "no JSON object found".to_string();
    for candidate in balanced_objects(text) {
        let Ok(Value::Object(map)) = serde_json::from_str::<Value>(candidate) else {
            last_problem = "malformed JSON object".into();
            continue;
        };
        let get = |key: &str| {
            map.iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(key))
                .map(|(_, v)| v)
        };
        let Some(verdict) = get("verdict").and_then(Value::as_str) else {
            last_problem = "object has no string `verdict`".into();
            continue;
        };
        let verdict = match verdict.trim().to_ascii_lowercase().as_str() {
            "phishing" => Label::Phishing,
            "legitimate" => Label::Legitimate,
            other => return Err(VerdictError::Unparseable(format!("unknown verdict `{other}`"))),
        };
        let confidence = match get("confidence") {
            Some(Value::Number(n)) => n.as_f64(),
            Some(Value::String(s)) => s.trim().parse().ok(),
            _ => None,
        }
        .ok_or_else(|| VerdictError::Unparseable("missing numeric `confidence`".into()))?;
        let reasons = get("reasons")
            .or_else(|| get("rationale"))
            .and_then(Value::as_str)
            .unwrap_or_default();
        return AgentVerdict::new(verdict, confidence, reasons);
    }
    Err(VerdictError::Unparseable(last_problem))
}

/// Every `{...}` span with balanced braces outside string literals, in order
/// of their opening brace.
fn balanced_objects(text: &str) -> impl Iterator<Item = &str> {
    text.char_indices()
        .filter(|&(_, c)| c == '{')
        .filter_map(move |(start, _)| {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            for (off, c) in text[start..].char_indices() {
                if in_string {
                    match c {
                        _ if escaped => escaped = false,
                        '\\' => escaped = true,
                        '"' => in_string = false,
                        _ => {}
                    }
                    continue;
                }
                match c {
                    '"' => in_string = true,
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&text[start..start + off + 1]);
                        }
                    }
                    _ => {}
                }
            }
            None
        })
}
