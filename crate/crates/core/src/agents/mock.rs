//! Deterministic offline backend. Replies depend only on the agent role and
//! the rendered messages, which the mock reads back to recover its inputs.

use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::prompt::EXPERT_SUFFIX;
use super::{AgentRole, AgentVerdict, BackendError, ChatBackend, ChatBackendConfig, ChatMessage, ChatRequest};
use crate::adversarial::{mock_transform_kinds, rule_based_message};
use crate::email::parse::parse_bytes;
use crate::email::{
    parse_auth_results_with_diagnostics, parse_url, Headers, KeywordLexicon, ReputationTable,
};
use crate::Label;

/// Homoglyph intensity used when the mock plays the adversarial agent.
const MOCK_INTENSITY: f64 = 0.5;

pub struct MockBackend {
    config: ChatBackendConfig,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::with_config(ChatBackendConfig::mock())
    }

    pub fn with_config(config: ChatBackendConfig) -> Self {
        Self { config }
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        Ok(mock_respond(request.agent, &request.messages))
    }

    fn config(&self) -> &ChatBackendConfig {
        &self.config
    }
}

/// Rule table:
///
/// * text: confidence `clamp(0.5 + 0.12 * keyword_hits, 0, 0.99)`, phishing
///   when the confidence is at least 0.5;
/// * url: phishing at 0.95 when a host is a lookalike or denylisted,
///   otherwise legitimate at 0.8;
/// * metadata: phishing at 0.9 when the SPF, DKIM and DMARC codes sum to -1
///   or less or the Reply-To host differs from the From host, otherwise
///   legitimate at 0.75;
/// * simplifier: the three reasons rewritten as plain sentences;
/// * adversarial: the rule-based transforms applied to the supplied email.
pub fn mock_respond(role: AgentRole, messages: &[ChatMessage]) -> String {
    let system = messages
        .iter()
        .find(|m| m.role == "system")
        .map_or("", |m| m.content.as_str());
    let user = messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .map_or("", |m| m.content.as_str());
    match role {
        AgentRole::Text => text_rule(after_marker(user, "Email text:\n")),
        AgentRole::Url => url_rule(after_marker(user, "URLs in the email:\n")),
        AgentRole::Metadata => metadata_rule(after_marker(user, "Email metadata:\n")),
        AgentRole::Simplifier => simplifier_stub(user, system.ends_with(EXPERT_SUFFIX)),
        AgentRole::Adversarial => adversarial_stub(system, user),
    }
}

fn after_marker<'a>(text: &'a str, marker: &str) -> &'a str {
    text.find(marker).map_or(text, |i| &text[i + marker.len()..])
}

fn verdict_json(label: Label, confidence: f64, reasons: &str) -> String {
    AgentVerdict::new(label, confidence, reasons)
        .expect("mock confidences lie in [0, 1]")
        .render()
}

fn text_rule(body: &str) -> String {
    let hits = KeywordLexicon::bundled().count_hits(body);
    let confidence = (0.5 + 0.12 * hits as f64).clamp(0.0, 0.99);
    let label = if confidence >= 0.5 {
        Label::Phishing
    } else {
        Label::Legitimate
    };
    let reasons = match hits {
        0 => "The body contains no known phishing keywords.".to_string(),
        1 => "The body contains 1 phishing keyword.".to_string(),
        n => format!("The body contains {n} phishing keywords."),
    };
    verdict_json(label, confidence, &reasons)
}

fn url_rule(list: &str) -> String {
    let reputation = ReputationTable::bundled();
    let mut flagged = Vec::new();
    for line in list.lines() {
        let Some(raw) = line.trim().strip_prefix("- ") else {
            continue;
        };
        if let Some(url) = parse_url(raw.trim()) {
            if url.homoglyph_suspect {
                flagged.push(format!("{} uses lookalike characters", url.host));
            } else if reputation.is_denylisted(&url.host) {
                flagged.push(format!("{} is on the denylist", url.host));
            }
        }
    }
    if flagged.is_empty() {
        verdict_json(Label::Legitimate, 0.8, "No link points to a lookalike or denylisted domain.")
    } else {
        verdict_json(Label::Phishing, 0.95, &format!("The host {}.", flagged.join("; the host ")))
    }
}

fn metadata_rule(block: &str) -> String {
    let mut headers = Headers::new();
    for line in block.lines() {
        if let Some((name, value)) = line.split_once(':') {
            headers.push(name.trim(), value.trim());
        }
    }
    let (auth, _) = parse_auth_results_with_diagnostics(&headers);
    let auth_sum = auth.spf.code() + auth.dkim.code() + auth.dmarc.code();
    let host = |name: &str| {
        headers
            .get(name)
            .and_then(crate::email::parse::parse_address)
            .and_then(|a| a.host())
    };
    let from = host("From");
    let reply_to = host("Reply-To");
    let mismatch = matches!((&from, &reply_to), (Some(f), Some(r)) if f != r);

    let mut reasons = Vec::new();
    if auth_sum <= -1.0 {
        reasons.push(format!(
            "Sender authentication is weak (spf {}, dkim {}, dmarc {}).",
            auth.spf.as_str(),
            auth.dkim.as_str(),
            auth.dmarc.as_str()
        ));
    }
    if mismatch {
        reasons.push(format!(
            "Replies go to {} instead of the sending domain {}.",
            reply_to.unwrap_or_default(),
            from.unwrap_or_default()
        ));
    }
    if reasons.is_empty() {
        verdict_json(Label::Legitimate, 0.75, "Sender and routing headers are consistent.")
    } else {
        verdict_json(Label::Phishing, 0.9, &reasons.join(" "))
    }
}

fn simplifier_stub(user: &str, expert: bool) -> String {
    let mut phishing_votes = 0;
    let mut sentences = Vec::new();
    for line in user.lines() {
        let Some((agent, rest)) = line.split_once(" agent: verdict ") else {
            continue;
        };
        if rest.starts_with("Phishing") {
            phishing_votes += 1;
        }
        let reasons = rest.split_once("Reasons: ").map_or("", |(_, r)| r).trim();
        let agent = match agent {
            "text" => "wording of the message",
            "url" => "links",
            "metadata" => "sender details",
            other => other,
        };
        if !reasons.is_empty() {
            let reasons = reasons.trim_end_matches('.');
            sentences.push(format!("Looking at the {agent}: {reasons}."));
        }
    }
    let opening = if phishing_votes >= 2 {
        "This email is most likely a phishing attempt."
    } else {
        "This email appears to be legitimate."
    };
    let mut out = String::from(opening);
    for s in sentences {
        out.push(' ');
        out.push_str(&s);
    }
    if expert {
        out.push_str(&format!(
            " Analyst note: {phishing_votes} of 3 detection agents reported indicators of compromise."
        ));
    }
    out
}

fn adversarial_stub(system: &str, user: &str) -> String {
    let label = user
        .lines()
        .find_map(|l| l.strip_prefix("Email type:"))
        .and_then(|l| Label::from_str(l.trim()).ok())
        .unwrap_or(Label::Phishing);
    let message = after_marker(user, "Email:\n");
    let Ok(parsed) = parse_bytes(message.as_bytes()) else {
        return String::new();
    };
    let digest = Sha256::new()
        .chain_update(system.as_bytes())
        .chain_update(user.as_bytes())
        .finalize();
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
    rule_based_message(&parsed, mock_transform_kinds(label), seed, MOCK_INTENSITY).0
}
