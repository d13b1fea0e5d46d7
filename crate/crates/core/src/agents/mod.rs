//! Role-scoped chat agents: prompt rendering, chat backends and verdict
//! parsing.

mod backend;
mod mock;
mod prompt;
mod runner;
mod verdict;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use backend::{
    build_backend, BackendError, BackendKind, ChatBackend, ChatBackendConfig, ChatMessage,
    ChatRequest, HttpBackend, RateLimiter, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL,
};
pub use mock::{mock_respond, MockBackend};
pub use prompt::{
    build_prompt, build_simplifier_prompt, metadata_block, ExplanationMode, PromptContext,
    PromptTemplate, ADVERSARIAL_INTRO, ADVERSARIAL_LEGITIMATE, ADVERSARIAL_OUTPUT,
    ADVERSARIAL_PHISHING, EXPERT_SUFFIX, METADATA_SYSTEM, SIMPLIFIER_SYSTEM, TEXT_SYSTEM,
    URL_SYSTEM,
};
pub use runner::{run_agent, run_detection, run_with_retry, RetryPolicy};
pub use verdict::{parse_verdict_json, AgentVerdict, VerdictError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentRole {
    Text,
    Url,
    Metadata,
    Simplifier,
    Adversarial,
}

impl AgentRole {
    pub const ALL: [AgentRole; 5] = [
        AgentRole::Text,
        AgentRole::Url,
        AgentRole::Metadata,
        AgentRole::Simplifier,
        AgentRole::Adversarial,
    ];
    /// Detection roles in fusion order.
    pub const DETECTION: [AgentRole; 3] = [AgentRole::Text, AgentRole::Url, AgentRole::Metadata];

    pub fn is_detection(self) -> bool {
        matches!(self, AgentRole::Text | AgentRole::Url | AgentRole::Metadata)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Text => "text",
            AgentRole::Url => "url",
            AgentRole::Metadata => "metadata",
            AgentRole::Simplifier => "simplifier",
            AgentRole::Adversarial => "adversarial",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentRole::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown agent role `{s}`"))
    }
}

/// One agent's answer for one email.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub role: AgentRole,
    pub verdict: AgentVerdict,
    pub raw_response: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("backend unavailable after {attempts} attempt(s): {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("verdict unparseable after {attempts} attempt(s): {reason}")]
    VerdictUnparseable {
        attempts: u32,
        reason: String,
        raw_response: String,
    },
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}
