//! Email model: raw corpus items, the parsed message, URL records,
//! authentication verdicts and the policy feature vector.

mod auth;
pub mod compose;
pub mod corpus;
mod features;
mod html;
pub mod lexicon;
pub(crate) mod parse;
mod urls;

use serde::{Deserialize, Serialize};

use crate::Label;

pub use auth::{parse_auth_results, parse_auth_results_with_diagnostics};
pub use corpus::{load_corpus, load_corpus_with, CorpusFormat, CorpusOptions, CsvColumns};
pub use features::{extract_features, EmailFeatures};
pub use html::strip_html;
pub use lexicon::{KeywordLexicon, ReputationTable};
pub use parse::{parse_bytes, parse_eml};
pub use urls::{extract_urls, parse_url};

#[derive(Debug, thiserror::Error)]
pub enum EmailError {
    #[error("unparseable message: {0}")]
    UnparseableMessage(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format mismatch: {0}")]
    FormatMismatch(String),
    #[error("invalid config file {path}, line {line}: {reason}")]
    InvalidConfig {
        path: String,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorpusLabel {
    Phishing,
    Legitimate,
    Unlabeled,
}

impl CorpusLabel {
    pub fn label(self) -> Option<Label> {
        match self {
            CorpusLabel::Phishing => Some(Label::Phishing),
            CorpusLabel::Legitimate => Some(Label::Legitimate),
            CorpusLabel::Unlabeled => None,
        }
    }
}

impl From<Label> for CorpusLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::Phishing => CorpusLabel::Phishing,
            Label::Legitimate => CorpusLabel::Legitimate,
        }
    }
}

/// One message as loaded from a corpus. The label is fixed at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEmail {
    source_id: String,
    bytes: Vec<u8>,
    corpus_label: CorpusLabel,
}

impl RawEmail {
    pub fn new(
        source_id: impl Into<String>,
        bytes: impl Into<Vec<u8>>,
        corpus_label: CorpusLabel,
    ) -> Self {
        Self {
            source_id: source_id.into(),
            bytes: bytes.into(),
            corpus_label,
        }
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn corpus_label(&self) -> CorpusLabel {
        self.corpus_label
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub name: String,
    pub value: String,
}

/// Ordered header multimap; lookups are case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Headers(Vec<Header>);

impl Headers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.push(Header {
            name: name.into(),
            value: value.into(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(name))
            .map(|h| h.value.as_str())
    }

    pub fn get_all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.0
            .iter()
            .filter(move |h| h.name.eq_ignore_ascii_case(name))
            .map(|h| h.value.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Header> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Address {
    pub display_name: Option<String>,
    pub addr: String,
}

impl Address {
    pub fn new(display_name: Option<&str>, addr: &str) -> Self {
        Self {
            display_name: display_name.map(str::to_string),
            addr: addr.to_string(),
        }
    }

    /// Lowercased domain part, if the address has one.
    pub fn host(&self) -> Option<String> {
        self.addr
            .rsplit_once('@')
            .map(|(_, h)| h.trim_end_matches('>').to_lowercase())
            .filter(|h| !h.is_empty())
    }
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.display_name {
            Some(name) => write!(f, "\"{}\" <{}>", name, self.addr),
            None => write!(f, "<{}>", self.addr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlRecord {
    pub raw: String,
    /// Anchor text when the link came from an HTML `href`.
    pub display_text: Option<String>,
    pub host: String,
    pub is_ip_host: bool,
    pub path_length: usize,
    pub homoglyph_suspect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuthVerdict {
    Pass,
    Fail,
    None,
    /// No Authentication-Results header reported this mechanism.
    Missing,
}

impl AuthVerdict {
    pub fn code(self) -> f64 {
        match self {
            AuthVerdict::Pass => 1.0,
            AuthVerdict::Fail => -1.0,
            AuthVerdict::None | AuthVerdict::Missing => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AuthVerdict::Pass => "pass",
            AuthVerdict::Fail => "fail",
            AuthVerdict::None => "none",
            AuthVerdict::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthResults {
    pub spf: AuthVerdict,
    pub dkim: AuthVerdict,
    pub dmarc: AuthVerdict,
}

impl Default for AuthResults {
    fn default() -> Self {
        Self {
            spf: AuthVerdict::Missing,
            dkim: AuthVerdict::Missing,
            dmarc: AuthVerdict::Missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedEmail {
    pub headers: Headers,
    pub subject: String,
    pub from_addr: Option<Address>,
    pub reply_to: Option<Address>,
    pub return_path: Option<Address>,
    pub received_chain: Vec<String>,
    /// Plain-text rendering of the body; HTML is stripped when no text part exists.
    pub body_text: String,
    pub body_html: Option<String>,
    pub urls: Vec<UrlRecord>,
    pub auth: AuthResults,
    /// Recoverable defects found while parsing.
    pub diagnostics: Vec<String>,
}

impl ParsedEmail {
    pub fn from_host(&self) -> Option<String> {
        self.from_addr.as_ref().and_then(Address::host)
    }

    pub fn reply_to_host(&self) -> Option<String> {
        self.reply_to.as_ref().and_then(Address::host)
    }
}
