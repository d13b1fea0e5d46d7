use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary class of an email. Phishing is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Phishing,
    Legitimate,
}

impl Label {
    pub fn is_phishing(self) -> bool {
        self == Label::Phishing
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Phishing => "Phishing",
            Label::Legitimate => "Legitimate",
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Phishing => Label::Legitimate,
            Label::Legitimate => Label::Phishing,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognised label `{0}`")]
pub struct ParseLabelError(pub String);

impl FromStr for Label {
    type Err = ParseLabelError;

    /// Accepts the spellings found in the public corpora: `phishing`, `spam`,
    /// `fraud` and `1` for the positive class; `legitimate`, `ham` and `0`
    /// for the negative one.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phishing" | "phish" | "spam" | "fraud" | "malicious" | "1" | "true" => {
                Ok(Label::Phishing)
            }
            "legitimate" | "legit" | "ham" | "benign" | "0" | "false" => Ok(Label::Legitimate),
            _ => Err(ParseLabelError(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_corpus_spellings() {
        assert_eq!("Spam".parse::<Label>().unwrap(), Label::Phishing);
        assert_eq!(" ham ".parse::<Label>().unwrap(), Label::Legitimate);
        assert_eq!("0".parse::<Label>().unwrap(), Label::Legitimate);
        assert!("maybe".parse::<Label>().is_err());
    }
}
