//! Line-oriented configuration tables: the keyword lexicon (`token` per
//! line) and the domain reputation table (`domain<TAB>score` per line).
//! Lines starting with `#` are comments; a `# version: N` comment names the
//! lexicon version.

use std::collections::HashMap;
use std::path::Path;

use regex::Regex;

use super::EmailError;

const BUNDLED_KEYWORDS: &str = include_str!("../../data/keywords.txt");
const BUNDLED_REPUTATION: &str = include_str!("../../data/reputation.tsv");

#[derive(Debug, Clone)]
pub struct KeywordLexicon {
    version: Option<String>,
    entries: Vec<String>,
    matcher: Regex,
}

impl KeywordLexicon {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_KEYWORDS, "<bundled keywords>").expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, EmailError> {
        let text = std::fs::read_to_string(path).map_err(|source| EmailError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, EmailError> {
        let mut version = None;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = Some(v.trim().to_string());
                }
                continue;
            }
            if !line.is_empty() {
                entries.push(line.to_lowercase());
            }
        }
        Self::from_entries(entries, version).map_err(|reason| EmailError::InvalidConfig {
            path: origin.to_string(),
            line: 0,
            reason,
        })
    }

    pub fn from_entries(entries: Vec<String>, version: Option<String>) -> Result<Self, String> {
        if entries.is_empty() {
            return Err("keyword lexicon is empty".into());
        }
        let alternation = entries
            .iter()
            .map(|e| regex::escape(e))
            .collect::<Vec<_>>()
            .join("|");
        let matcher = Regex::new(&format!(r"(?i)\b(?:{alternation})\b")).map_err(|e| e.to_string())?;
        Ok(Self {
            version,
            entries,
            matcher,
        })
    }

    pub fn version(&self) -> Option<&str> {
        self.version.as_deref()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Case-insensitive whole-word matches of any entry.
    pub fn count_hits(&self, text: &str) -> usize {
        self.matcher.find_iter(text).count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReputationTable {
    scores: HashMap<String, f64>,
}

impl ReputationTable {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_REPUTATION, "<bundled reputation>").expect("bundled table is valid")
    }

    pub fn load(path: &Path) -> Result<Self, EmailError> {
        let text = std::fs::read_to_string(path).map_err(|source| EmailError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, EmailError> {
        let mut scores = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| EmailError::InvalidConfig {
                path: origin.to_string(),
                line: idx + 1,
                reason,
            };
            let (domain, score) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `domain<TAB>score`".into()))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| err(format!("score `{}` is not a number", score.trim())))?;
            if !(-1.0..=1.0).contains(&score) {
                return Err(err(format!("score {score} outside [-1, 1]")));
            }
            scores.insert(domain.trim().to_lowercase(), score);
        }
        Ok(Self { scores })
    }

    pub fn insert(&mut self, domain: &str, score: f64) {
        self.scores.insert(domain.to_lowercase(), score.clamp(-1.0, 1.0));
    }

    /// Score of the host or its nearest listed parent domain; 0 when unknown.
    pub fn score(&self, host: &str) -> f64 {
        let host = host.trim_end_matches('.').to_lowercase();
        let mut candidate = host.as_str();
        loop {
            if let Some(&s) = self.scores.get(candidate) {
                return s;
            }
            match candidate.split_once('.') {
                Some((_, parent)) if parent.contains('.') || self.scores.contains_key(parent) => {
                    candidate = parent
                }
                _ => return 0.0,
            }
        }
    }

    pub fn is_denylisted(&self, host: &str) -> bool {
        self.score(host) <= -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_whole_words_case_insensitively() {
        let lex = KeywordLexicon::from_entries(
            vec!["verify".into(), "account".into(), "urgent".into()],
            None,
        )
        .unwrap();
        assert_eq!(lex.count_hits("Please VERIFY your account; accounts unverified"), 2);
    }

    #[test]
    fn empty_lexicon_is_rejected() {
        assert!(KeywordLexicon::parse("# version: 2\n\n", "x").is_err());
    }

    #[test]
    fn bundled_lexicon_has_version_and_seed_words() {
        let lex = KeywordLexicon::bundled();
        assert_eq!(lex.version(), Some("1"));
        for w in ["verify", "confirm", "account", "profile", "free", "urgent", "update", "password"] {
            assert!(lex.entries().iter().any(|e| e == w), "missing {w}");
        }
    }

    #[test]
    fn reputation_walks_parent_domains() {
        let t = ReputationTable::parse("evil.com\t-1\ngood.org\t1\n", "t").unwrap();
        assert_eq!(t.score("mail.evil.com"), -1.0);
        assert_eq!(t.score("GOOD.org"), 1.0);
        assert_eq!(t.score("other.net"), 0.0);
        assert!(t.is_denylisted("a.b.evil.com"));
    }

    #[test]
    fn reputation_rejects_out_of_range() {
        let err = ReputationTable::parse("x.com\t2\n", "t").unwrap_err();
        assert!(matches!(err, EmailError::InvalidConfig { line: 1, .. }));
    }
}
