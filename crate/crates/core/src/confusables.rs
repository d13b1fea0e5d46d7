//! Latin letters and their visually confusable codepoints.
//!
//! The table is used in both directions: the adversarial generator picks a
//! replacement for a Latin letter, and the URL extractor folds a host back to
//! its skeleton to flag lookalike domains.

use std::collections::HashMap;
use std::sync::LazyLock;

const BUNDLED: &str = include_str!("../data/confusables.tsv");

static DEFAULT_TABLE: LazyLock<ConfusableTable> =
    LazyLock::new(|| ConfusableTable::parse(BUNDLED).expect("bundled confusables table is valid"));

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfusableTableError {
    #[error("line {line}: expected `source<TAB>replacement`")]
    Malformed { line: usize },
    #[error("line {line}: source `{source_char}` must be a single ASCII letter")]
    NonAsciiSource { line: usize, source_char: String },
    #[error("line {line}: replacement `{replacement}` already maps to `{existing}`")]
    Ambiguous {
        line: usize,
        replacement: char,
        existing: char,
    },
}

#[derive(Debug, Clone, Default)]
pub struct ConfusableTable {
    forward: HashMap<char, Vec<char>>,
    reverse: HashMap<char, char>,
}

impl ConfusableTable {
    /// The table shipped with the crate.
    pub fn bundled() -> &'static ConfusableTable {
        &DEFAULT_TABLE
    }

    /// Parses `source<TAB>replacement` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, ConfusableTableError> {
        let mut table = ConfusableTable::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (src, rep) = line
                .split_once('\t')
                .ok_or(ConfusableTableError::Malformed { line: line_no })?;
            let mut src_chars = src.chars();
            let mut rep_chars = rep.chars();
            let (Some(s), None) = (src_chars.next(), src_chars.next()) else {
                return Err(ConfusableTableError::Malformed { line: line_no });
            };
            let (Some(r), None) = (rep_chars.next(), rep_chars.next()) else {
                return Err(ConfusableTableError::Malformed { line: line_no });
            };
            if !s.is_ascii_alphabetic() {
                return Err(ConfusableTableError::NonAsciiSource {
                    line: line_no,
                    source_char: src.to_string(),
                });
            }
            if let Some(&existing) = table.reverse.get(&r) {
                return Err(ConfusableTableError::Ambiguous {
                    line: line_no,
                    replacement: r,
                    existing,
                });
            }
            table.forward.entry(s).or_default().push(r);
            table.reverse.insert(r, s);
        }
        Ok(table)
    }

    /// Confusable codepoints for a Latin letter, in table order.
    pub fn replacements(&self, c: char) -> &[char] {
        self.forward.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_replacement(&self, c: char) -> bool {
        self.forward.contains_key(&c)
    }

    /// The Latin letter a confusable codepoint imitates, if any.
    pub fn latin_for(&self, c: char) -> Option<char> {
        self.reverse.get(&c).copied()
    }

    /// Folds every known confusable to its Latin source; other codepoints
    /// pass through unchanged.
    pub fn skeleton(&self, text: &str) -> String {
        text.chars()
            .map(|c| self.latin_for(c).unwrap_or(c))
            .collect()
    }

    /// True iff `text` holds a non-ASCII codepoint whose skeleton is an ASCII
    /// letter.
    pub fn contains_lookalike(&self, text: &str) -> bool {
        text.chars().any(|c| {
            !c.is_ascii() && self.latin_for(c).is_some_and(|l| l.is_ascii_alphabetic())
        })
    }
}
