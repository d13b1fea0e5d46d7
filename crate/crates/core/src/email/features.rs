use serde::{Deserialize, Serialize};

use super::{KeywordLexicon, ParsedEmail, ReputationTable};

/// Static per-email features fed to the fusion policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmailFeatures {
    pub url_count: usize,
    pub keyword_hits: usize,
    pub domain_reputation: f64,
    pub spf_code: f64,
    pub dkim_code: f64,
    pub dmarc_code: f64,
}

impl EmailFeatures {
    pub const DIM: usize = 6;

    pub fn zeros() -> Self {
        Self {
            url_count: 0,
            keyword_hits: 0,
            domain_reputation: 0.0,
            spf_code: 0.0,
            dkim_code: 0.0,
            dmarc_code: 0.0,
        }
    }

    /// Bounded policy inputs; the counts go through `ln(1 + n) / 5`.
    pub fn normalized(&self) -> [f64; Self::DIM] {
        [
            (self.url_count as f64).ln_1p() / 5.0,
            (self.keyword_hits as f64).ln_1p() / 5.0,
            self.domain_reputation,
            self.spf_code,
            self.dkim_code,
            self.dmarc_code,
        ]
    }

    pub fn auth_sum(&self) -> f64 {
        self.spf_code + self.dkim_code + self.dmarc_code
    }
}

pub fn extract_features(
    parsed: &ParsedEmail,
    lexicon: &KeywordLexicon,
    reputation: &ReputationTable,
) -> EmailFeatures {
    let keyword_hits =
        lexicon.count_hits(&parsed.subject) + lexicon.count_hits(&parsed.body_text);
    let domain_reputation = parsed
        .from_host()
        .map_or(0.0, |host| reputation.score(&host));
    EmailFeatures {
        url_count: parsed.urls.len(),
        keyword_hits,
        domain_reputation,
        spf_code: parsed.auth.spf.code(),
        dkim_code: parsed.auth.dkim.code(),
        dmarc_code: parsed.auth.dmarc.code(),
    }
}
