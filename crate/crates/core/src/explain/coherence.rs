use std::collections::{BTreeMap, BTreeSet};

use super::ExplainError;
use crate::text::tokenize;

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "are", "was", "were", "this", "that", "with", "from", "not", "but", "has",
    "have", "had", "its", "into", "than", "then", "there", "their", "they", "which", "what", "when",
    "who", "will", "would", "could", "should", "been", "being", "can", "our", "your", "you", "all",
    "any", "also", "such", "more", "most", "other", "some", "these", "those", "does", "did", "each",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoherenceConfig {
    pub topics: usize,
    pub top_k: usize,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self { topics: 5, top_k: 10 }
    }
}

/// Document sets per term.
struct Occurrence {
    docs: usize,
    index: BTreeMap<String, BTreeSet<usize>>,
}

impl Occurrence {
    fn build<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut index: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for (d, doc) in corpus.iter().enumerate() {
            for t in tokenize(doc.as_ref()) {
                if t.chars().count() >= 3 && !STOPWORDS.contains(&t.as_str()) {
                    index.entry(t).or_default().insert(d);
                }
            }
        }
        Self { docs: corpus.len(), index }
    }

    fn df(&self, w: &str) -> usize {
        self.index.get(w).map_or(0, BTreeSet::len)
    }

    fn co_df(&self, a: &str, b: &str) -> usize {
        match (self.index.get(a), self.index.get(b)) {
            (Some(x), Some(y)) => x.intersection(y).count(),
            _ => 0,
        }
    }

    fn npmi(&self, a: &str, b: &str) -> f64 {
        npmi(self.df(a), self.df(b), self.co_df(a, b), self.docs)
    }
}

/// Normalised PMI from document counts with add-one smoothing:
/// `p(x) = (df(x) + 1) / (D + 2)`. Ranges over [-1, 1]; a pair that only
/// ever occurs together scores exactly 1.
pub fn npmi(df_a: usize, df_b: usize, df_ab: usize, docs: usize) -> f64 {
    let d = (docs + 2) as f64;
    let pa = (df_a + 1) as f64 / d;
    let pb = (df_b + 1) as f64 / d;
    let pab = (df_ab + 1) as f64 / d;
    let pmi = (pab / (pa * pb)).ln();
    (pmi / -pab.ln()).clamp(-1.0, 1.0)
}

/// Mean NPMI over the word pairs of each topic. Topics come from the
/// `topics * top_k` most document-frequent terms, merged by average-link
/// NPMI until `topics` clusters remain; each topic keeps its `top_k` most
/// frequent terms. Returns 0 when no topic has two terms.
pub fn topic_coherence<S: AsRef<str>>(corpus: &[S], cfg: CoherenceConfig) -> Result<f64, ExplainError> {
    if cfg.topics == 0 || corpus.len() < cfg.topics {
        return Err(ExplainError::CorpusTooSmall {
            docs: corpus.len(),
            topics: cfg.topics,
        });
    }
    let occ = Occurrence::build(corpus);
    let mut terms: Vec<(&String, usize)> = occ.index.iter().map(|(t, d)| (t, d.len())).collect();
    terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    terms.truncate(cfg.topics * cfg.top_k.max(1));
    let terms: Vec<&str> = terms.into_iter().map(|(t, _)| t.as_str()).collect();
    let n = terms.len();

    let mut pair = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = occ.npmi(terms[i], terms[j]);
            pair[i][j] = v;
            pair[j][i] = v;
        }
    }

    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > cfg.topics {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let links = clusters[a].len() * clusters[b].len();
                let sum: f64 = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| (i, j)))
                    .map(|(i, j)| pair[i][j])
                    .sum();
                let avg = sum / links as f64;
                if best.is_none_or(|(s, _, _)| avg > s) {
                    best = Some((avg, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters remain");
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
    }

    let mut scores = Vec::new();
    for cluster in &mut clusters {
        // indices follow frequency order, so the smallest are the most frequent
        cluster.sort_unstable();
        cluster.truncate(cfg.top_k);
        if cluster.len() < 2 {
            continue;
        }
        let mut sum = 0.0;
        let mut count = 0;
        for (x, &i) in cluster.iter().enumerate() {
            for &j in &cluster[x + 1..] {
                sum += pair[i][j];
                count += 1;
            }
        }
        scores.push(sum / count as f64);
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_pairs_score_one() {
        let corpus = [
            "alpha beta alpha beta",
            "gamma delta gamma delta",
            "epsilon zeta",
            "kappa lambda",
            "omega sigma",
        ];
        let c = topic_coherence(&corpus, CoherenceConfig { topics: 5, top_k: 2 }).unwrap();
        assert!((c - 1.0).abs() < 1e-12, "{c}");
    }

    #[test]
    fn independent_words_score_near_zero() {
        let mut corpus = Vec::new();
        for _ in 0..100 {
            corpus.extend(["xray yank", "xray", "yank", ""]);
        }
        let c = topic_coherence(&corpus, CoherenceConfig { topics: 1, top_k: 2 }).unwrap();
        assert!(c.abs() < 0.01, "{c}");
    }

    #[test]
    fn too_few_documents() {
        assert!(matches!(
            topic_coherence(&["one doc"], CoherenceConfig { topics: 2, top_k: 3 }),
            Err(ExplainError::CorpusTooSmall { docs: 1, topics: 2 })
        ));
    }

    #[test]
    fn npmi_bounds() {
        assert!((npmi(3, 3, 3, 10) - npmi(3, 3, 3, 10)).abs() < 1e-15);
        assert!(npmi(5, 5, 0, 10) < 0.0);
        assert!((npmi(4, 4, 4, 4) - 1.0).abs() < 1e-12);
    }
}
