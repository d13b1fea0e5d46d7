use std::collections::{BTreeSet, HashMap};

use super::ExplainError;
use crate::text::tokenize;

/// Clipped unigram recall of `candidate` against `reference`.
pub fn rouge1_recall(candidate: &[String], reference: &[String]) -> Result<f64, ExplainError> {
    if reference.is_empty() {
        return Err(ExplainError::EmptyReference);
    }
    let mut cand: HashMap<&str, usize> = HashMap::new();
    for t in candidate {
        *cand.entry(t.as_str()).or_default() += 1;
    }
    let mut refc: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *refc.entry(t.as_str()).or_default() += 1;
    }
    let overlap: usize = refc
        .iter()
        .map(|(w, &r)| r.min(cand.get(w).copied().unwrap_or(0)))
        .sum();
    Ok(overlap as f64 / reference.len() as f64)
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64, ExplainError> {
    if a.len() != b.len() {
        return Err(ExplainError::DimensionMismatch { a: a.len(), b: b.len() });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(ExplainError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Sorted union of the token types of both texts.
pub fn shared_vocab(a: &str, b: &str) -> Vec<String> {
    let set: BTreeSet<String> = tokenize(a).into_iter().chain(tokenize(b)).collect();
    set.into_iter().collect()
}

/// Term-frequency vector of `text` over `vocab`.
pub fn embed_text(text: &str, vocab: &[String]) -> Vec<f64> {
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut v = vec![0.0; vocab.len()];
    for t in tokenize(text) {
        if let Some(&i) = index.get(t.as_str()) {
            v[i] += 1.0;
        }
    }
    v
}

/// Turns a pair of texts into comparable vectors. External embedding
/// services plug in here.
pub trait Embedder: Send + Sync {
    fn embed_pair(&self, a: &str, b: &str) -> (Vec<f64>, Vec<f64>);
}

/// Term-frequency vectors over the pair's shared vocabulary.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfEmbedder;

impl Embedder for TfEmbedder {
    fn embed_pair(&self, a: &str, b: &str) -> (Vec<f64>, Vec<f64>) {
        let vocab = shared_vocab(a, b);
        (embed_text(a, &vocab), embed_text(b, &vocab))
    }
}

pub fn tf_cosine(a: &str, b: &str) -> Result<f64, ExplainError> {
    let (x, y) = TfEmbedder.embed_pair(a, b);
    cosine_sim(&x, &y)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn rouge_examples() {
        let r = toks("verify your account");
        assert_eq!(rouge1_recall(&r, &r).unwrap(), 1.0);
        assert!((rouge1_recall(&toks("urgent account verify"), &r).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge1_recall(&toks("hello world"), &r).unwrap(), 0.0);
        assert!(matches!(rouge1_recall(&r, &[]), Err(ExplainError::EmptyReference)));
        // clipping: repeating a word does not count twice
        assert!((rouge1_recall(&toks("verify verify verify"), &r).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[1.0, -2.0], &[-1.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(cosine_sim(&[0.0], &[1.0]), Err(ExplainError::ZeroVector)));
        assert!(matches!(cosine_sim(&[1.0], &[1.0, 0.0]), Err(ExplainError::DimensionMismatch { .. })));
    }

    #[test]
    fn embedding_examples() {
        assert_eq!(embed_text("a a b", &["a".to_string(), "b".to_string()]), vec![2.0, 1.0]);
        assert!((tf_cosine("the link is fake", "the link is fake").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(tf_cosine("alpha beta", "gamma delta").unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn rouge_is_bounded_and_monotone(c in prop::collection::vec("[a-e]", 0..8), r in prop::collection::vec("[a-e]", 1..8), extra in "[a-e]") {
            let base = rouge1_recall(&c, &r).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            let mut more = c.clone();
            more.push(extra);
            prop_assert!(rouge1_recall(&more, &r).unwrap() >= base);
        }

        #[test]
        fn cosine_is_scale_invariant(a in prop::collection::vec(-5.0f64..5.0, 4), b in prop::collection::vec(-5.0f64..5.0, 4), k in 0.01f64..100.0) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
            prop_assert!((cosine_sim(&scaled, &b).unwrap() - cosine_sim(&a, &b).unwrap()).abs() < 1e-9);
        }
    }
}
