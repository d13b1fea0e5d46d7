//! Deterministic rule-based transforms: the offline counterpart of the LLM
//! generator.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use super::{AdversarialError, AdversarialVariant, Generator, TransformKind};
use crate::confusables::ConfusableTable;
use crate::email::compose::MessageBuilder;
use crate::email::ParsedEmail;
use crate::Label;

/// Kinds the rule-based generator implements, in application order.
pub const RULE_KINDS: [TransformKind; 3] = [
    TransformKind::SynonymSub,
    TransformKind::ContentMod,
    TransformKind::Homoglyph,
];

const SYNONYMS: &str = include_str!("../../data/synonyms.tsv");
const NEUTRAL: &str = include_str!("../../data/neutral_sentences.txt");

/// Brand names whose letters are homoglyph targets even outside a domain.
const BRANDS: &[&str] = &[
    "paypal", "apple", "microsoft", "amazon", "google", "netflix", "facebook", "linkedin",
    "dropbox", "docusign", "outlook", "office",
];

static DOMAIN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:[a-z0-9](?:[a-z0-9-]*[a-z0-9])?\.)+[a-z]{2,}").unwrap()
});
static BRAND: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)\b(?:{})\b", BRANDS.join("|"))).unwrap());
static BUNDLED_SYNONYMS: LazyLock<SynonymLexicon> =
    LazyLock::new(|| SynonymLexicon::parse(SYNONYMS).expect("bundled synonym table is valid"));
static NEUTRAL_POOL: LazyLock<Vec<String>> = LazyLock::new(|| {
    NEUTRAL
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
});

/// Keyword to replacement table for synonym substitution.
#[derive(Debug, Clone)]
pub struct SynonymLexicon {
    map: BTreeMap<String, Vec<String>>,
    pattern: Option<Regex>,
}

impl SynonymLexicon {
    pub fn bundled() -> &'static SynonymLexicon {
        &BUNDLED_SYNONYMS
    }

    /// `keyword<TAB>replacement[<TAB>alternative ...]` lines; `#` comments.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t').map(str::trim);
            let key = cols.next().unwrap_or_default();
            let alts: Vec<String> = cols.filter(|c| !c.is_empty()).map(String::from).collect();
            if key.is_empty() || alts.is_empty() {
                return Err(format!("line {}: expected a keyword and at least one replacement", i + 1));
            }
            pairs.push((key.to_string(), alts));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<String>)>) -> Self {
        let map: BTreeMap<String, Vec<String>> = pairs
            .into_iter()
            .filter(|(_, alts)| !alts.is_empty())
            .map(|(k, alts)| (k.to_lowercase(), alts))
            .collect();
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort_by_key(|k| std::cmp::Reverse(k.len()));
        let pattern = (!keys.is_empty()).then(|| {
            let alt: Vec<String> = keys.iter().map(|k| regex::escape(k)).collect();
            Regex::new(&format!(r"(?i)\b(?:{})\b", alt.join("|"))).expect("escaped keys form a valid regex")
        });
        Self { map, pattern }
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn replacements(&self, word: &str) -> &[String] {
        self.map.get(&word.to_lowercase()).map_or(&[], Vec::as_slice)
    }
}

pub fn neutral_sentences() -> &'static [String] {
    &NEUTRAL_POOL
}

/// Whole-word, case-preserving replacement of every lexicon key. When a key
/// has several replacements the seed picks one per occurrence.
pub fn synonym_substitute(text: &str, lexicon: &SynonymLexicon, seed: u64) -> String {
    let Some(pattern) = &lexicon.pattern else {
        return text.to_string();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pattern
        .replace_all(text, |caps: &regex::Captures| {
            let word = &caps[0];
            let alts = lexicon.replacements(word);
            let pick = if alts.len() == 1 { 0 } else { rng.random_range(0..alts.len()) };
            match_case(word, &alts[pick])
        })
        .into_owned()
}

fn match_case(original: &str, replacement: &str) -> String {
    let letters: Vec<char> = original.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return replacement.to_uppercase();
    }
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        if let Some(first) = chars.next() {
            return first.to_uppercase().chain(chars).collect();
        }
    }
    replacement.to_string()
}

/// Byte offsets of letters that may be swapped for a lookalike: letters with
/// a confusable inside domain names (email addresses excluded) and brand
/// tokens.
pub fn eligible_positions(text: &str) -> Vec<usize> {
    let table = ConfusableTable::bundled();
    let mut spans = Vec::new();
    for m in DOMAIN.find_iter(text) {
        let before = text[..m.start()].chars().next_back();
        let after = text[m.end()..].chars().next();
        if before == Some('@') || after == Some('@') {
            continue;
        }
        spans.push((m.start(), m.end()));
    }
    spans.extend(BRAND.find_iter(text).map(|m| (m.start(), m.end())));

    let mut out = BTreeSet::new();
    for (start, end) in spans {
        for (i, c) in text[start..end].char_indices() {
            if c.is_ascii_alphabetic() && table.has_replacement(c) {
                out.insert(start + i);
            }
        }
    }
    out.into_iter().collect()
}

/// Swaps the ASCII letter at each byte offset for its first confusable.
pub fn replace_at(text: &str, positions: &[usize]) -> String {
    let table = ConfusableTable::bundled();
    let wanted: BTreeSet<usize> = positions.iter().copied().collect();
    text.char_indices()
        .map(|(i, c)| {
            if wanted.contains(&i) {
                table.replacements(c).first().copied().unwrap_or(c)
            } else {
                c
            }
        })
        .collect()
}

/// Replaces `ceil(intensity * eligible)` eligible letters, chosen by the
/// seed. Intensities outside (0, 1] are clamped; zero leaves the text alone.
pub fn homoglyph_replace(text: &str, intensity: f64, seed: u64) -> String {
    let eligible = eligible_positions(text);
    if eligible.is_empty() || intensity.is_nan() || intensity <= 0.0 {
        return text.to_string();
    }
    let n = eligible.len();
    let k = ((intensity.min(1.0) * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = sample(&mut rng, n, k).into_iter().map(|i| eligible[i]).collect();
    replace_at(text, &picked)
}

fn pick_sentence(text: &str, seed: u64) -> Option<&'static str> {
    let fresh: Vec<&str> = neutral_sentences()
        .iter()
        .map(String::as_str)
        .filter(|s| !text.contains(s))
        .collect();
    if fresh.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(fresh[rng.random_range(0..fresh.len())])
}

fn insert_paragraph(text: &str, sentence: &str) -> String {
    match text.split_once("\n\n") {
        Some((head, tail)) => format!("{head}\n\n{sentence}\n\n{tail}"),
        None if text.trim().is_empty() => sentence.to_string(),
        None => format!("{}\n\n{sentence}\n", text.trim_end()),
    }
}

/// Inserts one neutral sentence from the bundled pool as its own paragraph,
/// after the first paragraph.
pub fn content_modify(text: &str, seed: u64) -> String {
    match pick_sentence(text, seed) {
        Some(s) => insert_paragraph(text, s),
        None => text.to_string(),
    }
}

fn insert_html(html: &str, sentence: &str) -> String {
    let para = format!("<p>{sentence}</p>");
    match html.to_ascii_lowercase().rfind("</body") {
        Some(i) => format!("{}{para}{}", &html[..i], &html[i..]),
        None => format!("{html}{para}"),
    }
}

fn sub_seed(seed: u64, kind: TransformKind) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(kind.as_str().as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Kinds the mock adversarial agent applies per class. Legitimate mail keeps
/// its links intact.
pub fn mock_transform_kinds(label: Label) -> &'static [TransformKind] {
    match label {
        Label::Phishing => &[
            TransformKind::SynonymSub,
            TransformKind::ContentMod,
            TransformKind::Homoglyph,
        ],
        Label::Legitimate => &[TransformKind::SynonymSub, TransformKind::ContentMod],
    }
}

/// Applies the requested rule kinds in the fixed order of [`RULE_KINDS`] and
/// renders the full message. Kinds without a rule implementation are
/// ignored. When nothing changed, a content modification is applied so the
/// result always differs from the source. Returns the message and the kinds
/// that changed it.
pub fn rule_based_message(
    parsed: &ParsedEmail,
    kinds: &[TransformKind],
    seed: u64,
    intensity: f64,
) -> (String, Vec<TransformKind>) {
    let lexicon = SynonymLexicon::bundled();
    let mut subject = parsed.subject.clone();
    let mut body = parsed.body_text.clone();
    let mut html = parsed.body_html.clone();
    let mut applied = Vec::new();

    let content_mod = |body: &mut String, html: &mut Option<String>, seed: u64| -> bool {
        let Some(s) = pick_sentence(body, seed) else {
            return false;
        };
        *body = insert_paragraph(body, s);
        if let Some(h) = html.as_mut() {
            *h = insert_html(h, s);
        }
        true
    };

    for kind in RULE_KINDS.into_iter().filter(|k| kinds.contains(k)) {
        let s = sub_seed(seed, kind);
        let changed = match kind {
            TransformKind::SynonymSub => {
                let new_subject = synonym_substitute(&subject, lexicon, s);
                let new_body = synonym_substitute(&body, lexicon, s);
                let new_html = html.as_deref().map(|h| synonym_substitute(h, lexicon, s));
                let changed = new_subject != subject || new_body != body || new_html != html;
                (subject, body, html) = (new_subject, new_body, new_html);
                changed
            }
            TransformKind::ContentMod => content_mod(&mut body, &mut html, s),
            TransformKind::Homoglyph => {
                let new_body = homoglyph_replace(&body, intensity, s);
                let new_html = html.as_deref().map(|h| homoglyph_replace(h, intensity, s));
                let changed = new_body != body || new_html != html;
                (body, html) = (new_body, new_html);
                changed
            }
            _ => false,
        };
        if changed {
            applied.push(kind);
        }
    }
    if applied.is_empty()
        && content_mod(&mut body, &mut html, sub_seed(seed, TransformKind::ContentMod))
    {
        applied.push(TransformKind::ContentMod);
    }

    let mut builder = MessageBuilder::from_parsed(parsed);
    if subject != parsed.subject {
        builder = builder.set_header("Subject", &subject);
    }
    let message = builder.body_text(&body).body_html(html.as_deref()).build();
    (message, applied)
}

/// A rule-based variant of `email`. The id is derived from the variant text.
pub fn rule_based_variant(
    email: &ParsedEmail,
    source_id: &str,
    label: Label,
    kinds: &[TransformKind],
    seed: u64,
    intensity: f64,
) -> Result<AdversarialVariant, AdversarialError> {
    if let Some(k) = kinds.iter().find(|k| !RULE_KINDS.contains(k)) {
        return Err(AdversarialError::InvalidConfig(format!(
            "the rule-based generator does not implement {k}"
        )));
    }
    let (text, transforms) = rule_based_message(email, kinds, seed, intensity);
    if transforms.is_empty() {
        return Err(AdversarialError::Unchanged);
    }
    let digest = Sha256::digest(text.as_bytes());
    Ok(AdversarialVariant {
        id: format!("{source_id}#adv-{}", hex::encode(&digest[..6])),
        source_id: source_id.to_string(),
        intended_label: label,
        text,
        transforms,
        generator: Generator::RuleBased,
        generated: true,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::email::parse::parse_bytes;

    #[test]
    fn paypal_first_letter_swapped() {
        let positions = eligible_positions("paypal.com");
        assert_eq!(positions.len(), 9);
        let out = replace_at("paypal.com", &[1]);
        assert_eq!(out, "p\u{0430}ypal.com");
        assert_ne!(out, "paypal.com");
        let t = ConfusableTable::bundled();
        assert_eq!(t.skeleton(&out), "paypal.com");
    }

    #[test]
    fn smallest_intensity_replaces_one_letter() {
        let out = homoglyph_replace("visit paypal.com today", 0.01, 3);
        let diff = out.chars().zip("visit paypal.com today".chars()).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 1);
    }

    #[test]
    fn digits_and_addresses_are_left_alone() {
        assert_eq!(homoglyph_replace("http://192.168.0.1/x", 1.0, 1), "http://192.168.0.1/x");
        assert_eq!(homoglyph_replace("mail jose@monkey.org", 1.0, 1), "mail jose@monkey.org");
        assert_eq!(homoglyph_replace("nothing here", 1.0, 1), "nothing here");
    }

    #[test]
    fn synonym_examples() {
        let lex = SynonymLexicon::bundled();
        assert_eq!(synonym_substitute("verify your account", lex, 0), "confirm your profile");
        assert_eq!(synonym_substitute("Verify now", lex, 0), "Confirm now");
        assert_eq!(synonym_substitute("VERIFY", lex, 0), "CONFIRM");
        assert_eq!(synonym_substitute("get it free", lex, 0), "get it no money is needed");
        assert_eq!(synonym_substitute("hello there", lex, 0), "hello there");
        assert_eq!(synonym_substitute("verifying", lex, 0), "verifying");
        assert_eq!(
            synonym_substitute("Important Password Validation", lex, 0),
            "Vital Password Confirmation"
        );
    }

    #[test]
    fn empty_lexicon_is_identity() {
        let lex = SynonymLexicon::from_pairs([]);
        assert!(lex.is_empty());
        assert_eq!(synonym_substitute("verify", &lex, 1), "verify");
    }

    #[test]
    fn content_mod_inserts_pool_sentence() {
        let out = content_modify("Hi Jo,\n\nPlease pay the invoice.\n", 9);
        assert!(neutral_sentences().iter().any(|s| out.contains(s.as_str())));
        assert!(out.starts_with("Hi Jo,\n\n"));
        assert!(out.ends_with("Please pay the invoice.\n"));
    }

    const ONE_URL: &str = "From: a@b.com\nSubject: hello\n\nSee https://example.org/x please.\n";

    #[test]
    fn homoglyph_only_records_one_transform() {
        let e = parse_bytes(ONE_URL.as_bytes()).unwrap();
        let v = rule_based_variant(&e, "m1", Label::Phishing, &[TransformKind::Homoglyph], 5, 0.3).unwrap();
        assert_eq!(v.transforms, vec![TransformKind::Homoglyph]);
        assert!(v.generated);
        let out = parse_bytes(v.text.as_bytes()).unwrap();
        assert!(out.urls[0].homoglyph_suspect);
    }

    #[test]
    fn content_mod_variant_and_determinism() {
        let e = parse_bytes(ONE_URL.as_bytes()).unwrap();
        let a = rule_based_variant(&e, "m1", Label::Legitimate, &[TransformKind::ContentMod], 5, 0.3).unwrap();
        let b = rule_based_variant(&e, "m1", Label::Legitimate, &[TransformKind::ContentMod], 5, 0.3).unwrap();
        assert_eq!(a, b);
        assert!(neutral_sentences().iter().any(|s| a.text.contains(s.as_str())));
        assert_eq!(a.intended_label, Label::Legitimate);
    }

    #[test]
    fn nothing_to_change_falls_back_to_content_mod() {
        let e = parse_bytes(b"Subject: hi\n\nlunch at noon\n").unwrap();
        let (_, applied) = rule_based_message(&e, &[TransformKind::SynonymSub], 1, 0.5);
        assert_eq!(applied, vec![TransformKind::ContentMod]);
    }

    #[test]
    fn unsupported_kind_is_rejected() {
        let e = parse_bytes(ONE_URL.as_bytes()).unwrap();
        assert!(rule_based_variant(&e, "m", Label::Phishing, &[TransformKind::Polymorphic], 1, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn homoglyph_preserves_skeleton(host in "[a-z]{1,10}\\.(com|net|org)", prefix in "[a-z ]{0,12}", intensity in 0.01f64..=1.0, seed in any::<u64>()) {
            let text = format!("{prefix} https://{host}/path");
            let out = homoglyph_replace(&text, intensity, seed);
            let table = ConfusableTable::bundled();
            prop_assert_eq!(table.skeleton(&out), table.skeleton(&text));
            if !eligible_positions(&text).is_empty() {
                prop_assert_ne!(out, text);
            }
        }

        #[test]
        fn rule_generation_is_pure(seed in any::<u64>(), intensity in 0.05f64..=1.0) {
            let e = parse_bytes(b"From: x@y.com\nSubject: Verify account\n\nClick https://paypal.com/login to verify.\n").unwrap();
            let a = rule_based_message(&e, &RULE_KINDS, seed, intensity);
            let b = rule_based_message(&e, &RULE_KINDS, seed, intensity);
            prop_assert_eq!(a, b);
        }
    }
}
