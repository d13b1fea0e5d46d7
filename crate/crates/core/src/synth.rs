//! Seeded synthetic corpora whose cues the mock agents can read.
//!
//! Each email carries a URL cue and a metadata cue. A cue "agrees" with the
//! label when a phishing email gets the suspicious form (lookalike or
//! denylisted host; failing authentication or a mismatched Reply-To) and a
//! legitimate email the clean form. Agreement probabilities are set per cue,
//! so `url_agreement = 1, metadata_agreement = 0.5` makes the URL agent an
//! oracle and the metadata agent a coin flip.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::email::compose::MessageBuilder;
use crate::email::{CorpusLabel, RawEmail};
use crate::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub phishing_fraction: f64,
    pub url_agreement: f64,
    pub metadata_agreement: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 200,
            phishing_fraction: 0.5,
            url_agreement: 0.9,
            metadata_agreement: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// URL cue always right, metadata cue label-independent.
    pub fn url_oracle(count: usize, seed: u64) -> Self {
        Self {
            count,
            url_agreement: 1.0,
            metadata_agreement: 0.5,
            seed,
            ..Self::default()
        }
    }
}

const CLEAN_HOSTS: &[&str] = &[
    "www.university.example",
    "bank.example",
    "www.paypal.com",
    "www.amazon.com",
    "docs.microsoft.com",
    "news.example.org",
];
// Cyrillic lookalikes and denylisted domains
const BAD_HOSTS: &[&str] = &[
    "p\u{0430}ypal-billing.com",
    "\u{0430}pple-support.net",
    "micr\u{043e}soft-account.com",
    "secure-login.example",
    "account-verify.example",
    "\u{0430}mazon-orders.info",
];
const PHISH_SUBJECTS: &[&str] = &[
    "Urgent: account suspended",
    "Verify your password now",
    "Action required on your profile",
    "Final notice: invoice overdue",
];
const PHISH_BODIES: &[&str] = &[
    "Dear customer,\n\nYour account has been suspended. Click the link below to verify your credentials immediately.",
    "Hello,\n\nWe noticed an unusual login. Confirm your password within 24 hours or your account will expire.",
    "Dear user,\n\nYour invoice is overdue. Update your payment profile immediately to avoid suspension.",
];
const LEGIT_SUBJECTS: &[&str] = &[
    "Minutes from Tuesday",
    "Lunch on Friday?",
    "Quarterly newsletter",
    "Draft for review",
];
const LEGIT_BODIES: &[&str] = &[
    "Hi all,\n\nThe notes from the meeting are linked below. Let me know if anything is missing.",
    "Hey,\n\nAre we still on for Friday? The new place near the library opens at noon.",
    "Hello,\n\nHere is the latest issue of our newsletter with updates from the team.",
];

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty list")
}

fn message(i: usize, label: Label, url_bad: bool, meta_bad: bool, rng: &mut ChaCha8Rng) -> String {
    let (subject, body) = match label {
        Label::Phishing => (pick(rng, PHISH_SUBJECTS), pick(rng, PHISH_BODIES)),
        Label::Legitimate => (pick(rng, LEGIT_SUBJECTS), pick(rng, LEGIT_BODIES)),
    };
    let host = pick(rng, if url_bad { BAD_HOSTS } else { CLEAN_HOSTS });
    let url = format!("https://{host}/p/{}", rng.random_range(1000..10000));
    let mut b = MessageBuilder::new()
        .header("From", &format!("Sender {i} <sender{i}@mail.example>"))
        .header("To", "you@university.example")
        .header("Subject", subject)
        .header("Date", "Mon, 02 Jun 2025 09:00:00 +0000")
        .header("Message-ID", &format!("<synth-{i}@mail.example>"));
    if meta_bad {
        if rng.random_bool(0.5) {
            b = b.header("Authentication-Results", "mx.example; spf=fail; dkim=fail; dmarc=fail");
        } else {
            b = b
                .header("Authentication-Results", "mx.example; spf=pass; dkim=pass; dmarc=pass")
                .header("Reply-To", &format!("billing@collect{i}.example"));
        }
    } else {
        b = b.header("Authentication-Results", "mx.example; spf=pass; dkim=pass; dmarc=pass");
    }
    b.body_text(&format!("{body}\n\n{url}\n\nRegards")).build()
}

/// Deterministic in the config. Exactly `round(count * phishing_fraction)`
/// phishing emails, in shuffled order, ids `synth-0000`, `synth-0001`, ...
pub fn synthetic_corpus(cfg: &SynthConfig) -> Vec<RawEmail> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_phish = (cfg.count as f64 * cfg.phishing_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut labels: Vec<Label> = (0..cfg.count)
        .map(|i| if i < n_phish { Label::Phishing } else { Label::Legitimate })
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let phishing = label == Label::Phishing;
            let url_bad = phishing == rng.random_bool(cfg.url_agreement.clamp(0.0, 1.0));
            let meta_bad = phishing == rng.random_bool(cfg.metadata_agreement.clamp(0.0, 1.0));
            let text = message(i, label, url_bad, meta_bad, &mut rng);
            RawEmail::new(format!("synth-{i:04}"), text.into_bytes(), CorpusLabel::from(label))
        })
        .collect()
}
