use sha2::{Digest, Sha256};

use super::{neutral_sentences, AdversarialError, AdversarialVariant, Generator, SynonymLexicon, TransformKind};
use crate::agents::{build_prompt, run_with_retry, AgentRole, ChatBackend, ChatRequest, PromptContext};
use crate::confusables::ConfusableTable;
use crate::email::compose::MessageBuilder;
use crate::email::parse::parse_bytes;
use crate::email::ParsedEmail;
use crate::Label;

/// Asks the adversarial agent for a variant. The reply is taken verbatim as
/// the variant text; `emphasis` names the strategies to stress.
pub fn generate_llm_variant(
    backend: &dyn ChatBackend,
    email: &ParsedEmail,
    source_id: &str,
    label: Label,
    emphasis: &[TransformKind],
) -> Result<AdversarialVariant, AdversarialError> {
    let ctx = PromptContext {
        label: Some(label),
        emphasis: emphasis.iter().map(|k| k.prompt_name().to_string()).collect(),
        ..Default::default()
    };
    let request = ChatRequest {
        agent: AgentRole::Adversarial,
        messages: build_prompt(AgentRole::Adversarial, email, &ctx)?,
        json_mode: false,
    };
    let (text, _, _) = run_with_retry(backend, &request, |raw| Ok::<_, String>(raw.to_string()))?;
    if text.trim().is_empty() {
        return Err(AdversarialError::EmptyVariant);
    }
    let variant = variant_email(&text, email);
    let transforms = infer_transforms(email, &variant);
    let digest = Sha256::digest(text.as_bytes());
    Ok(AdversarialVariant {
        id: format!("{source_id}#adv-{}", hex::encode(&digest[..6])),
        source_id: source_id.to_string(),
        intended_label: label,
        text,
        transforms,
        generator: Generator::Llm,
        generated: true,
    })
}

/// Parses variant text. A reply without a usable header block is treated as
/// a new body under the source headers.
pub fn variant_email(text: &str, source: &ParsedEmail) -> ParsedEmail {
    if let Ok(parsed) = parse_bytes(text.as_bytes()) {
        let has_mail_headers = ["From", "Subject", "To"]
            .iter()
            .any(|h| parsed.headers.get(h).is_some());
        if has_mail_headers {
            return parsed;
        }
    }
    let rebuilt = MessageBuilder::from_parsed(source).body_text(text.trim()).build();
    parse_bytes(rebuilt.as_bytes()).unwrap_or_else(|_| source.clone())
}

fn word_count(haystack: &str, word: &str) -> usize {
    haystack
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.eq_ignore_ascii_case(word))
        .count()
}

/// Best-effort guess at which strategies produced `variant`. Lookalike
/// codepoints, pool sentences, synonym swaps and header changes are detected
/// directly; any other change to the body counts as a sentence rewrite.
pub fn infer_transforms(source: &ParsedEmail, variant: &ParsedEmail) -> Vec<TransformKind> {
    let table = ConfusableTable::bundled();
    let lookalikes = |s: &str| s.chars().filter(|c| !c.is_ascii() && table.latin_for(*c).is_some()).count();
    let src_text = format!("{}\n{}", source.subject, source.body_text);
    let var_text = format!("{}\n{}", variant.subject, variant.body_text);
    let mut out = Vec::new();

    let src_lower = src_text.to_lowercase();
    let var_lower = var_text.to_lowercase();
    let synonyms = SynonymLexicon::bundled().entries().any(|(key, alts)| {
        word_count(&src_lower, key) > word_count(&var_lower, key)
            && alts.iter().any(|a| var_lower.contains(&a.to_lowercase()) && !src_lower.contains(&a.to_lowercase()))
    });
    if synonyms {
        out.push(TransformKind::SynonymSub);
    }
    let neutral = neutral_sentences()
        .iter()
        .any(|s| variant.body_text.contains(s.as_str()) && !source.body_text.contains(s.as_str()));
    if neutral {
        out.push(TransformKind::ContentMod);
    }
    if lookalikes(&var_text) > lookalikes(&src_text) {
        out.push(TransformKind::Homoglyph);
    }
    let from = |e: &ParsedEmail| e.headers.get("From").map(str::to_string);
    if from(source) != from(variant) || source.body_html.is_some() != variant.body_html.is_some() {
        out.push(TransformKind::Polymorphic);
    }
    if out.is_empty() && table.skeleton(&var_text) != table.skeleton(&src_text) {
        out.push(TransformKind::SentenceRewrite);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{BackendError, ChatBackendConfig, MockBackend};

    struct Blank(ChatBackendConfig);

    impl ChatBackend for Blank {
        fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
            Ok("   \n".into())
        }
        fn config(&self) -> &ChatBackendConfig {
            &self.0
        }
    }

    const SRC: &str = "From: a@b.com\nSubject: Verify account\n\nPlease verify your account at https://paypal.com/login now.\n";

    #[test]
    fn mock_variant_keeps_label_and_changes_text() {
        let email = parse_bytes(SRC.as_bytes()).unwrap();
        for label in [Label::Phishing, Label::Legitimate] {
            let v = generate_llm_variant(&MockBackend::new(), &email, "s1", label, &[]).unwrap();
            assert_eq!(v.intended_label, label);
            assert_eq!(v.generator, Generator::Llm);
            assert!(v.transforms.contains(&TransformKind::SynonymSub));
            let parsed = variant_email(&v.text, &email);
            assert_eq!(parsed.subject, "Confirm profile");
        }
    }

    #[test]
    fn blank_reply_is_an_error() {
        let email = parse_bytes(SRC.as_bytes()).unwrap();
        let err = generate_llm_variant(&Blank(ChatBackendConfig::mock()), &email, "s", Label::Phishing, &[]);
        assert!(matches!(err, Err(AdversarialError::EmptyVariant)));
    }

    #[test]
    fn body_only_reply_keeps_source_headers() {
        let email = parse_bytes(SRC.as_bytes()).unwrap();
        let v = variant_email("Kindly review your details.", &email);
        assert_eq!(v.subject, "Verify account");
        assert_eq!(v.body_text.trim(), "Kindly review your details.");
        assert_eq!(infer_transforms(&email, &v), vec![TransformKind::SentenceRewrite]);
    }
}
