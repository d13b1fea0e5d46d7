use serde::{Deserialize, Serialize};

use super::{AgentError, AgentReport, AgentRole, ChatMessage};
use crate::email::compose::MessageBuilder;
use crate::email::ParsedEmail;
use crate::Label;

pub const TEXT_SYSTEM: &str = "You are a cybersecurity expert specializing in phishing, with a particular focus on email text content. Your task is to examine the email body exclusively for phishing cues—such as abnormal language patterns, suspicious vocabulary, or any textual indicators of malicious intent. Do not analyze URLs or metadata, only focus on the email text. Provide your judgment on whether the email is 'Phishing' or 'Legitimate', along with a confidence score between 0 and 1 and a clear, concise explanation of your reasoning. Output your result in JSON format as: {'verdict': 'Phishing' or 'Legitimate', 'confidence': 0-1, 'reasons': '...'}";

pub const URL_SYSTEM: &str = "You are a cybersecurity expert specializing in phishing, with a particular focus on URLs within emails. Your task is to carefully examine every URL in the email and determine whether it exhibits suspicious characteristics or signs of obfuscation, such as resembling forged bank sites, using unknown domains, or appearing unusually shortened. Do not analyze the email text or metadata, only focus on the URLs. Provide your judgment on whether the email is 'Phishing' or 'Legitimate', along with a confidence score between 0 and 1 and a clear, concise explanation of your reasoning. Output your result in JSON format as: {'verdict': 'Phishing' or 'Legitimate', 'confidence': 0-1, 'reasons': '...'}";

pub const METADATA_SYSTEM: &str = "You are a cybersecurity expert specializing in phishing, with a particular focus on email metadata. Your task is to scrutinize the provided email header—including the subject, sender address, reply-to, return-path, and received fields—for any signs of forgery, anomalies, or suspicious indicators. Do not analyze email text or URLs, only focus on the metadata. Provide your judgment on whether the email is 'Phishing' or 'Legitimate', along with a confidence score between 0 and 1 and a clear, concise explanation of your reasoning. Output your result in JSON format as: {'verdict': 'Phishing' or 'Legitimate', 'confidence': 0-1, 'reasons': '...'}";

pub const SIMPLIFIER_SYSTEM: &str = "You are an expert in cybersecurity with deep expertise in phishing. Your task is to take the detailed technical explanations provided by the three specialized agents (text, URL, and metadata) for why an email is classified as phishing or legitimate, and synthesize them into one coherent, reliable, and complete explanation written in plain, everyday language. Ensure that your explanation is truthful, meaningful, and based solely on factual evidence—do not include any fabricated details. Avoid technical jargon, simplify complex concepts, and provide clear, concise reasons for the classification that accurately reflect the underlying data.";

/// Appended to the simplifier prompt in expert mode.
pub const EXPERT_SUFFIX: &str = "Expert Mode: the reader is a security analyst. Instead of plain language, give a detailed technical explanation. List the indicators of compromise you can support from the agents' findings, include an analysis of the email headers, and reference threat intelligence frameworks where they apply.";

pub const ADVERSARIAL_INTRO: &str = "You are an expert adversarial email generator. Your objective is to produce a variant of the provided email that maintains the original meaning and structure while incorporating subtle modifications designed to bypass the phishing detectors. Depending on the type of email provided, follow the corresponding instructions:";

pub const ADVERSARIAL_PHISHING: &str = "For phishing emails:
1. Synonym Substitution: Replace keywords with synonyms (e.g., \"verify\" → \"confirm\", \"account\" → \"profile\", \"free\" → \"no money is needed\") so that the literal expression changes while the meaning remains intact.
2. Sentence Rewriting: Alter the sentence structure without changing the underlying message (e.g., transform \"Update your account immediately\" into \"Please refresh your account details at your earliest convenience\"). Add decoy sentences about customer support/legitimate services. Remove overt threat indicators while maintaining urgency.
3. Content Modification: Add or remove words and phrases as needed; for example, insert a neutral sentence like \"We hope this email serves you well\" or omit less critical content, to change the text's composition.
4. Homoglyph Replacement: Substitute characters with similar-looking counterparts (e.g., replace the letter \"a\" in \"paypal.com\" with a Cyrillic \"а\" to disguise URLs while retaining their recognizable form.
5. Polymorphic Variation: Modifying aspects such as the subject line, sender information, or overall format, thereby simulating a diverse range of phishing attack styles.";

pub const ADVERSARIAL_LEGITIMATE: &str = "For legitimate emails:
1. Subtle Suspicious Modifications: Modify the email in ways that make it appear more ambiguous or borderline suspicious (e.g., incorporate slightly urgent language or modify the subject line) without compromising its inherently benign intent.
2. Synonym Substitution and Sentence Rewriting: Use similar techniques as above but ensure that the overall message remains authentic and professional, even if the modifications introduce elements that could potentially confuse detection systems.
3. Content Enhancement: Optionally insert additional phrases that mimic some characteristics of phishing emails (e.g., ambiguous urgency or formatting cues), while still maintaining the legitimacy of the email.
4. Polymorphic Variation: Adjust non-critical elements like the layout or minor stylistic details to introduce natural variability without altering the email's genuine nature.";

pub const ADVERSARIAL_OUTPUT: &str = "Output Requirements:
- For phishing emails, the final variant should retain the malicious intent and target brand while evading detection.
- For legitimate emails, the final variant should remain clearly benign and professional, yet include subtle modifications that challenge the detector.
- Provide only the final modified email text and do not disclose the modification details.";

const PLACEHOLDERS: &[&str] = &["body", "urls", "headers", "reports", "email"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExplanationMode {
    #[default]
    Plain,
    Expert,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub role: AgentRole,
    pub system_text: String,
    pub user_template: String,
}

impl PromptTemplate {
    pub fn for_role(role: AgentRole) -> Self {
        let (system, user) = match role {
            AgentRole::Text => (TEXT_SYSTEM.to_string(), "Email text:\n{body}"),
            AgentRole::Url => (URL_SYSTEM.to_string(), "URLs in the email:\n{urls}"),
            AgentRole::Metadata => (METADATA_SYSTEM.to_string(), "Email metadata:\n{headers}"),
            AgentRole::Simplifier => (SIMPLIFIER_SYSTEM.to_string(), "Agent findings:\n{reports}"),
            AgentRole::Adversarial => (
                format!("{ADVERSARIAL_INTRO}\n\n{ADVERSARIAL_PHISHING}\n\n{ADVERSARIAL_LEGITIMATE}\n\n{ADVERSARIAL_OUTPUT}"),
                "Email:\n{email}",
            ),
        };
        Self {
            role,
            system_text: system,
            user_template: user.to_string(),
        }
    }

    /// Substitutes `{name}` placeholders in one left-to-right pass, so values
    /// that themselves contain braces are never re-expanded. Every known
    /// placeholder present in the template must have a value.
    pub fn render_user(&self, values: &[(&str, &str)]) -> Result<String, AgentError> {
        let tpl = self.user_template.as_str();
        let mut out = String::with_capacity(tpl.len());
        let mut rest = tpl;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let name = after
                .find('}')
                .map(|close| &after[..close])
                .filter(|n| PLACEHOLDERS.contains(n));
            match name {
                Some(name) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| {
                            AgentError::MissingInput(format!("no value for placeholder {{{name}}}"))
                        })?;
                    out.push_str(value);
                    rest = &after[name.len() + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Extra inputs for roles that need more than the email itself.
#[derive(Debug, Clone, Default)]
pub struct PromptContext<'a> {
    pub reports: Option<&'a [AgentReport]>,
    pub mode: ExplanationMode,
    /// Class of the email handed to the adversarial generator.
    pub label: Option<Label>,
    /// Transform names to stress in the adversarial prompt.
    pub emphasis: Vec<String>,
}

/// System and user messages for one role. Detection roles only see their own
/// modality: the text agent gets the body, the URL agent the link list and
/// the metadata agent the header fields.
pub fn build_prompt(
    role: AgentRole,
    email: &ParsedEmail,
    ctx: &PromptContext<'_>,
) -> Result<Vec<ChatMessage>, AgentError> {
    let tpl = PromptTemplate::for_role(role);
    match role {
        AgentRole::Text => {
            let user = tpl.render_user(&[("body", &email.body_text)])?;
            Ok(messages(tpl.system_text, user))
        }
        AgentRole::Url => {
            let urls = if email.urls.is_empty() {
                "(no URLs found)".to_string()
            } else {
                email
                    .urls
                    .iter()
                    .map(|u| format!("- {}", u.raw))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let user = tpl.render_user(&[("urls", &urls)])?;
            Ok(messages(tpl.system_text, user))
        }
        AgentRole::Metadata => {
            let user = tpl.render_user(&[("headers", &metadata_block(email))])?;
            Ok(messages(tpl.system_text, user))
        }
        AgentRole::Simplifier => {
            let reports = ctx.reports.ok_or_else(|| {
                AgentError::MissingInput("the simplifier needs the three agent reports".into())
            })?;
            build_simplifier_prompt(reports, ctx.mode)
        }
        AgentRole::Adversarial => {
            let label = ctx.label.ok_or_else(|| {
                AgentError::MissingInput("the adversarial generator needs the email's label".into())
            })?;
            let branch = match label {
                Label::Phishing => ADVERSARIAL_PHISHING,
                Label::Legitimate => ADVERSARIAL_LEGITIMATE,
            };
            let system = format!("{ADVERSARIAL_INTRO}\n\n{branch}\n\n{ADVERSARIAL_OUTPUT}");
            let message = MessageBuilder::from_parsed(email).build();
            let mut user = format!("Email type: {}\n", label.as_str().to_lowercase());
            if !ctx.emphasis.is_empty() {
                user.push_str(&format!(
                    "Emphasis: these strategies got past the detector last round, lean on them: {}\n",
                    ctx.emphasis.join(", ")
                ));
            }
            user.push('\n');
            user.push_str(&tpl.render_user(&[("email", &message)])?);
            Ok(messages(system, user))
        }
    }
}

pub fn build_simplifier_prompt(
    reports: &[AgentReport],
    mode: ExplanationMode,
) -> Result<Vec<ChatMessage>, AgentError> {
    let detection: Vec<&AgentReport> = AgentRole::DETECTION
        .iter()
        .filter_map(|role| reports.iter().find(|r| r.role == *role))
        .collect();
    if reports.len() < 3 || detection.len() < 3 {
        return Err(AgentError::MissingInput(format!(
            "the simplifier needs text, URL and metadata reports, got {}",
            reports.len()
        )));
    }
    let tpl = PromptTemplate::for_role(AgentRole::Simplifier);
    let block = detection
        .iter()
        .map(|r| {
            format!(
                "{} agent: verdict {}, confidence {}. Reasons: {}",
                r.role,
                r.verdict.verdict.as_str(),
                r.verdict.confidence,
                r.verdict.reasons
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let system = match mode {
        ExplanationMode::Plain => tpl.system_text.clone(),
        ExplanationMode::Expert => format!("{}\n\n{EXPERT_SUFFIX}", tpl.system_text),
    };
    let user = tpl.render_user(&[("reports", &block)])?;
    Ok(messages(system, user))
}

/// Header lines the metadata agent may see, in a fixed order.
pub fn metadata_block(email: &ParsedEmail) -> String {
    let mut lines = Vec::new();
    for name in ["Subject", "From", "To", "Date", "Reply-To", "Return-Path"] {
        if let Some(v) = email.headers.get(name) {
            lines.push(format!("{name}: {v}"));
        }
    }
    for v in &email.received_chain {
        lines.push(format!("Received: {v}"));
    }
    for v in email.headers.get_all("Authentication-Results") {
        lines.push(format!("Authentication-Results: {v}"));
    }
    if lines.is_empty() {
        "(no header fields)".into()
    } else {
        lines.join("\n")
    }
}

fn messages(system: String, user: String) -> Vec<ChatMessage> {
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentVerdict;
    use crate::email::parse::parse_bytes;

    const SAMPLE: &str = "From: Bank <alerts@bank.example>\nTo: you@home.example\n\
        Subject: Account notice\nReply-To: help@other.example\n\
        Received: from mx1.example by mx2.example\n\
        Authentication-Results: mx2.example; spf=fail; dkim=fail; dmarc=none\n\n\
        Please verify your account today.\nVisit https://login.bank-secure.example/verify now.\n";

    fn sample() -> ParsedEmail {
        parse_bytes(SAMPLE.as_bytes()).unwrap()
    }

    fn report(role: AgentRole) -> AgentReport {
        AgentReport {
            role,
            verdict: AgentVerdict::new(Label::Phishing, 0.9, "suspicious link").unwrap(),
            raw_response: String::new(),
            latency_ms: 0,
            attempts: 1,
        }
    }

    #[test]
    fn detection_prompts_start_with_role_sentence() {
        for role in AgentRole::DETECTION {
            let msgs = build_prompt(role, &sample(), &PromptContext::default()).unwrap();
            assert!(msgs[0]
                .content
                .starts_with("You are a cybersecurity expert specializing in phishing"));
        }
    }

    #[test]
    fn text_prompt_has_body_and_no_headers() {
        let msgs = build_prompt(AgentRole::Text, &sample(), &PromptContext::default()).unwrap();
        let user = &msgs[1].content;
        assert!(user.contains("Please verify your account today."));
        for h in ["From:", "Reply-To:", "Received:", "Authentication-Results:", "Subject:"] {
            assert!(!user.contains(h), "{h} leaked into the text prompt");
        }
    }

    #[test]
    fn metadata_prompt_has_headers_and_no_body() {
        let msgs = build_prompt(AgentRole::Metadata, &sample(), &PromptContext::default()).unwrap();
        let user = &msgs[1].content;
        for h in ["Subject: Account notice", "From:", "Reply-To:", "Received:", "spf=fail"] {
            assert!(user.contains(h), "missing {h}");
        }
        assert!(!user.contains("verify your account"));
        assert!(!user.contains("https://"));
    }

    #[test]
    fn url_prompt_lists_only_urls() {
        let msgs = build_prompt(AgentRole::Url, &sample(), &PromptContext::default()).unwrap();
        let user = &msgs[1].content;
        assert!(user.contains("https://login.bank-secure.example/verify"));
        assert!(!user.contains("Please verify"));
        assert!(!user.contains("Reply-To"));
    }

    #[test]
    fn simplifier_needs_three_reports() {
        let two = [report(AgentRole::Text), report(AgentRole::Url)];
        let ctx = PromptContext {
            reports: Some(&two),
            ..Default::default()
        };
        assert!(matches!(
            build_prompt(AgentRole::Simplifier, &sample(), &ctx),
            Err(AgentError::MissingInput(_))
        ));
        let three = [report(AgentRole::Text), report(AgentRole::Url), report(AgentRole::Metadata)];
        let msgs = build_simplifier_prompt(&three, ExplanationMode::Expert).unwrap();
        assert!(msgs[0].content.ends_with(EXPERT_SUFFIX));
        assert_eq!(msgs[1].content.matches("suspicious link").count(), 3);
    }

    #[test]
    fn adversarial_prompt_picks_branch() {
        let ctx = PromptContext {
            label: Some(Label::Legitimate),
            ..Default::default()
        };
        let msgs = build_prompt(AgentRole::Adversarial, &sample(), &ctx).unwrap();
        assert!(msgs[0].content.contains("For legitimate emails:"));
        assert!(!msgs[0].content.contains("For phishing emails:"));
        assert!(msgs[1].content.starts_with("Email type: legitimate\n"));
        assert!(msgs[1].content.contains("Subject: Account notice"));
    }

    #[test]
    fn render_is_single_pass() {
        let tpl = PromptTemplate::for_role(AgentRole::Text);
        let out = tpl.render_user(&[("body", "literal {urls} and {x}")]).unwrap();
        assert_eq!(out, "Email text:\nliteral {urls} and {x}");
        assert!(tpl.render_user(&[]).is_err());
    }
}
