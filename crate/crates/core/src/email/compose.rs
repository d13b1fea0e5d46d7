//! Assembles RFC 5322 message text from fields. Used for CSV corpora, for
//! round-trip fixtures and to serialise rewritten adversarial variants.

use super::ParsedEmail;

const STRUCTURAL: &[&str] = &[
    "content-type",
    "content-transfer-encoding",
    "mime-version",
    "content-disposition",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageBuilder {
    headers: Vec<(String, String)>,
    body_text: String,
    body_html: Option<String>,
}

impl MessageBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from an already parsed message, keeping its non-MIME headers
    /// in order together with both bodies.
    pub fn from_parsed(parsed: &ParsedEmail) -> Self {
        let headers = parsed
            .headers
            .iter()
            .filter(|h| !STRUCTURAL.contains(&h.name.to_ascii_lowercase().as_str()))
            .map(|h| (h.name.clone(), h.value.clone()))
            .collect();
        Self {
            headers,
            body_text: parsed.body_text.clone(),
            body_html: parsed.body_html.clone(),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), one_line(value)));
        self
    }

    /// Replaces the first header with this name, or appends it.
    pub fn set_header(mut self, name: &str, value: &str) -> Self {
        match self.headers.iter_mut().find(|(n, _)| n.eq_ignore_ascii_case(name)) {
            Some(slot) => slot.1 = one_line(value),
            None => self.headers.push((name.to_string(), one_line(value))),
        }
        self
    }

    pub fn body_text(mut self, text: &str) -> Self {
        self.body_text = text.to_string();
        self
    }

    pub fn body_html(mut self, html: Option<&str>) -> Self {
        self.body_html = html.map(str::to_string);
        self
    }

    pub fn build(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.headers {
            out.push_str(name);
            out.push_str(": ");
            out.push_str(value);
            out.push('\n');
        }
        out.push_str("MIME-Version: 1.0\n");
        match &self.body_html {
            None => {
                out.push_str("Content-Type: text/plain; charset=utf-8\n");
                out.push_str("Content-Transfer-Encoding: 8bit\n\n");
                out.push_str(&self.body_text);
                out.push('\n');
            }
            Some(html) => {
                let boundary = boundary_for(&[&self.body_text, html]);
                out.push_str(&format!(
                    "Content-Type: multipart/alternative; boundary=\"{boundary}\"\n\n"
                ));
                for (ctype, body) in [("text/plain", self.body_text.as_str()), ("text/html", html)] {
                    out.push_str(&format!("--{boundary}\n"));
                    out.push_str(&format!("Content-Type: {ctype}; charset=utf-8\n"));
                    out.push_str("Content-Transfer-Encoding: 8bit\n\n");
                    out.push_str(body);
                    out.push('\n');
                }
                out.push_str(&format!("--{boundary}--\n"));
            }
        }
        out
    }
}

fn one_line(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn boundary_for(bodies: &[&str]) -> String {
    let mut n = 0u32;
    loop {
        let candidate = format!("=_part_{n}");
        if bodies.iter().all(|b| !b.contains(&candidate)) {
            return candidate;
        }
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::email::parse::parse_bytes;

    #[test]
    fn plain_message_round_trips() {
        let msg = MessageBuilder::new()
            .header("From", "Alice <alice@example.org>")
            .header("Subject", "Grüße aus Köln")
            .body_text("Line one\nLine two")
            .build();
        let p = parse_bytes(msg.as_bytes()).unwrap();
        assert_eq!(p.subject, "Grüße aus Köln");
        assert_eq!(p.body_text, "Line one\nLine two");
        assert_eq!(p.from_addr.unwrap().addr, "alice@example.org");
    }

    #[test]
    fn html_alternative_round_trips() {
        let msg = MessageBuilder::new()
            .header("Subject", "x")
            .body_text("plain =_part_0")
            .body_html(Some("<p>rich</p>"))
            .build();
        let p = parse_bytes(msg.as_bytes()).unwrap();
        assert_eq!(p.body_text, "plain =_part_0");
        assert_eq!(p.body_html.as_deref(), Some("<p>rich</p>"));
    }

    #[test]
    fn set_header_replaces_first() {
        let b = MessageBuilder::new()
            .header("Subject", "a")
            .set_header("subject", "b");
        assert!(b.build().starts_with("Subject: b\n"));
    }
}
