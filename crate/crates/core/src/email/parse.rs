use std::sync::LazyLock;

use mailparse::{DispositionType, MailAddr, ParsedMail};
use regex::Regex;

use super::{
    auth::parse_auth_results_with_diagnostics, html::strip_html, urls, Address, EmailError,
    Headers, ParsedEmail, RawEmail,
};

static BARE_ADDR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"[^\s<>"',;:]+@[^\s<>"',;]+"#).unwrap());

/// Parses an RFC 5322 message with MIME bodies into a [`ParsedEmail`].
///
/// Multipart messages are flattened: inline `text/plain` parts are joined to
/// form `body_text`, inline `text/html` parts form `body_html`. When only HTML
/// exists, `body_text` is the tag-stripped HTML. Attachments are skipped.
pub fn parse_eml(raw: &RawEmail) -> Result<ParsedEmail, EmailError> {
    parse_bytes(raw.bytes())
}

/// Parses message bytes that are not tied to a corpus entry.
pub fn parse_bytes(bytes: &[u8]) -> Result<ParsedEmail, EmailError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(EmailError::UnparseableMessage("empty message".into()));
    }
    let mail = mailparse::parse_mail(bytes)
        .map_err(|e| EmailError::UnparseableMessage(e.to_string()))?;
    if mail.headers.is_empty() {
        return Err(EmailError::UnparseableMessage(
            "no header block before the body".into(),
        ));
    }

    let mut diagnostics = Vec::new();
    if !contains_blank_line(bytes) {
        diagnostics.push("no blank line separates the header block from the body".to_string());
    }

    let mut headers = Headers::new();
    for h in &mail.headers {
        headers.push(h.get_key(), h.get_value().trim());
    }

    let subject = headers.get("Subject").unwrap_or_default().to_string();
    let from_addr = address_header(&headers, "From", &mut diagnostics);
    let reply_to = address_header(&headers, "Reply-To", &mut diagnostics);
    let return_path = address_header(&headers, "Return-Path", &mut diagnostics);
    let received_chain = headers.get_all("Received").map(str::to_string).collect();

    let mut plain = Vec::new();
    let mut html = Vec::new();
    collect_bodies(&mail, &mut plain, &mut html, &mut diagnostics);

    let body_html = (!html.is_empty()).then(|| normalize_body(&html.join("\n")));
    let body_text = if !plain.is_empty() {
        normalize_body(&plain.join("\n"))
    } else if let Some(h) = &body_html {
        strip_html(h)
    } else {
        String::new()
    };

    let (auth, auth_diags) = parse_auth_results_with_diagnostics(&headers);
    diagnostics.extend(auth_diags);

    let urls = urls::extract(&body_text, body_html.as_deref());

    Ok(ParsedEmail {
        headers,
        subject,
        from_addr,
        reply_to,
        return_path,
        received_chain,
        body_text,
        body_html,
        urls,
        auth,
        diagnostics,
    })
}

fn contains_blank_line(bytes: &[u8]) -> bool {
    bytes.windows(2).any(|w| w == b"\n\n") || bytes.windows(4).any(|w| w == b"\r\n\r\n")
}

fn normalize_body(s: &str) -> String {
    s.replace("\r\n", "\n").trim_end().to_string()
}

fn collect_bodies(
    part: &ParsedMail<'_>,
    plain: &mut Vec<String>,
    html: &mut Vec<String>,
    diagnostics: &mut Vec<String>,
) {
    if !part.subparts.is_empty() {
        for sub in &part.subparts {
            collect_bodies(sub, plain, html, diagnostics);
        }
        return;
    }
    if part.get_content_disposition().disposition == DispositionType::Attachment {
        return;
    }
    let mime = part.ctype.mimetype.to_ascii_lowercase();
    let sink = match mime.as_str() {
        "text/plain" => plain,
        "text/html" => html,
        _ => return,
    };
    // Undeclared or us-ascii charsets often carry raw UTF-8 in practice.
    let declared = part.ctype.params.get("charset").map(|c| c.to_ascii_lowercase());
    if matches!(declared.as_deref(), None | Some("us-ascii") | Some("ascii")) {
        if let Ok(Ok(text)) = part.get_body_raw().map(String::from_utf8) {
            sink.push(text);
            return;
        }
    }
    match part.get_body() {
        Ok(body) => sink.push(body),
        Err(e) => {
            diagnostics.push(format!("{mime} part could not be decoded ({e}); kept raw bytes"));
            let raw = part.get_body_raw().unwrap_or_default();
            sink.push(String::from_utf8_lossy(&raw).into_owned());
        }
    }
}

fn address_header(headers: &Headers, name: &str, diagnostics: &mut Vec<String>) -> Option<Address> {
    let value = headers.get(name)?;
    let parsed = parse_address(value);
    if parsed.is_none() && !value.trim().trim_matches(|c| c == '<' || c == '>').is_empty() {
        diagnostics.push(format!("{name} header holds no usable address: {value:?}"));
    }
    parsed
}

/// First mailbox in an address header value.
pub(crate) fn parse_address(value: &str) -> Option<Address> {
    if let Ok(list) = mailparse::addrparse(value) {
        let first = list.iter().find_map(|a| match a {
            MailAddr::Single(info) => Some(info.clone()),
            MailAddr::Group(g) => g.addrs.first().cloned(),
        });
        if let Some(info) = first {
            if !info.addr.trim().is_empty() {
                return Some(Address {
                    display_name: info.display_name.filter(|d| !d.trim().is_empty()),
                    addr: info.addr.trim().to_string(),
                });
            }
        }
    }
    BARE_ADDR.find(value).map(|m| Address {
        display_name: None,
        addr: m.as_str().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::email::{AuthVerdict, CorpusLabel};

    fn parse(text: &str) -> ParsedEmail {
        parse_eml(&RawEmail::new("t", text, CorpusLabel::Unlabeled)).unwrap()
    }

    #[test]
    fn reply_to_is_copied() {
        let p = parse("From: x@y.com\nReply-To: a@b.com\nSubject: hi\n\nhello\n");
        assert_eq!(p.reply_to.unwrap().addr, "a@b.com");
        assert_eq!(p.body_text, "hello");
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn empty_input_is_unparseable() {
        let err = parse_eml(&RawEmail::new("e", Vec::new(), CorpusLabel::Unlabeled)).unwrap_err();
        assert!(matches!(err, EmailError::UnparseableMessage(_)));
    }

    #[test]
    fn quoted_printable_body_is_decoded() {
        let p = parse(
            "From: a@b.com\nContent-Type: text/plain; charset=utf-8\n\
             Content-Transfer-Encoding: quoted-printable\n\nverify =\nnow =E2=80=94 ok\n",
        );
        assert_eq!(p.body_text, "verify now \u{2014} ok");
    }

    #[test]
    fn multipart_prefers_plain_and_keeps_html() {
        let msg = "From: a@b.com\nMIME-Version: 1.0\n\
                   Content-Type: multipart/alternative; boundary=\"XX\"\n\n\
                   --XX\nContent-Type: text/plain\n\nplain words\n\
                   --XX\nContent-Type: text/html\n\n<p>html <a href=\"https://x.example/a\">go</a></p>\n\
                   --XX--\n";
        let p = parse(msg);
        assert_eq!(p.body_text, "plain words");
        assert!(p.body_html.as_deref().unwrap().contains("href"));
        assert_eq!(p.urls.len(), 1);
        assert_eq!(p.urls[0].display_text.as_deref(), Some("go"));
    }

    #[test]
    fn html_only_body_is_stripped() {
        let p = parse("From: a@b.com\nContent-Type: text/html\n\n<html><body><p>Dear user,</p><p>Hi &amp; bye</p></body></html>\n");
        assert_eq!(p.body_text, "Dear user,\nHi & bye");
    }

    #[test]
    fn attachments_are_skipped() {
        let msg = "From: a@b.com\nContent-Type: multipart/mixed; boundary=B\n\n\
                   --B\nContent-Type: text/plain\n\nbody\n\
                   --B\nContent-Type: text/plain\nContent-Disposition: attachment; filename=a.txt\n\nsecret\n\
                   --B--\n";
        assert_eq!(parse(msg).body_text, "body");
    }

    #[test]
    fn missing_blank_line_is_recoverable() {
        let p = parse("From: a@b.com\nSubject: only headers\n");
        assert_eq!(p.subject, "only headers");
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn header_order_is_preserved_and_lookup_is_case_insensitive() {
        let p = parse("Received: one\nFrom: a@b.com\nreceived: two\n\nx\n");
        let names: Vec<_> = p.headers.iter().map(|h| h.name.as_str()).collect();
        assert_eq!(names, ["Received", "From", "received"]);
        assert_eq!(p.received_chain, ["one", "two"]);
        assert_eq!(p.auth.spf, AuthVerdict::Missing);
    }

    #[test]
    fn display_name_and_host() {
        let p = parse("From: \"Monkey Support\" <info@CreditLoiuse.com>\n\nx\n");
        let from = p.from_addr.as_ref().unwrap();
        assert_eq!(from.display_name.as_deref(), Some("Monkey Support"));
        assert_eq!(p.from_host().as_deref(), Some("creditloiuse.com"));
    }
}
