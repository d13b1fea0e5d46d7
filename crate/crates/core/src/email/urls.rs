use std::collections::HashSet;
use std::net::{Ipv4Addr, Ipv6Addr};
use std::sync::LazyLock;

use regex::Regex;

use super::{html::decode_entities, html::strip_html, ParsedEmail, UrlRecord};
use crate::confusables::ConfusableTable;

static PLAIN_URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\b(?:https?://|www\.)[^\s<>"'`\[\]{}|\\^]+"#).unwrap()
});
static ANCHOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"(?is)<a\b[^>]*?\bhref\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))[^>]*>(.*?)</a\s*>"#,
    )
    .unwrap()
});

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '\'', '"'];

/// All links of a message: HTML `href` targets first, then plain-text URL
/// matches from the body text, deduplicated by raw string in order of first
/// appearance.
pub fn extract_urls(parsed: &ParsedEmail) -> Vec<UrlRecord> {
    extract(&parsed.body_text, parsed.body_html.as_deref())
}

pub(crate) fn extract(body_text: &str, body_html: Option<&str>) -> Vec<UrlRecord> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();

    if let Some(html) = body_html {
        for caps in ANCHOR.captures_iter(html) {
            let href = caps
                .get(1)
                .or_else(|| caps.get(2))
                .or_else(|| caps.get(3))
                .map(|m| m.as_str().trim())
                .unwrap_or_default();
            if !is_web_link(href) || !seen.insert(href.to_string()) {
                continue;
            }
            let anchor = strip_html(caps.get(4).map_or("", |m| m.as_str()));
            if let Some(mut rec) = parse_url(href) {
                rec.display_text = (!anchor.is_empty()).then_some(anchor);
                out.push(rec);
            }
        }
    }

    for m in PLAIN_URL.find_iter(body_text) {
        let raw = m.as_str().trim_end_matches(TRAILING_PUNCT);
        if seen.insert(raw.to_string()) {
            if let Some(rec) = parse_url(raw) {
                out.push(rec);
            }
        }
    }
    out
}

fn is_web_link(href: &str) -> bool {
    let lower = href.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Splits a URL into the fields of a [`UrlRecord`]. Returns `None` when no
/// host can be found. Hosts keep their Unicode form so lookalikes survive.
pub fn parse_url(raw: &str) -> Option<UrlRecord> {
    let decoded = decode_entities(raw);
    let rest = match decoded.find("://") {
        Some(idx) => &decoded[idx + 3..],
        None => decoded.as_str(),
    };
    let authority_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let authority = &rest[..authority_end];
    let after = &rest[authority_end..];

    let hostport = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host = if let Some(v6) = hostport.strip_prefix('[') {
        v6.split_once(']').map_or(v6, |(h, _)| h)
    } else {
        match hostport.rsplit_once(':') {
            Some((h, port)) if port.chars().all(|c| c.is_ascii_digit()) => h,
            _ => hostport,
        }
    };
    let host = host.trim_end_matches('.').to_lowercase();
    if host.is_empty() {
        return None;
    }

    let path_end = after.find(['?', '#']).unwrap_or(after.len());
    let is_ip_host = host.parse::<Ipv4Addr>().is_ok() || host.parse::<Ipv6Addr>().is_ok();
    let homoglyph_suspect = ConfusableTable::bundled().contains_lookalike(&host);

    Some(UrlRecord {
        raw: raw.to_string(),
        display_text: None,
        path_length: after[..path_end].chars().count(),
        host,
        is_ip_host,
        homoglyph_suspect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_hrefs_and_plain_urls() {
        let html = r#"<a href="https://a.example/x">A</a> <a href='http://b.example'>B</a>
                      <a href="https://a.example/x">dup</a> <a href="mailto:x@y">mail</a>"#;
        let text = "see https://c.example/page. and https://a.example/x";
        let urls = extract(text, Some(html));
        let raws: Vec<_> = urls.iter().map(|u| u.raw.as_str()).collect();
        assert_eq!(raws, ["https://a.example/x", "http://b.example", "https://c.example/page"]);
    }

    #[test]
    fn parses_host_port_userinfo_and_ip() {
        let u = parse_url("http://user:pw@Login.Example.COM:8080/a/b?q=1#f").unwrap();
        assert_eq!(u.host, "login.example.com");
        assert_eq!(u.path_length, 4);
        assert!(!u.is_ip_host);

        let ip = parse_url("http://192.168.10.5/admin").unwrap();
        assert!(ip.is_ip_host);
        assert_eq!(ip.host, "192.168.10.5");

        let v6 = parse_url("http://[::1]:80/").unwrap();
        assert!(v6.is_ip_host);
    }

    #[test]
    fn cyrillic_a_host_is_suspect() {
        let u = parse_url("https://p\u{0430}ypal.com/login").unwrap();
        assert!(u.homoglyph_suspect);
        assert!(!parse_url("https://paypal.com/login").unwrap().homoglyph_suspect);
    }

    #[test]
    fn fragment_at_sign_is_not_userinfo() {
        let u = parse_url("https://abc.ipfs.dweb.link/#jose@monkey.org").unwrap();
        assert_eq!(u.host, "abc.ipfs.dweb.link");
    }

    #[test]
    fn www_without_scheme() {
        let urls = extract("go to www.example.org/path, now", None);
        assert_eq!(urls.len(), 1);
        assert_eq!(urls[0].raw, "www.example.org/path");
        assert_eq!(urls[0].host, "www.example.org");
    }
}
