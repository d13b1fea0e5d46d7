//! Parsing of a real-world credential phishing message and field-exact
//! round trips through the message builder.

use phishguard_core::email::compose::MessageBuilder;
use phishguard_core::email::{extract_features, parse_bytes, AuthVerdict, KeywordLexicon, ReputationTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CREDENTIAL_EXPIRY: &str = include_str!("fixtures/credential_expiry.eml");

#[test]
fn credential_expiry_fixture() {
    let e = parse_bytes(CREDENTIAL_EXPIRY.as_bytes()).unwrap();
    assert_eq!(e.subject, "Important Password Validation");
    assert_eq!(e.from_host().as_deref(), Some("creditloiuse.com"));
    assert_eq!(e.urls.len(), 1);
    assert!(e.urls[0].host.ends_with("ipfs.dweb.link"), "{}", e.urls[0].host);
    assert_eq!((e.auth.spf, e.auth.dkim, e.auth.dmarc), (AuthVerdict::Missing, AuthVerdict::Missing, AuthVerdict::Missing));
    let f = extract_features(&e, &KeywordLexicon::bundled(), &ReputationTable::bundled());
    assert_eq!(f.url_count, 1);
}

const WORDS: &[&str] = &[
    "invoice", "meeting", "schedule", "account", "quarterly", "report", "lunch", "draft", "review", "notice",
];

fn phrase(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

#[test]
fn twenty_synthetic_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for i in 0..20 {
        let subject = phrase(&mut rng, 4);
        let from = format!("user{i}@sender{}.example", rng.random_range(0..100));
        let reply = format!("reply{i}@other{}.example", rng.random_range(0..100));
        let host = format!("site{}.example.org", rng.random_range(0..1000));
        let body = format!("{}\n\nhttps://{host}/path/{i}\n\n{}", phrase(&mut rng, 12), phrase(&mut rng, 6));
        let (spf, dkim, dmarc) = (["pass", "fail"][i % 2], ["pass", "none"][i % 3 % 2], ["fail", "pass"][i % 5 % 2]);
        let msg = MessageBuilder::new()
            .header("From", &format!("Sender {i} <{from}>"))
            .header("To", "you@example.com")
            .header("Reply-To", &reply)
            .header("Subject", &subject)
            .header("Authentication-Results", &format!("mx.example; spf={spf}; dkim={dkim}; dmarc={dmarc}"))
            .body_text(&body)
            .build();
        let e = parse_bytes(msg.as_bytes()).unwrap();
        assert_eq!(e.subject, subject);
        let f = e.from_addr.as_ref().unwrap();
        assert_eq!((f.display_name.as_deref(), f.addr.as_str()), (Some(format!("Sender {i}").as_str()), from.as_str()));
        assert_eq!(e.reply_to.as_ref().unwrap().addr, reply);
        assert_eq!(e.body_text.trim_end(), body);
        assert_eq!(e.urls.len(), 1);
        assert_eq!(e.urls[0].host, host);
        assert_eq!(e.auth.spf.as_str(), spf);
        assert_eq!(e.auth.dkim.as_str(), dkim);
        assert_eq!(e.auth.dmarc.as_str(), dmarc);
    }
}
