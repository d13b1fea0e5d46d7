use super::{AuthResults, AuthVerdict, Headers, ParsedEmail};

/// SPF, DKIM and DMARC verdicts from the Authentication-Results headers.
pub fn parse_auth_results(parsed: &ParsedEmail) -> AuthResults {
    parse_auth_results_with_diagnostics(&parsed.headers).0
}

/// Scans every Authentication-Results header in order. The first verdict
/// seen for a mechanism wins. Unrecognised verdict tokens map to
/// [`AuthVerdict::None`] and produce a diagnostic.
pub fn parse_auth_results_with_diagnostics(headers: &Headers) -> (AuthResults, Vec<String>) {
    let mut results = AuthResults::default();
    let mut diags = Vec::new();

    for value in headers.get_all("Authentication-Results") {
        for clause in value.split(';') {
            let clause = clause.trim();
            let Some((mech, rest)) = clause.split_once('=') else {
                continue;
            };
            let mech = mech.trim().to_ascii_lowercase();
            let slot = match mech.as_str() {
                "spf" => &mut results.spf,
                "dkim" => &mut results.dkim,
                "dmarc" => &mut results.dmarc,
                _ => continue,
            };
            if *slot != AuthVerdict::Missing {
                continue;
            }
            let token: String = rest
                .trim_start()
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric())
                .collect::<String>()
                .to_ascii_lowercase();
            *slot = match token.as_str() {
                "pass" => AuthVerdict::Pass,
                "fail" | "softfail" | "hardfail" => AuthVerdict::Fail,
                "none" | "neutral" => AuthVerdict::None,
                other => {
                    diags.push(format!("{mech}: unrecognised verdict `{other}` treated as none"));
                    AuthVerdict::None
                }
            };
        }
    }
    (results, diags)
}
