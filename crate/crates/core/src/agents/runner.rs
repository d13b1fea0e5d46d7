use std::time::{Duration, Instant};

use rand::Rng;

use super::{
    build_prompt, parse_verdict_json, AgentError, AgentReport, AgentRole, ChatBackend,
    ChatRequest, PromptContext,
};
use crate::email::ParsedEmail;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl RetryPolicy {
    pub fn from_backend(backend: &dyn ChatBackend) -> Self {
        let cfg = backend.config();
        Self {
            max_retries: cfg.max_retries,
            backoff_base: Duration::from_millis(cfg.backoff_base_ms),
        }
    }

    /// Delay before retry number `retry` (1-based): the base doubled per
    /// retry, scaled by a random factor in [0.5, 1).
    pub fn delay(&self, retry: u32) -> Duration {
        let nominal = self.backoff_base.saturating_mul(1u32 << (retry - 1).min(16));
        nominal.mul_f64(rand::rng().random_range(0.5..1.0))
    }
}

pub(crate) struct Completed<T> {
    pub value: T,
    pub raw: String,
    pub attempts: u32,
    pub latency: Duration,
}

/// Sends `request` until `accept` takes the reply, for at most
/// `max_retries + 1` attempts.
pub(crate) fn complete_with_retry<T, E: std::fmt::Display>(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    policy: RetryPolicy,
    accept: impl Fn(&str) -> Result<T, E>,
) -> Result<Completed<T>, AgentError> {
    let start = Instant::now();
    let mut last_raw: Option<(String, String)> = None;
    let mut last_transport = String::new();
    let mut attempts = 0;

    while attempts <= policy.max_retries {
        if attempts > 0 {
            std::thread::sleep(policy.delay(attempts));
        }
        attempts += 1;
        match backend.complete(request) {
            Ok(raw) => match accept(&raw) {
                Ok(value) => {
                    return Ok(Completed {
                        value,
                        raw,
                        attempts,
                        latency: start.elapsed(),
                    })
                }
                Err(e) => {
                    tracing::debug!(agent = %request.agent, attempts, "reply rejected: {e}");
                    last_raw = Some((raw, e.to_string()));
                }
            },
            Err(e) => {
                tracing::debug!(agent = %request.agent, attempts, "backend error: {e}");
                last_transport = e.to_string();
                last_raw = None;
                if !e.is_retryable() {
                    break;
                }
            }
        }
    }
    Err(match last_raw {
        Some((raw_response, reason)) => AgentError::VerdictUnparseable {
            attempts,
            reason,
            raw_response,
        },
        None => AgentError::BackendUnavailable {
            attempts,
            last_error: last_transport,
        },
    })
}

/// Public form of the retry loop for callers that post-process text replies.
pub fn run_with_retry<T, E: std::fmt::Display>(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    accept: impl Fn(&str) -> Result<T, E>,
) -> Result<(T, String, u32), AgentError> {
    let done = complete_with_retry(backend, request, RetryPolicy::from_backend(backend), accept)?;
    Ok((done.value, done.raw, done.attempts))
}

/// Runs one detection agent on one email.
pub fn run_agent(
    backend: &dyn ChatBackend,
    role: AgentRole,
    email: &ParsedEmail,
) -> Result<AgentReport, AgentError> {
    if !role.is_detection() {
        return Err(AgentError::MissingInput(format!(
            "run_agent serves the detection roles, not {role}"
        )));
    }
    let request = ChatRequest {
        agent: role,
        messages: build_prompt(role, email, &PromptContext::default())?,
        json_mode: true,
    };
    let done = complete_with_retry(
        backend,
        &request,
        RetryPolicy::from_backend(backend),
        parse_verdict_json,
    )?;
    Ok(AgentReport {
        role,
        verdict: done.value,
        raw_response: done.raw,
        latency_ms: done.latency.as_millis() as u64,
        attempts: done.attempts,
    })
}

/// The text, URL and metadata agents for one email, run concurrently.
/// Reports come back in fusion order.
pub fn run_detection(
    backend: &dyn ChatBackend,
    email: &ParsedEmail,
) -> Result<[AgentReport; 3], AgentError> {
    let [t, u, m] = std::thread::scope(|s| {
        AgentRole::DETECTION
            .map(|role| s.spawn(move || run_agent(backend, role, email)))
            .map(|h| h.join().expect("agent thread panicked"))
    });
    Ok([t?, u?, m?])
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;
    use crate::agents::{BackendError, ChatBackendConfig};
    use crate::email::parse::parse_bytes;
    use crate::Label;

    struct Scripted {
        replies: Vec<Result<String, BackendError>>,
        calls: AtomicU32,
        config: ChatBackendConfig,
    }

    impl Scripted {
        fn new(replies: Vec<Result<String, BackendError>>) -> Self {
            let mut config = ChatBackendConfig::mock();
            config.backoff_base_ms = 0;
            Self {
                replies,
                calls: AtomicU32::new(0),
                config,
            }
        }
    }

    impl ChatBackend for Scripted {
        fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            self.replies[i.min(self.replies.len() - 1)].clone()
        }

        fn config(&self) -> &ChatBackendConfig {
            &self.config
        }
    }

    fn email() -> ParsedEmail {
        parse_bytes(b"Subject: hi\n\nhello\n").unwrap()
    }

    const GOOD: &str = r#"{"verdict":"Legitimate","confidence":0.8,"reasons":"plain greeting"}"#;

    #[test]
    fn valid_on_second_attempt() {
        let b = Scripted::new(vec![Err(BackendError::Transport("reset".into())), Ok(GOOD.into())]);
        let r = run_agent(&b, AgentRole::Text, &email()).unwrap();
        assert_eq!(r.attempts, 2);
        assert_eq!(r.verdict.verdict, Label::Legitimate);
    }

    #[test]
    fn prose_forever_is_unparseable_with_raw() {
        let b = Scripted::new(vec![Ok("just prose".into())]);
        match run_agent(&b, AgentRole::Url, &email()) {
            Err(AgentError::VerdictUnparseable { attempts, raw_response, .. }) => {
                assert_eq!(attempts, 4);
                assert_eq!(raw_response, "just prose");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(b.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn transport_exhaustion_is_unavailable() {
        let b = Scripted::new(vec![Err(BackendError::Transport("down".into()))]);
        assert!(matches!(
            run_agent(&b, AgentRole::Metadata, &email()),
            Err(AgentError::BackendUnavailable { attempts: 4, .. })
        ));
    }

    #[test]
    fn client_error_is_not_retried() {
        let b = Scripted::new(vec![Err(BackendError::Status { status: 401, body: "no".into() })]);
        assert!(matches!(
            run_agent(&b, AgentRole::Text, &email()),
            Err(AgentError::BackendUnavailable { attempts: 1, .. })
        ));
    }

    #[test]
    fn delay_doubles_with_jitter() {
        let p = RetryPolicy {
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        };
        for retry in 1..=3u32 {
            let d = p.delay(retry).as_secs_f64();
            let nominal = 0.5 * f64::from(1u32 << (retry - 1));
            assert!(d >= nominal * 0.5 && d < nominal, "{d}");
        }
    }

    #[test]
    fn detection_reports_in_order() {
        let b = Scripted::new(vec![Ok(GOOD.into())]);
        let reports = run_detection(&b, &email()).unwrap();
        let roles: Vec<_> = reports.iter().map(|r| r.role).collect();
        assert_eq!(roles, AgentRole::DETECTION);
    }
}
