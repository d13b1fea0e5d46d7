//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each with its wall time, and exits nonzero when any fails or overruns its
//! time budget.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phishguard_core::adversarial::{adversarial_loop, homoglyph_replace, Generator, LoopConfig};
use phishguard_core::agents::MockBackend;
use phishguard_core::confusables::ConfusableTable;
use phishguard_core::email::{parse_bytes, parse_eml, AuthVerdict, EmailFeatures, KeywordLexicon, ReputationTable};
use phishguard_core::eval::{bh_adjust, format_pct, mcnemar, mcnemar_exact, metrics, ConfusionCounts};
use phishguard_core::explain::{cosine_sim, fres, perplexity, rouge1_recall, UnigramModel};
use phishguard_core::fusion::{
    compute_advantages, objective_and_gradient, train, train_on_inputs, Detector, Episode, FusionInput,
    PolicyParams, PolicyShape, TrainConfig, WeightSource, WeightVector,
};
use phishguard_core::synth::{synthetic_corpus, SynthConfig};
use phishguard_core::text::tokenize;
use phishguard_core::Label;

const CREDENTIAL_EXPIRY: &str = include_str!("../../core/tests/fixtures/credential_expiry.eml");

fn metric_oracle() {
    let m = metrics(&ConfusionCounts::new(977, 2918, 82, 2));
    let shown: Vec<String> = [m.recall, m.precision, m.accuracy, m.f1, m.tnr, m.fpr, m.fnr]
        .into_iter()
        .map(format_pct)
        .collect();
    assert_eq!(shown, ["99.80", "92.26", "97.89", "95.88", "97.27", "2.73", "0.20"]);
}

fn mcnemar_suite() {
    assert_eq!(mcnemar_exact(6, 0), 0.015625);
    assert_eq!(mcnemar_exact(1, 0), 0.5);
    assert_eq!(mcnemar_exact(0, 0), 1.0);
    // (n10, n01, reported adjusted p); 0.0 stands for "<.001"
    let table: [(u64, u64, f64); 18] = [
        (1, 0, 0.529),
        (0, 0, 1.000),
        (4, 0, 0.070),
        (6, 0, 0.023),
        (4, 0, 0.070),
        (12, 2, 0.011),
        (263, 4, 0.0),
        (305, 3, 0.0),
        (62, 37, 0.011),
        (115, 7, 0.0),
        (161, 2, 0.0),
        (46, 18, 0.0),
        (50, 3, 0.0),
        (52, 4, 0.0),
        (18, 9, 0.056),
        (28, 0, 0.0),
        (23, 0, 0.0),
        (18, 8, 0.036),
    ];
    let raw: Vec<f64> = table.iter().map(|&(a, b, _)| mcnemar(a, b).raw_p).collect();
    let adj = bh_adjust(&raw).unwrap();
    for (&(a, b, reported), got) in table.iter().zip(&adj) {
        let target = if reported == 0.0 { 0.001 } else { reported };
        assert!(
            (got - target).abs() <= 0.02 || (reported == 0.0 && *got < 0.001),
            "({a},{b}): adjusted {got} vs reported {reported}"
        );
    }
}

/// Agent 0 reports the label with certainty; agents 1 and 2 emit uniform
/// noise.
fn oracle_bandit(n: usize, seed: u64) -> Vec<(FusionInput, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = if rng.random_bool(0.5) { Label::Phishing } else { Label::Legitimate };
            let oracle = if label.is_phishing() { 1.0 } else { 0.0 };
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            let conf = |p: f64| p.max(1.0 - p);
            let input = FusionInput {
                features: EmailFeatures::zeros(),
                probs: [oracle, u1, u2],
                confidences: [1.0, conf(u1), conf(u2)],
            };
            (input, label)
        })
        .collect()
}

fn ppo_convergence() {
    let data = oracle_bandit(2000, 7);
    let cfg = TrainConfig {
        passes: 1,
        ..TrainConfig::default()
    };
    let out = train_on_inputs(&data, &cfg, None).unwrap();
    let episodes: usize = out.log.iter().map(|l| l.size).sum();
    assert_eq!(episodes, 2000);

    let held_out = oracle_bandit(1000, 8);
    let learned = Detector::new(WeightSource::Learned(out.params().clone()), cfg.threshold).unwrap();
    let fixed = Detector::new(
        WeightSource::Static(WeightVector::new([0.3, 0.4, 0.3]).unwrap()),
        cfg.threshold,
    )
    .unwrap();
    let n = held_out.len() as f64;
    let (mut w_oracle, mut acc_learned, mut acc_static) = (0.0, 0.0, 0.0);
    for (input, label) in &held_out {
        let (l, _, w) = learned.decide(input).unwrap();
        w_oracle += w.as_array()[0] / n;
        acc_learned += f64::from(l == *label) / n;
        acc_static += f64::from(fixed.decide(input).unwrap().0 == *label) / n;
    }
    println!("    oracle weight {w_oracle:.3}, accuracy {acc_learned:.3} vs static {acc_static:.3}");
    assert!(w_oracle > 0.6, "mean oracle weight {w_oracle}");
    assert!(acc_learned >= acc_static + 0.10, "{acc_learned} vs {acc_static}");
}

fn random_episodes(params: &PolicyParams, rng: &mut ChaCha8Rng, n: usize) -> Vec<Episode> {
    let mut eps: Vec<Episode> = (0..n)
        .map(|_| {
            let input = FusionInput {
                features: EmailFeatures {
                    url_count: rng.random_range(0..5),
                    keyword_hits: rng.random_range(0..8),
                    domain_reputation: rng.random_range(-1.0..1.0),
                    spf_code: [-1.0, 0.0, 1.0][rng.random_range(0..3)],
                    dkim_code: [-1.0, 0.0, 1.0][rng.random_range(0..3)],
                    dmarc_code: [-1.0, 0.0, 1.0][rng.random_range(0..3)],
                },
                probs: std::array::from_fn(|_| rng.random()),
                confidences: std::array::from_fn(|_| rng.random_range(0.5..1.0)),
            };
            let (w, lp) = params.sample(&input.policy_input(), rng).unwrap();
            assert!(w.is_on_simplex(), "{w:?}");
            Episode {
                input,
                sampled_w: w,
                log_prob_old: lp,
                reward: f64::from(rng.random_bool(0.5)),
                advantage: 0.0,
            }
        })
        .collect();
    compute_advantages(params, &mut eps).unwrap();
    eps
}

fn ppo_numerics() {
    let eps_clip = 0.2;
    let h = 1e-6;
    for set in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + set);
        let shape = PolicyShape {
            hidden: 4,
            ..PolicyShape::default()
        };
        let old = PolicyParams::init(shape, set).unwrap();
        let episodes = random_episodes(&old, &mut rng, 6);

        // ratios are exactly 1 at the sampling parameters
        let (stats, _) = objective_and_gradient(&old, &episodes, eps_clip).unwrap();
        assert!((stats.mean_ratio - 1.0).abs() < 1e-9, "set {set}: {}", stats.mean_ratio);
        for ep in &episodes {
            let lp = old.log_prob(&ep.input.policy_input(), &ep.sampled_w).unwrap();
            assert!(((lp - ep.log_prob_old).exp() - 1.0).abs() < 1e-9);
        }

        // move away from the sampling point so some ratios leave the clip range
        let mut moved = old.clone();
        for t in moved.theta_mut() {
            *t += rng.random_range(-0.3..0.3);
        }
        let (_, grad) = objective_and_gradient(&moved, &episodes, eps_clip).unwrap();
        let objective = |p: &PolicyParams| objective_and_gradient(p, &episodes, eps_clip).unwrap().0.objective;
        for i in 0..grad.len() {
            let mut plus = moved.clone();
            plus.theta_mut()[i] += h;
            let mut minus = moved.clone();
            minus.theta_mut()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-3);
            assert!(
                (fd - grad[i]).abs() / scale < 1e-4,
                "set {set}, parameter {i}: analytic {} vs central difference {fd}",
                grad[i]
            );
        }
    }
}

fn adversarial_loop_check() {
    let corpus = synthetic_corpus(&SynthConfig {
        count: 200,
        seed: 5,
        ..SynthConfig::default()
    });
    let backend = MockBackend::new();
    let (lex, rep) = (KeywordLexicon::bundled(), ReputationTable::bundled());
    let warm = train(
        &corpus,
        &backend,
        &lex,
        &rep,
        &TrainConfig {
            passes: 5,
            ..TrainConfig::default()
        },
        None,
    )
    .unwrap();
    let cfg = LoopConfig {
        rounds: 2,
        generator: Generator::Llm,
        seed: 5,
        ..LoopConfig::default()
    };
    let out = adversarial_loop(&corpus, &backend, warm.state, &cfg).unwrap();
    let rates: Vec<f64> = out.rounds.iter().map(|r| r.evasion_rate).collect();
    println!("    evasion rates by round {rates:?}");
    assert_eq!(rates.len(), 2);
    assert!(rates[1] <= rates[0], "{rates:?}");

    let truth = |id: &str| corpus.iter().find(|e| e.source_id() == id).unwrap().corpus_label().label().unwrap();
    for v in out.variants.iter().flatten() {
        assert_eq!(v.intended_label, truth(&v.source_id), "{}", v.id);
        parse_bytes(v.text.as_bytes()).unwrap();
    }

    let table = ConfusableTable::bundled();
    let mut changed = 0;
    for (i, email) in corpus.iter().enumerate() {
        let body = parse_eml(email).unwrap().body_text;
        let out = homoglyph_replace(&body, cfg.intensity(2), i as u64);
        assert_eq!(table.skeleton(&out), table.skeleton(&body));
        if out != body {
            changed += 1;
        }
    }
    assert_eq!(changed, corpus.len(), "every synthetic body has a link to rewrite");
}

fn rationale_metrics() {
    assert!((fres(3, 1, 3).unwrap() - 119.19).abs() < 1e-6);
    assert!((fres(10, 1, 20).unwrap() - 27.485).abs() < 1e-6);
    let r = tokenize("verify your account");
    assert_eq!(rouge1_recall(&r, &r).unwrap(), 1.0);
    assert_eq!(rouge1_recall(&tokenize("hello world"), &r).unwrap(), 0.0);
    assert!((rouge1_recall(&tokenize("urgent account verify"), &r).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!((cosine_sim(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!(cosine_sim(&[1.0, 0.0], &[0.0, 3.0]).unwrap().abs() < 1e-12);
    assert!((cosine_sim(&[1.0, -2.0], &[-1.0, 2.0]).unwrap() + 1.0).abs() < 1e-12);
    let lm = UnigramModel::uniform(&["a", "b", "c", "d"]);
    assert!((perplexity("a b c d d a", &lm).unwrap() - 4.0).abs() < 1e-9);
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["phishguard", "--quiet"];
    full.extend_from_slice(args);
    phishguard_cli::main_with(full)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    assert_eq!(cli(&["synth", "--count", "80", "--seed", "3", "-o", &p("corpus")]), 0);
    for run in ["a", "b"] {
        let train_out = p(&format!("train_{run}"));
        assert_eq!(cli(&["train", &p("corpus"), "--passes", "3", "--seed", "9", "-o", &train_out]), 0);
        let ckpt = format!("{train_out}/checkpoint.json");
        let code = cli(&["classify", &p("corpus"), "--checkpoint", &ckpt, "--explain", "--seed", "9", "-o", &p(&format!("cls_{run}"))]);
        assert!(code == 0 || code == 1, "classify exit {code}");
    }
    for file in ["train_{}/train_log.jsonl", "train_{}/checkpoint.json", "cls_{}/predictions.jsonl"] {
        let a = read(&dir.path().join(file.replace("{}", "a")));
        let b = read(&dir.path().join(file.replace("{}", "b")));
        assert!(!a.is_empty(), "{file} is empty");
        assert!(a == b, "{file} differs between runs");
    }
}

fn parsing_fixtures() {
    let e = parse_bytes(CREDENTIAL_EXPIRY.as_bytes()).unwrap();
    assert_eq!(e.subject, "Important Password Validation");
    assert_eq!(e.urls.len(), 1);
    assert!(e.urls[0].host.ends_with("ipfs.dweb.link"));
    assert_eq!(
        (e.auth.spf, e.auth.dkim, e.auth.dmarc),
        (AuthVerdict::Missing, AuthVerdict::Missing, AuthVerdict::Missing)
    );

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..20 {
        let subject = format!("Status update {} for batch {i}", rng.random_range(100..999));
        let from = format!("ops{i}@team{}.example", rng.random_range(0..50));
        let host = format!("portal{}.example.net", rng.random_range(0..500));
        let body = format!("Numbers for run {i} are in.\n\nhttps://{host}/r/{i}\n\nThanks");
        let verdicts = ["pass", "fail", "none"];
        let (spf, dkim, dmarc) = (verdicts[i % 3], verdicts[(i / 3) % 3], verdicts[(i / 9) % 3]);
        let msg = phishguard_core::email::compose::MessageBuilder::new()
            .header("From", &format!("Ops {i} <{from}>"))
            .header("Subject", &subject)
            .header("Authentication-Results", &format!("mx; spf={spf}; dkim={dkim}; dmarc={dmarc}"))
            .body_text(&body)
            .build();
        let e = parse_bytes(msg.as_bytes()).unwrap();
        assert_eq!(e.subject, subject);
        assert_eq!(e.from_addr.as_ref().unwrap().addr, from);
        assert_eq!(e.from_addr.as_ref().unwrap().display_name.as_deref(), Some(format!("Ops {i}").as_str()));
        assert_eq!(e.body_text.trim_end(), body);
        assert_eq!(e.urls.len(), 1);
        assert_eq!(e.urls[0].host, host);
        assert_eq!(
            [e.auth.spf.as_str(), e.auth.dkim.as_str(), e.auth.dmarc.as_str()],
            [spf, dkim, dmarc]
        );
    }
}

fn main() {
    let criteria: [(&str, u64, fn()); 8] = [
        ("1 metric oracle", 1, metric_oracle),
        ("2 McNemar suite", 1, mcnemar_suite),
        ("3 PPO synthetic-oracle convergence", 60, ppo_convergence),
        ("4 PPO numerics", 30, ppo_numerics),
        ("5 adversarial loop", 120, adversarial_loop_check),
        ("6 rationale metrics", 5, rationale_metrics),
        ("7 pipeline determinism", 60, pipeline_determinism),
        ("8 parsing fixtures", 5, parsing_fixtures),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let took = start.elapsed();
        let over = took > Duration::from_secs(budget);
        let ok = result.is_ok() && !over;
        failed += usize::from(!ok);
        let note = if over { format!(" (over the {budget} s budget)") } else { String::new() };
        println!(
            "criterion {name}: {} in {:.2} s{note}",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
