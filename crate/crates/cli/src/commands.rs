use std::collections::HashMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use phishguard_core::adversarial::{adversarial_loop, Generator, LoopConfig};
use phishguard_core::agents::{build_backend, AgentRole, ChatBackend, ExplanationMode};
use phishguard_core::email::{
    load_corpus_with, parse_eml, CorpusFormat, CorpusLabel, CorpusOptions, KeywordLexicon, RawEmail,
    ReputationTable,
};
use phishguard_core::eval::{evaluate_run, read_predictions, render_report, EvalConfig};
use phishguard_core::explain::{
    assess, simplify, topic_coherence, CoherenceConfig, TextQualityReport, TfEmbedder, UnigramModel,
};
use phishguard_core::fusion::{
    train, Checkpoint, Detector, PpoConfig, TrainConfig, TrainerState, WeightSource, WeightVector,
};
use phishguard_core::synth::{synthetic_corpus, SynthConfig};
use phishguard_core::Label;

use crate::error::CliError;
use crate::run::{ensure_dir, write_jsonl, CorpusSpec, FusionMode, RunConfig, RunRecord};
use crate::{explain_mode, Cli, Command, GeneratorArg, InputArgs};

pub(crate) fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let started = Instant::now();
    ensure_dir(&cli.global.out)?;
    let (code, mut record) = match &cli.command {
        Command::Classify {
            input,
            checkpoint,
            explain,
            expert_mode,
            system,
        } => classify(cli, input, checkpoint.as_deref(), explain_mode(*explain, *expert_mode), system.as_deref())?,
        Command::Train {
            input,
            ppo,
            passes,
            checkpoint_every,
            resume,
        } => {
            let ppo = ppo.config(cli.global.seed);
            train_cmd(cli, input, ppo, *passes, *checkpoint_every, resume.as_deref())?
        }
        Command::Eval { predictions, reference } => eval_cmd(cli, predictions, reference.clone())?,
        Command::Adversarial {
            input,
            ppo,
            rounds,
            checkpoint,
            passes,
            retrain_passes,
            generator,
            sample_fraction,
            admission_cap,
        } => {
            let settings = AdversarialSettings {
                ppo: ppo.config(cli.global.seed),
                rounds: *rounds,
                passes: *passes,
                retrain_passes: *retrain_passes,
                generator: match generator {
                    GeneratorArg::Llm => Generator::Llm,
                    GeneratorArg::Rule => Generator::RuleBased,
                },
                sample_fraction: *sample_fraction,
                admission_cap: *admission_cap,
            };
            adversarial_cmd(cli, input, checkpoint.as_deref(), &settings)?
        }
        Command::Quality {
            candidates,
            references,
            lm_corpus,
            topics,
            top_k,
        } => quality_cmd(cli, candidates, references, lm_corpus.as_deref(), *topics, *top_k)?,
        Command::Synth {
            count,
            phishing_fraction,
            url_agreement,
            metadata_agreement,
        } => synth_cmd(
            cli,
            SynthConfig {
                count: *count,
                phishing_fraction: *phishing_fraction,
                url_agreement: *url_agreement,
                metadata_agreement: *metadata_agreement,
                seed: cli.global.seed,
            },
        )?,
    };
    record.elapsed_ms = started.elapsed().as_millis();
    record.write(&cli.global.out)?;
    Ok(code)
}

fn base_config(cli: &Cli, command: &str) -> Result<RunConfig, CliError> {
    Ok(RunConfig {
        command: command.into(),
        backend: cli.global.backend_config()?,
        corpora: Vec::new(),
        ppo: PpoConfig {
            seed: cli.global.seed,
            ..PpoConfig::default()
        },
        threshold: cli.global.threshold,
        fusion: cli.global.fusion.unwrap_or(FusionMode::Learned),
        system: String::new(),
        explain: None,
        checkpoint: None,
        checkpoint_sha256: None,
        extra: serde_json::Value::Null,
        output_dir: cli.global.out.clone(),
    })
}

fn corpus_specs(input: &InputArgs) -> Vec<CorpusSpec> {
    input
        .inputs
        .iter()
        .map(|path| {
            let format = input.format.map(CorpusFormat::from).or_else(|| {
                if path.is_dir() {
                    return Some(CorpusFormat::EmlDir);
                }
                match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
                    Some("mbox") => Some(CorpusFormat::Mbox),
                    Some("csv") => Some(CorpusFormat::Csv),
                    _ => None,
                }
            });
            CorpusSpec {
                path: path.clone(),
                format,
                label: input.label,
            }
        })
        .collect()
}

/// Loaded messages with their group (the corpus name; `None` for loose
/// message files).
fn load_inputs(specs: &[CorpusSpec]) -> Result<Vec<(Option<String>, RawEmail)>, CliError> {
    let mut out = Vec::new();
    for spec in specs {
        match spec.format {
            None => {
                let bytes = std::fs::read(&spec.path).map_err(CliError::io(&spec.path))?;
                let id = spec
                    .path
                    .file_name()
                    .map_or_else(|| spec.path.display().to_string(), |n| n.to_string_lossy().into_owned());
                let label = spec.label.map_or(CorpusLabel::Unlabeled, CorpusLabel::from);
                out.push((None, RawEmail::new(id, bytes, label)));
            }
            Some(format) => {
                let opts = CorpusOptions {
                    label: spec.label,
                    ..CorpusOptions::default()
                };
                let group = spec
                    .path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned());
                for email in load_corpus_with(&spec.path, format, &opts)? {
                    out.push((group.clone(), email));
                }
            }
        }
    }
    Ok(out)
}

fn backend(cfg: &RunConfig) -> Result<Arc<dyn ChatBackend>, CliError> {
    Ok(build_backend(&cfg.backend)?)
}

#[derive(Debug, Serialize)]
struct AgentRow<'a> {
    role: AgentRole,
    verdict: Label,
    confidence: f64,
    reasons: &'a str,
}

/// Superset of the evaluator's prediction row.
#[derive(Debug, Serialize)]
struct ClassifyRow<'a> {
    email_id: &'a str,
    system: &'a str,
    label: Label,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<&'a str>,
    w: [f64; 3],
    agents: Vec<AgentRow<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explanation: Option<String>,
}

#[derive(Debug, Serialize)]
struct FailureRow {
    email_id: String,
    error: &'static str,
    message: String,
}

fn classify(
    cli: &Cli,
    input: &InputArgs,
    checkpoint: Option<&Path>,
    explain: Option<ExplanationMode>,
    system: Option<&str>,
) -> Result<(i32, RunRecord), CliError> {
    let mut cfg = base_config(cli, "classify")?;
    cfg.fusion = match (cli.global.fusion, checkpoint) {
        (Some(mode), _) => mode,
        (None, Some(_)) => FusionMode::Learned,
        (None, None) => FusionMode::Static(*WeightVector::static_default().as_array()),
    };
    let source = match cfg.fusion {
        FusionMode::Static(w) => WeightSource::Static(WeightVector::new(w)?),
        FusionMode::Learned => {
            let path = checkpoint.ok_or_else(|| {
                CliError::InvalidConfig("learned fusion needs --checkpoint".into())
            })?;
            WeightSource::Learned(Checkpoint::load(path)?.params()?)
        }
    };
    cfg.system = system.map_or_else(
        || match cfg.fusion {
            FusionMode::Learned => "learned".to_string(),
            FusionMode::Static(_) => "static".to_string(),
        },
        str::to_string,
    );
    cfg.corpora = corpus_specs(input);
    cfg.explain = explain;
    if let Some(path) = checkpoint {
        cfg.set_checkpoint(path)?;
    }
    let detector = Detector::new(source, cfg.threshold)?;
    let backend = backend(&cfg)?;
    let emails = load_inputs(&cfg.corpora)?;

    let results: Vec<Result<(Label, f64, [f64; 3], [_; 3], Option<String>), CliError>> = emails
        .par_iter()
        .map(|(_, raw)| {
            let parsed = parse_eml(raw)?;
            let result = detector.detect(&parsed, backend.as_ref())?;
            let explanation = match explain {
                Some(mode) => Some(simplify(backend.as_ref(), &result.reports, mode)?.text),
                None => None,
            };
            Ok((result.label, result.y, *result.w.as_array(), result.reports, explanation))
        })
        .collect();

    let system = cfg.system.clone();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut phishing = 0;
    for ((group, raw), res) in emails.iter().zip(&results) {
        match res {
            Ok((label, y, w, reports, explanation)) => {
                phishing += usize::from(label.is_phishing());
                if !cli.global.quiet {
                    println!("{}\t{y:.4}\t{}", label, raw.source_id());
                }
                rows.push(ClassifyRow {
                    email_id: raw.source_id(),
                    system: &system,
                    label: *label,
                    score: *y,
                    truth: raw.corpus_label().label(),
                    group: group.as_deref(),
                    w: *w,
                    agents: reports
                        .iter()
                        .map(|r| AgentRow {
                            role: r.role,
                            verdict: r.verdict.verdict,
                            confidence: r.verdict.confidence,
                            reasons: &r.verdict.reasons,
                        })
                        .collect(),
                    explanation: explanation.clone(),
                });
            }
            Err(e) => failures.push(FailureRow {
                email_id: raw.source_id().to_string(),
                error: e.kind(),
                message: e.to_string(),
            }),
        }
    }

    let mut record = RunRecord::new(cfg);
    let out = &record.config.output_dir;
    let predictions = out.join("predictions.jsonl");
    write_jsonl(&predictions, &rows, &record.config_hash)?;
    record.outputs.push(predictions);
    if !failures.is_empty() {
        let path = out.join("errors.jsonl");
        write_jsonl(&path, &failures, &record.config_hash)?;
        record.outputs.push(path);
        record.write(&record.config.output_dir)?;
        return Err(CliError::PartialFailure {
            failed: failures.len(),
            total: emails.len(),
        });
    }
    Ok((i32::from(phishing > 0), record))
}

fn labeled(emails: Vec<(Option<String>, RawEmail)>) -> Vec<RawEmail> {
    emails.into_iter().map(|(_, e)| e).collect()
}

fn train_cmd(
    cli: &Cli,
    input: &InputArgs,
    ppo: PpoConfig,
    passes: usize,
    checkpoint_every: u64,
    resume: Option<&Path>,
) -> Result<(i32, RunRecord), CliError> {
    let mut cfg = base_config(cli, "train")?;
    if let FusionMode::Static(_) = cfg.fusion {
        return Err(CliError::InvalidConfig(
            "static fusion has no parameters to train; use --fusion learned".into(),
        ));
    }
    cfg.ppo = ppo;
    cfg.corpora = corpus_specs(input);
    cfg.system = "learned".into();
    if let Some(path) = resume {
        cfg.set_checkpoint(path)?;
    }
    cfg.extra = json!({ "passes": passes, "checkpoint_every": checkpoint_every });

    let start = match resume {
        Some(path) => Some(Checkpoint::load(path)?.trainer_state()?),
        None => None,
    };
    let train_cfg = TrainConfig {
        ppo,
        threshold: cfg.threshold,
        passes,
        checkpoint_every,
        checkpoint_dir: Some(cfg.output_dir.join("checkpoints")),
        ..TrainConfig::default()
    };
    let backend = backend(&cfg)?;
    let corpus = labeled(load_inputs(&cfg.corpora)?);
    let outcome = train(
        &corpus,
        backend.as_ref(),
        &KeywordLexicon::bundled(),
        &ReputationTable::bundled(),
        &train_cfg,
        start,
    )?;

    let mut record = RunRecord::new(cfg);
    let out = record.config.output_dir.clone();
    let log = out.join("train_log.jsonl");
    write_jsonl(&log, &outcome.log, &record.config_hash)?;
    let ckpt = out.join("checkpoint.json");
    Checkpoint::from_state(&outcome.state, record.config.threshold).save(&ckpt)?;
    if let Some(last) = outcome.log.last() {
        println!(
            "trained {} batches; last mean reward {:.4}; checkpoint {}",
            last.batch,
            last.mean_reward,
            ckpt.display()
        );
    }
    record.outputs = vec![log, ckpt.clone()];
    record.checkpoints = outcome.checkpoints;
    record.checkpoints.push(ckpt);
    Ok((0, record))
}

fn eval_cmd(cli: &Cli, predictions: &[PathBuf], reference: Option<String>) -> Result<(i32, RunRecord), CliError> {
    let mut cfg = base_config(cli, "eval")?;
    cfg.extra = json!({ "predictions": predictions, "reference": reference });
    let mut rows = Vec::new();
    for path in predictions {
        let file = std::fs::File::open(path).map_err(CliError::io(path))?;
        rows.extend(read_predictions(BufReader::new(file))?);
    }
    let report = evaluate_run(&rows, &EvalConfig { reference })?;
    let text = render_report(&report);
    print!("{text}");

    let mut record = RunRecord::new(cfg);
    let out = record.config.output_dir.clone();
    let json_path = out.join("report.json");
    let body = serde_json::to_string_pretty(&json!({ "config_hash": record.config_hash, "report": report }))
        .expect("report serialises");
    std::fs::write(&json_path, body + "\n").map_err(CliError::io(&json_path))?;
    let txt_path = out.join("report.txt");
    std::fs::write(&txt_path, &text).map_err(CliError::io(&txt_path))?;
    record.outputs = vec![json_path, txt_path];
    Ok((0, record))
}

struct AdversarialSettings {
    ppo: PpoConfig,
    rounds: usize,
    passes: usize,
    retrain_passes: usize,
    generator: Generator,
    sample_fraction: f64,
    admission_cap: f64,
}

fn adversarial_cmd(
    cli: &Cli,
    input: &InputArgs,
    checkpoint: Option<&Path>,
    s: &AdversarialSettings,
) -> Result<(i32, RunRecord), CliError> {
    let mut cfg = base_config(cli, "adversarial")?;
    if let FusionMode::Static(_) = cfg.fusion {
        return Err(CliError::InvalidConfig("the adversarial loop retrains a learned policy".into()));
    }
    cfg.ppo = s.ppo;
    cfg.corpora = corpus_specs(input);
    cfg.system = "learned".into();
    if let Some(path) = checkpoint {
        cfg.set_checkpoint(path)?;
    }
    cfg.extra = json!({
        "rounds": s.rounds,
        "passes": s.passes,
        "retrain_passes": s.retrain_passes,
        "generator": s.generator,
        "sample_fraction": s.sample_fraction,
        "admission_cap": s.admission_cap,
    });
    let backend = backend(&cfg)?;
    let corpus = labeled(load_inputs(&cfg.corpora)?);
    let train_cfg = TrainConfig {
        ppo: s.ppo,
        threshold: cfg.threshold,
        passes: s.passes,
        ..TrainConfig::default()
    };
    let state: TrainerState = match checkpoint {
        Some(path) => Checkpoint::load(path)?.trainer_state()?,
        None => {
            train(
                &corpus,
                backend.as_ref(),
                &KeywordLexicon::bundled(),
                &ReputationTable::bundled(),
                &train_cfg,
                None,
            )?
            .state
        }
    };
    let loop_cfg = LoopConfig {
        rounds: s.rounds,
        sample_fraction: s.sample_fraction,
        admission_cap: s.admission_cap,
        generator: s.generator,
        train: TrainConfig {
            passes: s.retrain_passes,
            ..train_cfg
        },
        seed: cli.global.seed,
        run_dir: Some(cfg.output_dir.clone()),
        protected: input.inputs.clone(),
        ..LoopConfig::default()
    };
    let outcome = adversarial_loop(&corpus, backend.as_ref(), state, &loop_cfg)?;
    for r in &outcome.rounds {
        println!(
            "round {}: {} variants, {} evaded ({:.2}%), {} admitted, pool {}",
            r.round,
            r.variants,
            r.evaded,
            100.0 * r.evasion_rate,
            r.admitted,
            r.pool_size
        );
    }

    let mut record = RunRecord::new(cfg);
    let out = record.config.output_dir.clone();
    let rounds = out.join("rounds.jsonl");
    write_jsonl(&rounds, &outcome.rounds, &record.config_hash)?;
    let admitted = out.join("admitted.jsonl");
    write_jsonl(&admitted, &outcome.admitted, &record.config_hash)?;
    let ckpt = out.join("checkpoint.json");
    Checkpoint::from_state(&outcome.state, record.config.threshold).save(&ckpt)?;
    record.outputs = vec![rounds, admitted, ckpt.clone()];
    for k in 1..=outcome.rounds.len() {
        record.outputs.push(out.join(format!("round_{k}")));
    }
    record.checkpoints = vec![ckpt];
    Ok((0, record))
}

/// `id`/`email_id` to `text`/`explanation`/`reference`.
fn read_texts(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |why: &str| CliError::InvalidConfig(format!("{}:{}: {why}", path.display(), i + 1));
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let field = |keys: &[&str]| keys.iter().find_map(|k| v.get(*k).and_then(|x| x.as_str()).map(String::from));
        let id = field(&["email_id", "id"]).ok_or_else(|| bad("missing `email_id` or `id`"))?;
        let body = field(&["explanation", "text", "reference"])
            .ok_or_else(|| bad("missing `explanation`, `text` or `reference`"))?;
        out.push((id, body));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct QualityRow {
    email_id: String,
    #[serde(flatten)]
    report: TextQualityReport,
}

fn quality_cmd(
    cli: &Cli,
    candidates: &Path,
    references: &Path,
    lm_corpus: Option<&Path>,
    topics: usize,
    top_k: usize,
) -> Result<(i32, RunRecord), CliError> {
    let mut cfg = base_config(cli, "quality")?;
    cfg.extra = json!({
        "candidates": candidates,
        "references": references,
        "lm_corpus": lm_corpus,
        "topics": topics,
        "top_k": top_k,
    });
    let cands = read_texts(candidates)?;
    let refs: HashMap<String, String> = read_texts(references)?.into_iter().collect();
    let lm = match lm_corpus {
        Some(p) => UnigramModel::from_reference_file(p).map_err(CliError::io(p))?,
        None => UnigramModel::train(refs.values().map(String::as_str)),
    };
    let texts: Vec<&str> = cands.iter().map(|(_, t)| t.as_str()).collect();
    let coherence = topic_coherence(&texts, CoherenceConfig { topics, top_k })?;
    let embedder = TfEmbedder;
    let mut rows = Vec::new();
    for (id, text) in &cands {
        let reference = refs
            .get(id)
            .ok_or_else(|| CliError::InvalidConfig(format!("no reference text for `{id}`")))?;
        rows.push(QualityRow {
            email_id: id.clone(),
            report: assess(text, reference, &lm, &embedder, coherence)?,
        });
    }
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&TextQualityReport) -> f64| rows.iter().map(|r| f(&r.report)).sum::<f64>() / n;
    println!(
        "{} texts: perplexity {:.2}, coherence {:.3}, FRES {:.2}, ROUGE-1 recall {:.3}, cosine {:.3}",
        rows.len(),
        mean(|r| r.perplexity),
        coherence,
        mean(|r| r.fres),
        mean(|r| r.rouge1_recall),
        mean(|r| r.cosine),
    );

    let mut record = RunRecord::new(cfg);
    let path = record.config.output_dir.join("quality.jsonl");
    write_jsonl(&path, &rows, &record.config_hash)?;
    record.outputs = vec![path];
    Ok((0, record))
}

fn synth_cmd(cli: &Cli, synth: SynthConfig) -> Result<(i32, RunRecord), CliError> {
    let mut cfg = base_config(cli, "synth")?;
    cfg.extra = serde_json::to_value(&synth).expect("synth config serialises");
    let out = cfg.output_dir.clone();
    let mut written = Vec::new();
    for email in synthetic_corpus(&synth) {
        let dir = match email.corpus_label() {
            CorpusLabel::Phishing => "phishing",
            _ => "legitimate",
        };
        let dir = out.join(dir);
        ensure_dir(&dir)?;
        let path = dir.join(format!("{}.eml", email.source_id()));
        std::fs::write(&path, email.bytes()).map_err(CliError::io(&path))?;
        written.push(path);
    }
    println!("wrote {} messages to {}", written.len(), out.display());
    let mut record = RunRecord::new(cfg);
    record.outputs = vec![out.join("phishing"), out.join("legitimate")];
    Ok((0, record))
}
