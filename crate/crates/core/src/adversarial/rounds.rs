use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    generate_llm_variant, mock_transform_kinds, rule_based_variant, variant_email, AdversarialError,
    AdversarialVariant, FeedbackRecord, Generator, TransformKind, RULE_KINDS,
};
use crate::agents::ChatBackend;
use crate::email::{parse_eml, KeywordLexicon, ParsedEmail, RawEmail, ReputationTable};
use crate::fusion::{
    gather_inputs, train_on_inputs, Detector, FusionError, FusionInput, TrainConfig, TrainerState,
    WeightSource,
};
use crate::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub rounds: usize,
    /// Share of each class sampled for variant generation per round.
    pub sample_fraction: f64,
    /// Most evading variants admitted per round, as a share of the original pool.
    pub admission_cap: f64,
    /// Homoglyph intensity in round 1; grows by `intensity_step` per round.
    pub base_intensity: f64,
    pub intensity_step: f64,
    pub generator: Generator,
    /// Retraining settings; `passes` is the retraining length per round.
    pub train: TrainConfig,
    pub seed: u64,
    #[serde(skip)]
    pub run_dir: Option<PathBuf>,
    /// Corpus inputs. Nothing is ever written below these paths.
    #[serde(skip)]
    pub protected: Vec<PathBuf>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            rounds: 2,
            sample_fraction: 0.25,
            admission_cap: 0.2,
            base_intensity: 0.3,
            intensity_step: 0.2,
            generator: Generator::Llm,
            train: TrainConfig {
                passes: 2,
                ..TrainConfig::default()
            },
            seed: 0,
            run_dir: None,
            protected: Vec::new(),
        }
    }
}

impl LoopConfig {
    pub fn intensity(&self, round: usize) -> f64 {
        (self.base_intensity + self.intensity_step * (round - 1) as f64).clamp(f64::MIN_POSITIVE, 1.0)
    }

    fn validate(&self) -> Result<(), AdversarialError> {
        let bad = |m: &str| Err(AdversarialError::InvalidConfig(m.to_string()));
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad("sample_fraction must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.admission_cap) {
            return bad("admission_cap must lie in [0, 1]");
        }
        if !(self.base_intensity > 0.0 && self.base_intensity <= 1.0) || self.intensity_step < 0.0 {
            return bad("base_intensity must lie in (0, 1] and intensity_step be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub intensity: f64,
    pub variants: usize,
    pub evaded: usize,
    pub evasion_rate: f64,
    pub admitted: usize,
    pub pool_size: usize,
    /// Strategies stressed in this round's generator prompt.
    pub emphasis: Vec<TransformKind>,
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    /// Every generated variant, by round.
    pub variants: Vec<Vec<AdversarialVariant>>,
    pub feedback: Vec<Vec<FeedbackRecord>>,
    /// Variants added to the training pool.
    pub admitted: Vec<AdversarialVariant>,
    pub state: TrainerState,
    pub rounds: Vec<RoundReport>,
}

fn derive_seed(seed: u64, round: usize, index: usize) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update((round as u64).to_le_bytes())
        .chain_update((index as u64).to_le_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Generate, detect, admit evaders, retrain; once per round. The detector
/// for round k is the policy retrained after round k - 1.
pub fn adversarial_loop(
    corpus: &[RawEmail],
    backend: &dyn ChatBackend,
    state: TrainerState,
    cfg: &LoopConfig,
) -> Result<LoopOutcome, AdversarialError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(FusionError::EmptyCorpus.into());
    }
    let labels = corpus
        .iter()
        .map(|e| {
            e.corpus_label()
                .label()
                .ok_or_else(|| FusionError::Unlabeled(e.source_id().to_string()))
        })
        .collect::<Result<Vec<Label>, _>>()?;
    let parsed = corpus
        .iter()
        .map(|raw| parse_eml(raw).map_err(|e| FusionError::Email(format!("{}: {e}", raw.source_id()))))
        .collect::<Result<Vec<ParsedEmail>, _>>()?;
    let lexicon = KeywordLexicon::bundled();
    let reputation = ReputationTable::bundled();
    let inputs = gather_inputs(corpus, backend, &lexicon, &reputation)?;
    let mut pool: Vec<(FusionInput, Label)> = inputs.into_iter().zip(labels.iter().copied()).collect();
    let cap = (cfg.admission_cap * corpus.len() as f64).floor() as usize;

    let mut state = state;
    let mut emphasis: Vec<TransformKind> = Vec::new();
    let mut outcome_variants = Vec::new();
    let mut outcome_feedback = Vec::new();
    let mut admitted_all = Vec::new();
    let mut reports = Vec::new();

    for round in 1..=cfg.rounds {
        let intensity = cfg.intensity(round);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(round as u64);
        let mut chosen = Vec::new();
        for class in [Label::Phishing, Label::Legitimate] {
            let mut idx: Vec<usize> = (0..corpus.len()).filter(|&i| labels[i] == class).collect();
            idx.shuffle(&mut rng);
            let take = (cfg.sample_fraction * idx.len() as f64).ceil() as usize;
            chosen.extend(idx.into_iter().take(take));
        }
        chosen.sort_unstable();

        let detector = Detector::new(WeightSource::Learned(state.trainer.params.clone()), cfg.train.threshold)?;
        let results = chosen
            .par_iter()
            .map(|&i| {
                let source_id = corpus[i].source_id();
                let label = labels[i];
                let variant = match cfg.generator {
                    Generator::Llm => generate_llm_variant(backend, &parsed[i], source_id, label, &emphasis)?,
                    Generator::RuleBased => {
                        let preferred: Vec<TransformKind> = mock_transform_kinds(label)
                            .iter()
                            .copied()
                            .filter(|k| emphasis.is_empty() || emphasis.contains(k))
                            .collect();
                        let kinds = if preferred.is_empty() { mock_transform_kinds(label).to_vec() } else { preferred };
                        debug_assert!(kinds.iter().all(|k| RULE_KINDS.contains(k)));
                        rule_based_variant(&parsed[i], source_id, label, &kinds, derive_seed(cfg.seed, round, i), intensity)?
                    }
                };
                let email = variant_email(&variant.text, &parsed[i]);
                let detection = detector.detect(&email, backend)?;
                let feedback = FeedbackRecord::new(&variant, detection.y, detection.label);
                let input = FusionInput::from_reports(detection.features, &detection.reports);
                Ok((variant, feedback, input))
            })
            .collect::<Result<Vec<_>, AdversarialError>>()?;

        let evaded: Vec<&(AdversarialVariant, FeedbackRecord, FusionInput)> =
            results.iter().filter(|(_, f, _)| f.evaded).collect();
        let mut admitted = 0;
        for (variant, _, input) in evaded.iter().take(cap) {
            pool.push((*input, variant.intended_label));
            admitted_all.push(variant.clone());
            admitted += 1;
        }
        let next_emphasis: BTreeSet<TransformKind> =
            evaded.iter().flat_map(|(v, _, _)| v.transforms.iter().copied()).collect();

        let report = RoundReport {
            round,
            intensity,
            variants: results.len(),
            evaded: evaded.len(),
            evasion_rate: if results.is_empty() { 0.0 } else { evaded.len() as f64 / results.len() as f64 },
            admitted,
            pool_size: pool.len(),
            emphasis: emphasis.clone(),
        };
        tracing::info!(round, evasion = report.evasion_rate, admitted, "adversarial round");

        let variants: Vec<AdversarialVariant> = results.iter().map(|(v, _, _)| v.clone()).collect();
        let feedback: Vec<FeedbackRecord> = results.iter().map(|(_, f, _)| f.clone()).collect();
        if let Some(dir) = &cfg.run_dir {
            let round_dir = dir.join(format!("round_{round}"));
            write_jsonl(&round_dir, "variants.jsonl", &variants, &cfg.protected)?;
            write_jsonl(&round_dir, "feedback.jsonl", &feedback, &cfg.protected)?;
        }

        state = train_on_inputs(&pool, &cfg.train, Some(state))?.state;
        emphasis = next_emphasis.into_iter().collect();
        outcome_variants.push(variants);
        outcome_feedback.push(feedback);
        reports.push(report);
    }

    Ok(LoopOutcome {
        variants: outcome_variants,
        feedback: outcome_feedback,
        admitted: admitted_all,
        state,
        rounds: reports,
    })
}

fn canonical(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Writes one JSON object per line below `dir`, refusing any target inside a
/// protected corpus path.
fn write_jsonl<T: Serialize>(
    dir: &Path,
    name: &str,
    rows: &[T],
    protected: &[PathBuf],
) -> Result<(), AdversarialError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| AdversarialError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let target = canonical(dir).join(name);
    if protected.iter().map(|p| canonical(p)).any(|p| target.starts_with(&p)) {
        return Err(AdversarialError::Containment(target.display().to_string()));
    }
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("records serialise"));
        out.push('\n');
    }
    fs::File::create(&target)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(io(&target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::MockBackend;
    use crate::email::CorpusLabel;

    fn corpus() -> Vec<RawEmail> {
        let phish = "From: Support <help@secure-login.example>\nSubject: Verify your account\n\nUrgent: verify your account password at https://secure-login.example/x\n";
        let legit = "From: Ann <ann@university.example>\nSubject: Lunch\nAuthentication-Results: mx; spf=pass; dkim=pass; dmarc=pass\n\nSee you at noon.\n";
        (0..10)
            .map(|i| {
                let (text, label) = if i % 2 == 0 { (phish, CorpusLabel::Phishing) } else { (legit, CorpusLabel::Legitimate) };
                RawEmail::new(format!("m{i}"), text.as_bytes().to_vec(), label)
            })
            .collect()
    }

    #[test]
    fn zero_rounds_is_rejected() {
        let cfg = LoopConfig { rounds: 0, ..Default::default() };
        let state = TrainerState::fresh(&cfg.train).unwrap();
        assert!(matches!(
            adversarial_loop(&corpus(), &MockBackend::new(), state, &cfg),
            Err(AdversarialError::InvalidConfig(_))
        ));
    }

    #[test]
    fn variants_keep_labels_and_files_land_in_run_dir() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LoopConfig {
            run_dir: Some(dir.path().join("run")),
            ..Default::default()
        };
        let state = TrainerState::fresh(&cfg.train).unwrap();
        let out = adversarial_loop(&corpus(), &MockBackend::new(), state, &cfg).unwrap();
        assert_eq!(out.rounds.len(), 2);
        let labels: std::collections::HashMap<String, Label> = corpus()
            .iter()
            .map(|e| (e.source_id().to_string(), e.corpus_label().label().unwrap()))
            .collect();
        for v in out.variants.iter().flatten() {
            assert_eq!(v.intended_label, labels[&v.source_id]);
            assert!(v.generated);
        }
        assert!(out.admitted.len() <= 2 * 2);
        for r in 1..=2 {
            let lines = fs::read_to_string(dir.path().join(format!("run/round_{r}/variants.jsonl"))).unwrap();
            assert_eq!(lines.lines().count(), out.rounds[r - 1].variants);
        }
    }

    #[test]
    fn refuses_to_write_into_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LoopConfig {
            rounds: 1,
            run_dir: Some(dir.path().join("corpus/out")),
            protected: vec![dir.path().join("corpus")],
            ..Default::default()
        };
        fs::create_dir_all(dir.path().join("corpus")).unwrap();
        let state = TrainerState::fresh(&cfg.train).unwrap();
        assert!(matches!(
            adversarial_loop(&corpus(), &MockBackend::new(), state, &cfg),
            Err(AdversarialError::Containment(_))
        ));
    }
}
