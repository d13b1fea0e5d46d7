use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    classify, compute_advantages, fuse, Checkpoint, Episode, FusionError, FusionInput,
    PolicyParams, PolicyShape, PpoConfig, PpoTrainer, DEFAULT_THRESHOLD, N_AGENTS,
};
use crate::agents::{run_detection, ChatBackend};
use crate::email::{extract_features, parse_eml, KeywordLexicon, RawEmail, ReputationTable};
use crate::Label;

/// Stream offset separating the shuffling RNG from the sampling RNG.
const SHUFFLE_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub threshold: f64,
    /// Passes over the corpus.
    pub passes: usize,
    /// Write a checkpoint every this many batches; 0 disables.
    pub checkpoint_every: u64,
    #[serde(skip)]
    pub checkpoint_dir: Option<PathBuf>,
    pub shape: PolicyShape,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            passes: 10,
            checkpoint_every: 0,
            checkpoint_dir: None,
            shape: PolicyShape::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: u64,
    pub pass: usize,
    pub size: usize,
    pub mean_reward: f64,
    pub objective: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub mean_weights: [f64; N_AGENTS],
}

/// Everything needed to continue training where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub trainer: PpoTrainer,
    pub batch_counter: u64,
}

impl TrainerState {
    pub fn fresh(cfg: &TrainConfig) -> Result<Self, FusionError> {
        let params = PolicyParams::init(cfg.shape, cfg.ppo.seed)?;
        Ok(Self {
            trainer: PpoTrainer::new(params, cfg.ppo)?,
            batch_counter: 0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainerState,
    pub log: Vec<BatchLog>,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainOutcome {
    pub fn params(&self) -> &PolicyParams {
        &self.state.trainer.params
    }
}

/// Parses every email and collects its three agent reports, in corpus order.
pub fn gather_inputs(
    corpus: &[RawEmail],
    backend: &dyn ChatBackend,
    lexicon: &KeywordLexicon,
    reputation: &ReputationTable,
) -> Result<Vec<FusionInput>, FusionError> {
    corpus
        .par_iter()
        .map(|raw| {
            let parsed = parse_eml(raw)
                .map_err(|e| FusionError::Email(format!("{}: {e}", raw.source_id())))?;
            let reports = run_detection(backend, &parsed)
                .map_err(|e| FusionError::Agent(format!("{}: {e}", raw.source_id())))?;
            let features = extract_features(&parsed, lexicon, reputation);
            Ok(FusionInput::from_reports(features, &reports))
        })
        .collect()
}

/// Trains the weight policy on a labeled corpus. Agent reports are fetched
/// once per email and reused across passes.
pub fn train(
    corpus: &[RawEmail],
    backend: &dyn ChatBackend,
    lexicon: &KeywordLexicon,
    reputation: &ReputationTable,
    cfg: &TrainConfig,
    resume: Option<TrainerState>,
) -> Result<TrainOutcome, FusionError> {
    if corpus.is_empty() {
        return Err(FusionError::EmptyCorpus);
    }
    let labels = corpus
        .iter()
        .map(|e| {
            e.corpus_label()
                .label()
                .ok_or_else(|| FusionError::Unlabeled(e.source_id().to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let inputs = gather_inputs(corpus, backend, lexicon, reputation)?;
    let data: Vec<(FusionInput, Label)> = inputs.into_iter().zip(labels).collect();
    train_on_inputs(&data, cfg, resume)
}

/// The PPO loop over prepared inputs: shuffle, cut into batches, sample
/// weights, reward correct classifications, update.
pub fn train_on_inputs(
    data: &[(FusionInput, Label)],
    cfg: &TrainConfig,
    resume: Option<TrainerState>,
) -> Result<TrainOutcome, FusionError> {
    if data.is_empty() {
        return Err(FusionError::EmptyCorpus);
    }
    cfg.ppo.validate()?;
    let mut state = match resume {
        Some(s) => s,
        None => TrainerState::fresh(cfg)?,
    };
    state.trainer.cfg = cfg.ppo;
    let seed = cfg.ppo.seed;
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();

    for pass in 0..cfg.passes {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
        shuffle_rng.set_stream(SHUFFLE_STREAM | state.batch_counter);
        order.shuffle(&mut shuffle_rng);

        for chunk in order.chunks(cfg.ppo.batch_size) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(state.batch_counter);
            let params = &state.trainer.params;
            let mut episodes = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (input, label) = &data[i];
                let (w, lp) = params.sample(&input.policy_input(), &mut rng)?;
                let y = fuse(&w, &input.probs)?;
                let reward = f64::from(classify(y, cfg.threshold) == *label);
                episodes.push(Episode {
                    input: *input,
                    sampled_w: w,
                    log_prob_old: lp,
                    reward,
                    advantage: 0.0,
                });
            }
            compute_advantages(params, &mut episodes)?;
            let diag = state.trainer.update(&episodes)?;
            state.batch_counter += 1;

            let n = episodes.len() as f64;
            let mut mean_weights = [0.0; N_AGENTS];
            for ep in &episodes {
                for (m, w) in mean_weights.iter_mut().zip(ep.sampled_w.as_array()) {
                    *m += w / n;
                }
            }
            let entry = BatchLog {
                batch: state.batch_counter,
                pass,
                size: episodes.len(),
                mean_reward: episodes.iter().map(|e| e.reward).sum::<f64>() / n,
                objective: diag.objective,
                mean_ratio: diag.mean_ratio,
                clip_fraction: diag.clip_fraction,
                mean_weights,
            };
            tracing::debug!(batch = entry.batch, reward = entry.mean_reward, "ppo batch");
            log.push(entry);

            if let Some(dir) = &cfg.checkpoint_dir {
                if cfg.checkpoint_every > 0 && state.batch_counter % cfg.checkpoint_every == 0 {
                    checkpoints.push(write_checkpoint(dir, &state, cfg)?);
                }
            }
        }
    }
    Ok(TrainOutcome {
        state,
        log,
        checkpoints,
    })
}

fn write_checkpoint(dir: &Path, state: &TrainerState, cfg: &TrainConfig) -> Result<PathBuf, FusionError> {
    let path = dir.join(format!("checkpoint-{:06}.json", state.batch_counter));
    Checkpoint::from_state(state, cfg.threshold)
        .save(&path)
        .map_err(|e| FusionError::InvalidConfig(e.to_string()))?;
    Ok(path)
}
