//! Weighted fusion of the three detection agents and the PPO-trained
//! Dirichlet weight policy.

mod checkpoint;
mod infer;
mod policy;
mod ppo;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentReport, AgentVerdict};
use crate::email::EmailFeatures;
use crate::Label;

pub use checkpoint::{Checkpoint, CheckpointConfig, CheckpointError, LayerArray, CHECKPOINT_VERSION};
pub use infer::{infer, DetectionResult, Detector, WeightSource};
pub use policy::{dirichlet_log_density, dirichlet_mean, PolicyParams, PolicyShape, CONCENTRATION_FLOOR};
pub use ppo::{
    clipped_surrogate, compute_advantages, objective_and_gradient, ppo_update, Adam,
    EpochStats, Episode, PpoConfig, PpoTrainer, UpdateDiagnostics,
};
pub use train::{
    gather_inputs, train, train_on_inputs, BatchLog, TrainConfig, TrainOutcome, TrainerState,
};

pub const N_AGENTS: usize = 3;
/// Length of the policy input: six email features and three confidences.
pub const INPUT_DIM: usize = EmailFeatures::DIM + N_AGENTS;
/// Weights used when the policy is bypassed: text, URL, metadata.
pub const STATIC_WEIGHTS: [f64; N_AGENTS] = [0.3, 0.4, 0.3];
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("not a point on the simplex: {0:?}")]
    NotOnSimplex(Vec<f64>),
    #[error("non-finite activation in the policy network")]
    NonFiniteActivation,
    #[error("non-finite gradient during the PPO update: {0}")]
    NonFiniteGradient(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("email {0} has no ground-truth label")]
    Unlabeled(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("agent failure: {0}")]
    Agent(String),
    #[error("email failure: {0}")]
    Email(String),
}

/// Agent weights in text, URL, metadata order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector([f64; N_AGENTS]);

impl WeightVector {
    pub const SIMPLEX_TOL: f64 = 1e-9;

    pub fn new(w: [f64; N_AGENTS]) -> Result<Self, FusionError> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > Self::SIMPLEX_TOL {
            return Err(FusionError::NotOnSimplex(w.to_vec()));
        }
        Ok(Self(w))
    }

    pub fn from_slice(w: &[f64]) -> Result<Self, FusionError> {
        let arr: [f64; N_AGENTS] = w.try_into().map_err(|_| FusionError::DimensionMismatch {
            expected: N_AGENTS,
            got: w.len(),
        })?;
        Self::new(arr)
    }

    /// Divides by the sum; fails when a coordinate is negative or all are 0.
    pub fn normalized(w: [f64; N_AGENTS]) -> Result<Self, FusionError> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || w.iter().any(|x| *x < 0.0) {
            return Err(FusionError::NotOnSimplex(w.to_vec()));
        }
        Self::new(w.map(|x| x / sum))
    }

    pub fn uniform() -> Self {
        Self([1.0 / N_AGENTS as f64; N_AGENTS])
    }

    pub fn static_default() -> Self {
        Self(STATIC_WEIGHTS)
    }

    pub fn as_array(&self) -> &[f64; N_AGENTS] {
        &self.0
    }

    pub fn is_on_simplex(&self) -> bool {
        self.0.iter().all(|x| *x >= 0.0)
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= Self::SIMPLEX_TOL
    }
}

/// The per-email inputs of the fusion step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionInput {
    pub features: EmailFeatures,
    pub probs: [f64; N_AGENTS],
    pub confidences: [f64; N_AGENTS],
}

impl FusionInput {
    pub fn from_reports(features: EmailFeatures, reports: &[AgentReport; N_AGENTS]) -> Self {
        Self::from_verdicts(features, &reports.each_ref().map(|r| r.verdict.clone()))
    }

    pub fn from_verdicts(features: EmailFeatures, verdicts: &[AgentVerdict; N_AGENTS]) -> Self {
        Self {
            features,
            probs: verdicts.each_ref().map(agent_prob),
            confidences: verdicts.each_ref().map(|v| v.confidence),
        }
    }

    /// Policy input: normalised features followed by the confidences.
    pub fn policy_input(&self) -> [f64; INPUT_DIM] {
        let mut x = [0.0; INPUT_DIM];
        x[..EmailFeatures::DIM].copy_from_slice(&self.features.normalized());
        x[EmailFeatures::DIM..].copy_from_slice(&self.confidences);
        x
    }
}

/// Probability of phishing implied by one verdict.
pub fn agent_prob(verdict: &AgentVerdict) -> f64 {
    match verdict.verdict {
        Label::Phishing => verdict.confidence,
        Label::Legitimate => 1.0 - verdict.confidence,
    }
}

pub fn fuse(w: &WeightVector, p: &[f64]) -> Result<f64, FusionError> {
    if p.len() != N_AGENTS {
        return Err(FusionError::DimensionMismatch {
            expected: N_AGENTS,
            got: p.len(),
        });
    }
    let y: f64 = w.0.iter().zip(p).map(|(w, p)| w * p).sum();
    Ok(y.clamp(0.0, 1.0))
}

pub fn classify(y: f64, threshold: f64) -> Label {
    if y >= threshold {
        Label::Phishing
    } else {
        Label::Legitimate
    }
}

pub fn clip(r: f64, epsilon: f64) -> f64 {
    r.max(1.0 - epsilon).min(1.0 + epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FusionMode {
    Learned,
    Static(WeightVector),
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionMode::Learned => f.write_str("learned"),
            FusionMode::Static(w) => {
                let [a, b, c] = w.as_array();
                write!(f, "static:{a},{b},{c}")
            }
        }
    }
}

impl FromStr for FusionMode {
    type Err = String;

    /// `learned`, `static` (the 0.3/0.4/0.3 default) or `static:a,b,c`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("learned") {
            return Ok(FusionMode::Learned);
        }
        if s.eq_ignore_ascii_case("static") {
            return Ok(FusionMode::Static(WeightVector::static_default()));
        }
        let Some(list) = s.strip_prefix("static:") else {
            return Err(format!("unknown fusion mode `{s}`"));
        };
        let w = list
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad weight `{x}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        WeightVector::from_slice(&w).map(FusionMode::Static).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn verdict(label: Label, c: f64) -> AgentVerdict {
        AgentVerdict::new(label, c, "r").unwrap()
    }

    #[test]
    fn agent_prob_mapping() {
        assert_eq!(agent_prob(&verdict(Label::Phishing, 0.93)), 0.93);
        assert!((agent_prob(&verdict(Label::Legitimate, 0.80)) - 0.20).abs() < 1e-15);
        assert_eq!(agent_prob(&verdict(Label::Legitimate, 0.5)), 0.5);
    }

    #[test]
    fn fuse_examples() {
        let w = WeightVector::static_default();
        assert!((fuse(&w, &[0.9, 0.5, 0.1]).unwrap() - 0.5).abs() < 1e-12);
        let vertex = WeightVector::new([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(fuse(&vertex, &[0.37, 0.9, 0.1]).unwrap(), 0.37);
        assert!((fuse(&WeightVector::uniform(), &[1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(fuse(&w, &[0.1, 0.2]), Err(FusionError::DimensionMismatch { .. })));
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(0.50, 0.5), Label::Phishing);
        assert_eq!(classify(0.49, 0.5), Label::Legitimate);
        assert_eq!(classify(0.2, 0.1), Label::Phishing);
    }

    #[test]
    fn clip_examples() {
        assert!((clip(1.5, 0.2) - 1.2).abs() < 1e-15);
        assert!((clip(0.7, 0.2) - 0.8).abs() < 1e-15);
        assert_eq!(clip(1.0, 0.2), 1.0);
    }

    #[test]
    fn fusion_mode_parsing() {
        assert_eq!("learned".parse::<FusionMode>().unwrap(), FusionMode::Learned);
        let m: FusionMode = "static:0.3,0.4,0.3".parse().unwrap();
        assert_eq!(m, FusionMode::Static(WeightVector::static_default()));
        assert_eq!(m.to_string().parse::<FusionMode>().unwrap(), m);
        assert!("static:0.5,0.5,0.5".parse::<FusionMode>().is_err());
    }

    fn simplex() -> impl Strategy<Value = WeightVector> {
        (0.001f64..1.0, 0.001f64..1.0, 0.001f64..1.0)
            .prop_map(|(a, b, c)| WeightVector::normalized([a, b, c]).unwrap())
    }

    proptest! {
        #[test]
        fn fuse_is_monotone(w in simplex(), p in prop::array::uniform3(0.0f64..=1.0), i in 0usize..3, bump in 0.0f64..1.0) {
            let mut q = p;
            q[i] = (q[i] + bump).min(1.0);
            prop_assert!(fuse(&w, &q).unwrap() >= fuse(&w, &p).unwrap() - 1e-15);
        }

        #[test]
        fn fuse_stays_in_unit_interval(w in simplex(), p in prop::array::uniform3(0.0f64..=1.0)) {
            let y = fuse(&w, &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&y));
        }

        #[test]
        fn classify_is_threshold_monotone(y in 0.0f64..=1.0, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if classify(y, lo) == Label::Legitimate {
                prop_assert_eq!(classify(y, hi), Label::Legitimate);
            }
        }
    }
}
