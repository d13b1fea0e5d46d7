use serde::Serialize;

use super::{classify, fuse, FusionError, FusionInput, PolicyParams, WeightVector, N_AGENTS};
use crate::agents::{run_detection, AgentReport, ChatBackend};
use crate::email::{extract_features, EmailFeatures, KeywordLexicon, ParsedEmail, ReputationTable};
use crate::Label;

/// Where the weights come from at inference time.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    Static(WeightVector),
    /// The Dirichlet mean of the trained policy.
    Learned(PolicyParams),
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionResult {
    pub label: Label,
    /// Fused phishing probability.
    pub y: f64,
    pub w: WeightVector,
    pub features: EmailFeatures,
    pub reports: [AgentReport; N_AGENTS],
}

#[derive(Debug, Clone)]
pub struct Detector {
    pub source: WeightSource,
    pub threshold: f64,
    pub lexicon: KeywordLexicon,
    pub reputation: ReputationTable,
}

impl Detector {
    pub fn new(source: WeightSource, threshold: f64) -> Result<Self, FusionError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(FusionError::InvalidConfig(format!("threshold {threshold} outside [0, 1]")));
        }
        Ok(Self {
            source,
            threshold,
            lexicon: KeywordLexicon::bundled(),
            reputation: ReputationTable::bundled(),
        })
    }

    pub fn weights(&self, input: &FusionInput) -> Result<WeightVector, FusionError> {
        match &self.source {
            WeightSource::Static(w) => Ok(*w),
            WeightSource::Learned(p) => p.mean_weights(&input.policy_input()),
        }
    }

    /// Weights, fused score and label for already collected verdicts.
    pub fn decide(&self, input: &FusionInput) -> Result<(Label, f64, WeightVector), FusionError> {
        let w = self.weights(input)?;
        let y = fuse(&w, &input.probs)?;
        Ok((classify(y, self.threshold), y, w))
    }

    pub fn detect_from_reports(
        &self,
        email: &ParsedEmail,
        reports: [AgentReport; N_AGENTS],
    ) -> Result<DetectionResult, FusionError> {
        let features = extract_features(email, &self.lexicon, &self.reputation);
        let input = FusionInput::from_reports(features, &reports);
        let (label, y, w) = self.decide(&input)?;
        Ok(DetectionResult {
            label,
            y,
            w,
            features,
            reports,
        })
    }

    pub fn detect(&self, email: &ParsedEmail, backend: &dyn ChatBackend) -> Result<DetectionResult, FusionError> {
        let reports = run_detection(backend, email).map_err(|e| FusionError::Agent(e.to_string()))?;
        self.detect_from_reports(email, reports)
    }
}

/// Classifies one email with a trained policy.
pub fn infer(
    params: &PolicyParams,
    email: &ParsedEmail,
    backend: &dyn ChatBackend,
    threshold: f64,
) -> Result<DetectionResult, FusionError> {
    Detector::new(WeightSource::Learned(params.clone()), threshold)?.detect(email, backend)
}
