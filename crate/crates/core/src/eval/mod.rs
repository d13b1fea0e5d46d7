//! Classification metrics and paired McNemar tests with Benjamini-Hochberg
//! adjustment.

mod mcnemar;
mod metrics;
mod run;

pub use mcnemar::{
    bh_adjust, format_p, mcnemar, mcnemar_exact, mcnemar_midp, paired_outcomes, McNemarMethod,
    McNemarResult, PairedOutcomes, EXACT_LIMIT,
};
pub use metrics::{confusion, format_pct, metrics, round_half_up, ConfusionCounts, MetricReport};
pub use run::{
    evaluate_run, read_predictions, render_report, Comparison, EvalConfig, EvalReport, GroupKind,
    GroupReport, PredictionRow, SystemReport,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("p-value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("email {0} has no ground-truth label")]
    MissingTruth(String),
    #[error("email {0} carries different ground-truth labels across rows")]
    TruthConflict(String),
    #[error("system {system} has two rows for email {email_id}")]
    Duplicate { system: String, email_id: String },
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("predictions line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
