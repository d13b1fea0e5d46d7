//! Multi-agent phishing email detection.
//!
//! The crate is organised along the detection pipeline:
//!
//! * [`email`] parses raw messages and corpora into [`email::ParsedEmail`] and
//!   extracts the static features consumed by the fusion policy.
//! * [`agents`] renders the role prompts, talks to a chat backend and parses
//!   the structured verdicts of the text, URL and metadata agents.
//! * [`fusion`] combines the three verdicts with a weight vector, either
//!   static or produced by a Dirichlet policy trained with PPO.
//! * [`adversarial`] generates label-preserving email variants and runs the
//!   generate, detect and retrain loop.
//! * [`explain`] produces the consolidated explanation and the rationale
//!   quality metrics.
//! * [`eval`] holds the classification metrics and the paired McNemar tests
//!   with Benjamini-Hochberg adjustment.

pub mod adversarial;
pub mod agents;
pub mod confusables;
pub mod email;
pub mod eval;
pub mod explain;
pub mod fusion;
mod label;
pub mod synth;
pub mod text;

pub use label::{Label, ParseLabelError};
