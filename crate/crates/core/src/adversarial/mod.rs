//! Label-preserving adversarial variants and the generate, detect, retrain
//! loop.

mod generate;
mod rounds;
mod transforms;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::AgentError;
use crate::fusion::FusionError;
use crate::Label;

pub use generate::{generate_llm_variant, infer_transforms, variant_email};
pub use rounds::{adversarial_loop, LoopConfig, LoopOutcome, RoundReport};
pub use transforms::{
    content_modify, eligible_positions, homoglyph_replace, mock_transform_kinds, neutral_sentences,
    replace_at, rule_based_message, rule_based_variant, synonym_substitute, SynonymLexicon,
    RULE_KINDS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    SynonymSub,
    SentenceRewrite,
    ContentMod,
    Homoglyph,
    Polymorphic,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::SynonymSub,
        TransformKind::SentenceRewrite,
        TransformKind::ContentMod,
        TransformKind::Homoglyph,
        TransformKind::Polymorphic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::SynonymSub => "synonym_sub",
            TransformKind::SentenceRewrite => "sentence_rewrite",
            TransformKind::ContentMod => "content_mod",
            TransformKind::Homoglyph => "homoglyph",
            TransformKind::Polymorphic => "polymorphic",
        }
    }

    /// Name used in the emphasis line of the generator prompt.
    pub fn prompt_name(self) -> &'static str {
        match self {
            TransformKind::SynonymSub => "Synonym Substitution",
            TransformKind::SentenceRewrite => "Sentence Rewriting",
            TransformKind::ContentMod => "Content Modification",
            TransformKind::Homoglyph => "Homoglyph Replacement",
            TransformKind::Polymorphic => "Polymorphic Variation",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s) || k.prompt_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown transform `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Llm,
    RuleBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialVariant {
    pub id: String,
    pub source_id: String,
    pub intended_label: Label,
    /// The full rewritten message.
    pub text: String,
    pub transforms: Vec<TransformKind>,
    pub generator: Generator,
    /// Always true. Marks the record as synthetic so exports can drop it.
    pub generated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub variant_id: String,
    pub y: f64,
    pub label: Label,
    pub evaded: bool,
}

impl FeedbackRecord {
    pub fn new(variant: &AdversarialVariant, y: f64, label: Label) -> Self {
        Self {
            variant_id: variant.id.clone(),
            y,
            label,
            evaded: label != variant.intended_label,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AdversarialError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("the generator returned an empty variant")]
    EmptyVariant,
    #[error("the generator returned the source text unchanged")]
    Unchanged,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("refusing to write {0}: outside the run directory or inside a corpus input")]
    Containment(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
