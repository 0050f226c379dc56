//! Rain and cicada classification with decision trees, and the silence test.

mod dataset;
mod silence;
mod train;
mod tree;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::spectral::{Band, IndexName, SpectralError};

pub use dataset::{LabeledDataset, DATASET_HEADER};
pub use silence::{detect_silence, SilenceConfig};
pub use train::{accuracy, cross_validate, train_tree, TrainResult};
pub use tree::{load_rules, save_rules, Classification, DecisionTree, Node};

const RAIN_RULES: &str = include_str!("../../rules/rain.rules");
const CICADA_RULES: &str = include_str!("../../rules/cicada.rules");

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("feature {index}/{band} missing from the feature vector")]
    MissingFeature { index: IndexName, band: Band },
    #[error("malformed rules (line {line}): {msg}")]
    MalformedRules { line: usize, msg: String },
    #[error("clip is {actual_s:.3} s, expected about {expected_s} s")]
    WrongLength { expected_s: f64, actual_s: f64 },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

/// Rain rules shipped with the crate, trained on the synthetic corpus.
pub fn default_rain_rules() -> DecisionTree {
    DecisionTree::from_rules_text(RAIN_RULES).expect("bundled rain rules are valid")
}

/// Cicada rules shipped with the crate, trained on the synthetic corpus.
pub fn default_cicada_rules() -> DecisionTree {
    DecisionTree::from_rules_text(CICADA_RULES).expect("bundled cicada rules are valid")
}
