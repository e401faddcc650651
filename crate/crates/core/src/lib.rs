//! Binary comment classification with hand-crafted text features, precomputed
//! embeddings, truncated SVD, and hard-voting ensembles of logistic regression
//! and SVM members, plus calibration and density metrics for the outputs.
//!
//! The three targets are toxic, engaging, and fact-claiming comments. Every
//! stage is deterministic given a master seed.

pub mod corpus;
pub mod dimred;
pub mod embed_io;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod linclf;
pub mod metrics;
pub mod rng;
pub mod svm;
pub mod tuning;
pub mod workflow;

pub use error::{Error, Result};

/// The three binary subtasks, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtask {
    Toxic,
    Engaging,
    FactClaiming,
}

impl Subtask {
    pub const ALL: [Subtask; 3] = [Subtask::Toxic, Subtask::Engaging, Subtask::FactClaiming];

    pub fn index(self) -> usize {
        match self {
            Subtask::Toxic => 0,
            Subtask::Engaging => 1,
            Subtask::FactClaiming => 2,
        }
    }

    /// Dataset column holding this subtask's label.
    pub fn column(self) -> &'static str {
        match self {
            Subtask::Toxic => "Sub1_Toxic",
            Subtask::Engaging => "Sub2_Engaging",
            Subtask::FactClaiming => "Sub3_FactClaiming",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Subtask::Toxic => "toxic",
            Subtask::Engaging => "engaging",
            Subtask::FactClaiming => "fact_claiming",
        }
    }
}

impl std::fmt::Display for Subtask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
