//! QA-side scoring: span confidence, validation score, training losses and
//! the [`QaScorer`] abstraction with its synthetic and remote backends.

mod math;
pub mod protocol;
mod remote;
mod synthetic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Context;
use crate::model::RelationSchema;

pub use math::{
    confidence_score, confidence_score_within, dataset_loss, qa_losses, validation_score, QaLosses, LOG_FLOOR,
};
pub use remote::RemoteScorer;
pub use synthetic::{Fact, SyntheticScorer};

/// Allowed deviation of a position distribution's total mass from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Output of a QA model for one (question, context) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaScore {
    pub p_ans: f64,
    pub p_start: Vec<f64>,
    pub p_end: Vec<f64>,
}

impl QaScore {
    pub fn new(p_ans: f64, p_start: Vec<f64>, p_end: Vec<f64>) -> Result<Self> {
        let score = Self { p_ans, p_start, p_end };
        score.check()?;
        Ok(score)
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_ans) {
            return Err(Error::InvalidScore(format!("p_ans = {} outside [0, 1]", self.p_ans)));
        }
        if self.p_start.len() != self.p_end.len() {
            return Err(Error::InvalidScore(format!(
                "p_start has {} entries, p_end has {}",
                self.p_start.len(),
                self.p_end.len()
            )));
        }
        for (name, v) in [("p_start", &self.p_start), ("p_end", &self.p_end)] {
            if v.is_empty() {
                return Err(Error::InvalidScore(format!("{name} is empty")));
            }
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::InvalidScore(format!("{name} has entry {x}")));
            }
            let total: f64 = v.iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::InvalidScore(format!("{name} sums to {total}")));
            }
        }
        Ok(())
    }

    /// Checks the score against the context it was produced for.
    pub fn check_for(&self, context: &Context) -> Result<()> {
        self.check()?;
        if self.p_start.len() != context.len() {
            return Err(Error::LengthMismatch(format!(
                "score covers {} positions, context has {} tokens",
                self.p_start.len(),
                context.len()
            )));
        }
        Ok(())
    }

    pub fn confidence(&self) -> f64 {
        confidence_score(&self.p_start, &self.p_end).expect("checked lengths")
    }

    pub fn validation_score(&self) -> f64 {
        validation_score(self.p_ans, self.confidence()).expect("checked ranges")
    }
}

/// A QA model that can be asked whether a question is answerable under a
/// context.
pub trait QaScorer: Send + Sync {
    fn score(&self, question: &str, context: &Context) -> Result<QaScore>;

    /// Whether repeated calls with the same inputs give identical scores.
    fn is_deterministic(&self) -> bool {
        true
    }

    fn describe(&self) -> String;
}

impl<T: QaScorer + ?Sized> QaScorer for Arc<T> {
    fn score(&self, question: &str, context: &Context) -> Result<QaScore> {
        (**self).score(question, context)
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Declarative description of which scorer to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Synthetic { facts: Vec<Fact>, noise: f64, seed: u64 },
    Remote { endpoint: String },
}

impl ScorerSpec {
    pub fn build(&self, schema: &RelationSchema) -> Result<Arc<dyn QaScorer>> {
        Ok(match self {
            ScorerSpec::Synthetic { facts, noise, seed } => Arc::new(SyntheticScorer::new(
                schema.clone(),
                facts.iter().cloned(),
                *noise,
                *seed,
            )?),
            ScorerSpec::Remote { endpoint } => Arc::new(RemoteScorer::connect(endpoint)?),
        })
    }
}
