//! Validation of relation-classifier output with extractive question
//! answering.
//!
//! For an entity pair, each candidate relation is turned into a question
//! (`"head | relation"`) and a QA model judges whether the tail entity
//! answers it within the pair's context. The QA verdict is fused with the
//! classifier's score, pushing relations the context supports up and the
//! rest down. Evaluation utilities measure the effect on aggregate
//! precision/recall.
//!
//! The pipeline, module by module:
//!
//! - [`ingest`]: bag and prediction files, context truncation and assembly
//! - [`samples`]: question construction and QA training data
//! - [`scoring`]: span confidence, validation score, losses, scorers
//! - [`engine`]: candidate selection and score fusion
//! - [`eval`]: PR curves, AUC and precision@N
//! - [`synth`]: seeded synthetic corpora

pub mod engine;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod samples;
pub mod scoring;
pub mod seed;
pub mod synth;

pub use engine::{
    select_strategy1, select_strategy2, update_unvalidated, update_validated, validate_bag, validate_dataset,
    UpdatedPrediction,
};
pub use error::{Error, Result};
pub use eval::{
    collect_fact_predictions, compare_reports, evaluate, gold_fact_count, pr_curve, precision_at_n, DeltaReport,
    FactPrediction, MetricsReport, PrCurve,
};
pub use ingest::{build_context, parse_bags, parse_rc_predictions, truncate_sentence, Context, NULL_TOKEN};
pub use model::{Bag, BagScores, Mention, RcPrediction, RelationSchema, Strategy, ValidationConfig};
pub use samples::{generate_qa_dataset, make_question, QaDataset, QaSample};
pub use scoring::{
    confidence_score, dataset_loss, qa_losses, validation_score, Fact, QaScore, QaScorer, RemoteScorer, ScorerSpec,
    SyntheticScorer,
};
