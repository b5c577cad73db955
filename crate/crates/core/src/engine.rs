//! Candidate relation selection and score update.
//!
//! A validated relation's score becomes the weighted geometric mean of its
//! QA validation score and its classifier score; relations left
//! unvalidated (NA included) are fused with the constant `c` instead.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::build_context;
use crate::model::{Bag, BagScores, RcPrediction, RelationSchema, Strategy, ValidationConfig};
use crate::samples::make_question;
use crate::scoring::QaScorer;

/// `((p_qa)^λ · p)^(1/(λ+1))`.
pub fn update_validated(p_qa: f64, p: f64, lambda: f64) -> f64 {
    // Split form keeps p_qa^λ from underflowing for tiny QA scores.
    p_qa.powf(lambda / (lambda + 1.0)) * p.powf(1.0 / (lambda + 1.0))
}

/// `(c^λ · p)^(1/(λ+1))`.
pub fn update_unvalidated(p: f64, c: f64, lambda: f64) -> f64 {
    update_validated(c, p, lambda)
}

/// Descending by score, ties by ascending relation index.
fn rank_desc(scores: &[f64], candidates: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut order: Vec<usize> = candidates.collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

fn percent_count(percent: f64, of: usize) -> usize {
    ((percent * of as f64 / 100.0).ceil() as usize).min(of)
}

/// Relations with the most extreme QA scores: the top `alpha_percent` and
/// bottom `beta_percent` of the non-NA relations (counts rounded up).
///
/// `qa_scores` is indexed by relation; the NA entry is ignored.
pub fn select_strategy1(
    qa_scores: &[f64],
    schema: &RelationSchema,
    alpha_percent: f64,
    beta_percent: f64,
) -> Result<BTreeSet<usize>> {
    if qa_scores.len() != schema.len() {
        return Err(Error::LengthMismatch(format!(
            "{} QA scores for {} relations",
            qa_scores.len(),
            schema.len()
        )));
    }
    let m = schema.non_na_count();
    let order = rank_desc(qa_scores, schema.non_na_indices());
    let top = percent_count(alpha_percent, m);
    let bottom = percent_count(beta_percent, m);
    Ok(order[..top].iter().chain(&order[m - bottom..]).copied().collect())
}

/// Top `k` relations by classifier score, with NA dropped if it lands in
/// the top `k` (so the result may hold `k - 1` relations).
pub fn select_strategy2(rc_scores: &[f64], schema: &RelationSchema, k: usize) -> BTreeSet<usize> {
    rank_desc(rc_scores, 0..rc_scores.len())
        .into_iter()
        .take(k)
        .filter(|&r| r != schema.na_index())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdatedPrediction {
    pub bag_id: String,
    #[serde(rename = "scores")]
    pub updated_scores: Vec<f64>,
    #[serde(rename = "validated")]
    pub validated_mask: Vec<bool>,
}

impl BagScores for UpdatedPrediction {
    fn bag_id(&self) -> &str {
        &self.bag_id
    }

    fn scores(&self) -> &[f64] {
        &self.updated_scores
    }
}

/// Validation score for each requested relation, indexed by relation.
fn qa_scores_for(
    bag: &Bag,
    relations: impl Iterator<Item = usize>,
    scorer: &dyn QaScorer,
    schema: &RelationSchema,
    window: usize,
) -> Result<Vec<Option<f64>>> {
    let context = build_context(bag, window);
    let mut out = vec![None; schema.len()];
    for r in relations {
        let label = schema.label(r).expect("relation index from schema");
        let question = make_question(bag.head(), label)?;
        let score = scorer
            .score(&question, &context)
            .and_then(|s| s.check_for(&context).map(|_| s))
            .map_err(|e| Error::Scorer {
                bag_id: bag.bag_id().to_owned(),
                question: question.clone(),
                source: Box::new(e),
            })?;
        out[r] = Some(score.validation_score());
    }
    Ok(out)
}

pub fn validate_bag(
    bag: &Bag,
    rc_pred: &RcPrediction,
    scorer: &dyn QaScorer,
    config: &ValidationConfig,
    schema: &RelationSchema,
) -> Result<UpdatedPrediction> {
    if rc_pred.bag_id != bag.bag_id() {
        return Err(Error::InvalidArgument(format!(
            "prediction for `{}` applied to bag `{}`",
            rc_pred.bag_id,
            bag.bag_id()
        )));
    }
    if rc_pred.scores.len() != schema.len() {
        return Err(Error::ScoreLength {
            bag_id: rc_pred.bag_id.clone(),
            expected: schema.len(),
            got: rc_pred.scores.len(),
        });
    }

    let (selected, qa) = match config.strategy {
        Strategy::QaExtremes {
            alpha_percent,
            beta_percent,
        } => {
            let qa = qa_scores_for(bag, schema.non_na_indices(), scorer, schema, config.window)?;
            let dense: Vec<f64> = qa.iter().map(|s| s.unwrap_or(0.0)).collect();
            let selected = select_strategy1(&dense, schema, alpha_percent, beta_percent)?;
            (selected, qa)
        }
        Strategy::RcTopK { k } => {
            let selected = select_strategy2(&rc_pred.scores, schema, k);
            let qa = qa_scores_for(bag, selected.iter().copied(), scorer, schema, config.window)?;
            (selected, qa)
        }
    };

    let mut updated_scores = Vec::with_capacity(schema.len());
    let mut validated_mask = Vec::with_capacity(schema.len());
    for (r, &p) in rc_pred.scores.iter().enumerate() {
        match qa[r].filter(|_| selected.contains(&r)) {
            Some(p_qa) => {
                updated_scores.push(update_validated(p_qa, p, config.lambda));
                validated_mask.push(true);
            }
            None => {
                updated_scores.push(update_unvalidated(p, config.c, config.lambda));
                validated_mask.push(false);
            }
        }
    }
    Ok(UpdatedPrediction {
        bag_id: bag.bag_id().to_owned(),
        updated_scores,
        validated_mask,
    })
}

/// Validates every bag on a pool of `parallelism` worker threads.
///
/// Output order follows `bags` and does not depend on `parallelism`. The
/// first failing bag (in input order) aborts the run.
pub fn validate_dataset(
    bags: &[Bag],
    rc_preds: &HashMap<String, RcPrediction>,
    scorer: &dyn QaScorer,
    config: &ValidationConfig,
    schema: &RelationSchema,
    parallelism: usize,
) -> Result<Vec<UpdatedPrediction>> {
    config.validate(schema)?;
    let jobs = bags
        .iter()
        .map(|bag| {
            rc_preds
                .get(bag.bag_id())
                .map(|pred| (bag, pred))
                .ok_or_else(|| Error::MissingPrediction(bag.bag_id().to_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<UpdatedPrediction>> = pool.install(|| {
        jobs.par_iter()
            .map(|(bag, pred)| validate_bag(bag, pred, scorer, config, schema))
            .collect()
    });
    results.into_iter().collect()
}
