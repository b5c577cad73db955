//! Held-out evaluation over ranked (bag, relation) fact predictions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bag, BagScores, RelationSchema};

/// Cut-offs reported by default.
pub const DEFAULT_PRECISION_AT: [usize; 3] = [100, 200, 300];

#[derive(Debug, Clone, PartialEq)]
pub struct FactPrediction {
    pub bag_id: String,
    pub relation_index: usize,
    pub score: f64,
    pub is_correct: bool,
}

/// One fact prediction per (bag, non-NA relation), best first.
///
/// Ties are broken by bag id, then relation index, so the ranking is
/// reproducible.
pub fn collect_fact_predictions<P: BagScores>(
    predictions: &[P],
    bags: &[Bag],
    schema: &RelationSchema,
) -> Result<Vec<FactPrediction>> {
    let by_id: HashMap<&str, &Bag> = bags.iter().map(|b| (b.bag_id(), b)).collect();
    let mut facts = Vec::with_capacity(predictions.len() * schema.non_na_count());
    for pred in predictions {
        let bag = by_id
            .get(pred.bag_id())
            .ok_or_else(|| Error::UnknownBag(pred.bag_id().to_owned()))?;
        if bag.true_relations().is_empty() {
            return Err(Error::MissingGold(bag.bag_id().to_owned()));
        }
        if pred.scores().len() != schema.len() {
            return Err(Error::ScoreLength {
                bag_id: pred.bag_id().to_owned(),
                expected: schema.len(),
                got: pred.scores().len(),
            });
        }
        for r in schema.non_na_indices() {
            facts.push(FactPrediction {
                bag_id: pred.bag_id().to_owned(),
                relation_index: r,
                score: pred.scores()[r],
                is_correct: bag.true_relations().contains(&r),
            });
        }
    }
    facts.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.bag_id.cmp(&b.bag_id))
            .then(a.relation_index.cmp(&b.relation_index))
    });
    Ok(facts)
}

/// Number of distinct (bag, non-NA relation) gold facts.
pub fn gold_fact_count(bags: &[Bag], schema: &RelationSchema) -> usize {
    bags.iter().map(|b| b.gold_facts(schema).count()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` after each ranked prediction.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl PrCurve {
    /// Two tab-separated columns, `recall` then `precision`, one point per line.
    pub fn write_columns<W: Write>(&self, mut writer: W) -> Result<()> {
        for (recall, precision) in &self.points {
            writeln!(writer, "{recall}\t{precision}")?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Aggregate precision/recall curve with trapezoidal area.
///
/// The area starts from `(0, precision@1)`.
pub fn pr_curve(facts: &[FactPrediction], total_gold: usize) -> Result<PrCurve> {
    if facts.is_empty() {
        return Err(Error::InvalidArgument("PR curve of an empty prediction list".into()));
    }
    if total_gold == 0 {
        return Err(Error::InvalidArgument("PR curve needs at least one gold fact".into()));
    }
    let gold = total_gold as f64;
    let mut tp = 0usize;
    let points: Vec<(f64, f64)> = facts
        .iter()
        .enumerate()
        .map(|(i, f)| {
            tp += f.is_correct as usize;
            (tp as f64 / gold, tp as f64 / (i + 1) as f64)
        })
        .collect();
    let mut auc = 0.0;
    let mut prev = (0.0, points[0].1);
    for &(r, p) in &points {
        auc += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    Ok(PrCurve { points, auc })
}

pub fn precision_at_n(facts: &[FactPrediction], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("precision@0 is undefined".into()));
    }
    if facts.is_empty() {
        return Err(Error::InvalidArgument("precision@N of an empty prediction list".into()));
    }
    let top = &facts[..n.min(facts.len())];
    Ok(top.iter().filter(|f| f.is_correct).count() as f64 / top.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub p_at: BTreeMap<usize, f64>,
    pub n_predictions: usize,
    pub n_gold: usize,
}

pub fn evaluate(facts: &[FactPrediction], total_gold: usize, cutoffs: &[usize]) -> Result<(MetricsReport, PrCurve)> {
    let curve = pr_curve(facts, total_gold)?;
    let p_at = cutoffs
        .iter()
        .map(|&n| precision_at_n(facts, n).map(|p| (n, p)))
        .collect::<Result<_>>()?;
    let report = MetricsReport {
        auc: curve.auc,
        p_at,
        n_predictions: facts.len(),
        n_gold: total_gold,
    };
    Ok((report, curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub before: f64,
    pub after: f64,
    pub delta: f64,
    pub improved: bool,
}

impl MetricDelta {
    fn new(before: f64, after: f64) -> Self {
        Self {
            before,
            after,
            delta: after - before,
            improved: after > before,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub auc: MetricDelta,
    pub p_at: BTreeMap<usize, MetricDelta>,
}

/// Per-metric differences `after - before`. Both reports must come from the
/// same test set and list the same cut-offs.
pub fn compare_reports(before: &MetricsReport, after: &MetricsReport) -> Result<DeltaReport> {
    if before.n_gold != after.n_gold || before.n_predictions != after.n_predictions {
        return Err(Error::Incomparable(format!(
            "test sets differ ({} gold / {} predictions vs {} / {})",
            before.n_gold, before.n_predictions, after.n_gold, after.n_predictions
        )));
    }
    if !before.p_at.keys().eq(after.p_at.keys()) {
        return Err(Error::Incomparable("precision cut-offs differ".into()));
    }
    Ok(DeltaReport {
        auc: MetricDelta::new(before.auc, after.auc),
        p_at: before
            .p_at
            .iter()
            .map(|(&n, &b)| (n, MetricDelta::new(b, after.p_at[&n])))
            .collect(),
    })
}
