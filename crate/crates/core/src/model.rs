//! Domain types shared across the pipeline.
//!
//! Relations are referred to by their index into a [`RelationSchema`]
//! everywhere inside the crate; label strings only appear when reading or
//! writing files.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of tokens kept on either side of the entity region.
pub const DEFAULT_WINDOW: usize = 40;

/// Ordered relation labels with one designated "no relation" label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRecord", into = "SchemaRecord")]
pub struct RelationSchema {
    labels: Vec<String>,
    na_index: usize,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

/// On-disk form of a schema: `{"labels": [...], "na_label": "NA"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaRecord {
    pub labels: Vec<String>,
    pub na_label: String,
}

impl RelationSchema {
    pub fn from_labels<S: AsRef<str>>(labels: &[S], na_label: &str) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidSchema(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(labels.len());
        let mut owned = Vec::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            let label = label.as_ref();
            if label.is_empty() {
                return Err(Error::InvalidSchema(format!("label {i} is empty")));
            }
            if lookup.insert(label.to_owned(), i).is_some() {
                return Err(Error::DuplicateLabel(label.to_owned()));
            }
            owned.push(label.to_owned());
        }
        let na_index = *lookup
            .get(na_label)
            .ok_or_else(|| Error::MissingNaLabel(na_label.to_owned()))?;
        Ok(Self {
            labels: owned,
            na_index,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn na_index(&self) -> usize {
        self.na_index
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.lookup.get(label).copied().ok_or_else(|| Error::UnknownLabel {
            label: label.to_owned(),
        })
    }

    /// Indices of every relation except NA, ascending.
    pub fn non_na_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.labels.len()).filter(move |&i| i != self.na_index)
    }

    pub fn non_na_count(&self) -> usize {
        self.labels.len() - 1
    }
}

impl TryFrom<SchemaRecord> for RelationSchema {
    type Error = Error;

    fn try_from(record: SchemaRecord) -> Result<Self> {
        RelationSchema::from_labels(&record.labels, &record.na_label)
    }
}

impl From<RelationSchema> for SchemaRecord {
    fn from(schema: RelationSchema) -> Self {
        let na_label = schema.labels[schema.na_index].clone();
        SchemaRecord {
            labels: schema.labels,
            na_label,
        }
    }
}

/// Token span of an entity mention inside one sentence; `token_end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub sentence_index: usize,
    pub token_start: usize,
    pub token_end: usize,
}

impl Mention {
    pub fn new(sentence_index: usize, token_start: usize, token_end: usize) -> Self {
        Self {
            sentence_index,
            token_start,
            token_end,
        }
    }

    pub fn is_valid_for(&self, sentence_len: usize) -> bool {
        self.token_start < self.token_end && self.token_end <= sentence_len
    }
}

/// An entity pair together with all of its context sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    bag_id: String,
    head: String,
    tail: String,
    sentences: Vec<Vec<String>>,
    head_mentions: Vec<Mention>,
    tail_mentions: Vec<Mention>,
    true_relations: BTreeSet<usize>,
}

impl Bag {
    /// Builds a bag, checking mention bounds and relation indices.
    ///
    /// Every sentence must carry at least one head and one tail mention.
    /// `true_relations` may be empty for unlabeled (inference-time) bags.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bag_id: impl Into<String>,
        head: impl Into<String>,
        tail: impl Into<String>,
        sentences: Vec<Vec<String>>,
        head_mentions: Vec<Mention>,
        tail_mentions: Vec<Mention>,
        true_relations: BTreeSet<usize>,
        schema: &RelationSchema,
    ) -> Result<Self> {
        let bag = Self {
            bag_id: bag_id.into(),
            head: head.into(),
            tail: tail.into(),
            sentences,
            head_mentions,
            tail_mentions,
            true_relations,
        };
        bag.check(schema)?;
        Ok(bag)
    }

    fn check(&self, schema: &RelationSchema) -> Result<()> {
        let fail = |reason: String| Error::InvalidBag {
            bag_id: self.bag_id.clone(),
            reason,
        };
        if self.bag_id.is_empty() {
            return Err(fail("empty bag_id".into()));
        }
        if self.head.is_empty() || self.tail.is_empty() {
            return Err(fail("empty head or tail entity".into()));
        }
        for (role, mentions) in [("head", &self.head_mentions), ("tail", &self.tail_mentions)] {
            for m in mentions {
                let sentence = self.sentences.get(m.sentence_index).ok_or_else(|| {
                    fail(format!(
                        "{role} mention refers to sentence {} of {}",
                        m.sentence_index,
                        self.sentences.len()
                    ))
                })?;
                if !m.is_valid_for(sentence.len()) {
                    return Err(fail(format!(
                        "{role} mention [{}, {}) out of range for sentence {} of length {}",
                        m.token_start,
                        m.token_end,
                        m.sentence_index,
                        sentence.len()
                    )));
                }
            }
        }
        for s in 0..self.sentences.len() {
            if self.first_head_mention(s).is_none() || self.first_tail_mention(s).is_none() {
                return Err(fail(format!("sentence {s} lacks a head or tail mention")));
            }
        }
        if let Some(&r) = self.true_relations.iter().find(|&&r| r >= schema.len()) {
            return Err(fail(format!(
                "relation index {r} outside schema of {} labels",
                schema.len()
            )));
        }
        Ok(())
    }

    pub fn bag_id(&self) -> &str {
        &self.bag_id
    }

    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn tail(&self) -> &str {
        &self.tail
    }

    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn head_mentions(&self) -> &[Mention] {
        &self.head_mentions
    }

    pub fn tail_mentions(&self) -> &[Mention] {
        &self.tail_mentions
    }

    pub fn true_relations(&self) -> &BTreeSet<usize> {
        &self.true_relations
    }

    /// Gold relations excluding NA.
    pub fn gold_facts<'a>(&'a self, schema: &'a RelationSchema) -> impl Iterator<Item = usize> + 'a {
        self.true_relations
            .iter()
            .copied()
            .filter(move |&r| r != schema.na_index())
    }

    /// Mentions in `sentence` for the given role, in file order.
    pub fn mentions_in(&self, mentions: &[Mention], sentence: usize) -> Vec<Mention> {
        mentions
            .iter()
            .copied()
            .filter(|m| m.sentence_index == sentence)
            .collect()
    }

    pub fn first_head_mention(&self, sentence: usize) -> Option<Mention> {
        self.head_mentions
            .iter()
            .copied()
            .find(|m| m.sentence_index == sentence)
    }

    pub fn first_tail_mention(&self, sentence: usize) -> Option<Mention> {
        self.tail_mentions
            .iter()
            .copied()
            .find(|m| m.sentence_index == sentence)
    }
}

/// Per-bag relation scores from an external relation classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcPrediction {
    pub bag_id: String,
    pub scores: Vec<f64>,
}

/// Slack allowed when checking that scores lie in [0, 1]; values inside the
/// slack are clamped, values beyond it are rejected.
pub const SCORE_SLACK: f64 = 1e-9;

impl RcPrediction {
    pub fn new(bag_id: impl Into<String>, scores: Vec<f64>, schema: &RelationSchema) -> Result<Self> {
        let bag_id = bag_id.into();
        let scores = checked_scores(&bag_id, scores, schema)?;
        Ok(Self { bag_id, scores })
    }
}

pub(crate) fn checked_scores(bag_id: &str, mut scores: Vec<f64>, schema: &RelationSchema) -> Result<Vec<f64>> {
    if scores.len() != schema.len() {
        return Err(Error::ScoreLength {
            bag_id: bag_id.to_owned(),
            expected: schema.len(),
            got: scores.len(),
        });
    }
    for (index, s) in scores.iter_mut().enumerate() {
        if !s.is_finite() || *s < -SCORE_SLACK || *s > 1.0 + SCORE_SLACK {
            return Err(Error::ScoreRange {
                bag_id: bag_id.to_owned(),
                index,
                value: *s,
            });
        }
        *s = s.clamp(0.0, 1.0);
    }
    Ok(scores)
}

/// Anything that carries one score per relation for a bag.
pub trait BagScores {
    fn bag_id(&self) -> &str;
    fn scores(&self) -> &[f64];
}

impl BagScores for RcPrediction {
    fn bag_id(&self) -> &str {
        &self.bag_id
    }

    fn scores(&self) -> &[f64] {
        &self.scores
    }
}

/// How candidate relations are picked for QA validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Score every non-NA relation with the QA model and validate the top
    /// `alpha_percent` and bottom `beta_percent` of them.
    QaExtremes { alpha_percent: f64, beta_percent: f64 },
    /// Validate the `k` relations the classifier scored highest.
    RcTopK { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub strategy: Strategy,
    /// Weight of the QA score against the classifier score.
    pub lambda: f64,
    /// Stand-in QA score for relations that were not validated.
    pub c: f64,
    /// Tokens kept before the earlier and after the later entity mention.
    pub window: usize,
}

impl ValidationConfig {
    /// α = 10, β = 20, c = 0.9, λ = 10.
    pub fn qa_extremes_defaults() -> Self {
        Self {
            strategy: Strategy::QaExtremes {
                alpha_percent: 10.0,
                beta_percent: 20.0,
            },
            lambda: 10.0,
            c: 0.9,
            window: DEFAULT_WINDOW,
        }
    }

    /// k = 3, c = 0.9, λ = 10.
    pub fn rc_top_k_defaults() -> Self {
        Self {
            strategy: Strategy::RcTopK { k: 3 },
            lambda: 10.0,
            c: 0.9,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn validate(&self, schema: &RelationSchema) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Config(format!("c must lie in (0, 1), got {}", self.c)));
        }
        match self.strategy {
            Strategy::QaExtremes {
                alpha_percent,
                beta_percent,
            } => {
                if !(alpha_percent >= 0.0 && beta_percent >= 0.0) {
                    return Err(Error::Config("alpha and beta must be non-negative".into()));
                }
                if alpha_percent + beta_percent > 100.0 {
                    return Err(Error::Config(format!(
                        "alpha + beta must not exceed 100, got {}",
                        alpha_percent + beta_percent
                    )));
                }
            }
            Strategy::RcTopK { k } => {
                if k == 0 {
                    return Err(Error::Config("k must be at least 1".into()));
                }
                if k > schema.len() {
                    return Err(Error::Config(format!(
                        "k = {k} exceeds the {} relations in the schema",
                        schema.len()
                    )));
                }
            }
        }
        Ok(())
    }
}
