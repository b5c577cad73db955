//! Reading bag and prediction files, and turning bags into QA contexts.
//!
//! Both input formats are JSON Lines: one object per line, blank lines
//! ignored. Errors carry the 1-based line number of the offending record.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{checked_scores, Bag, Mention, RcPrediction, RelationSchema};

/// Sentinel token placed at position 0 of every context; unanswerable
/// questions point at it.
pub const NULL_TOKEN: &str = "null";

/// One line of a bag file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BagRecord {
    pub bag_id: String,
    pub head: String,
    pub tail: String,
    #[serde(default)]
    pub relations: Vec<String>,
    pub sentences: Vec<Vec<String>>,
    pub head_mentions: Vec<[usize; 3]>,
    pub tail_mentions: Vec<[usize; 3]>,
}

impl BagRecord {
    pub fn into_bag(self, schema: &RelationSchema) -> Result<Bag> {
        let relations = self
            .relations
            .iter()
            .map(|l| schema.index_of(l))
            .collect::<Result<BTreeSet<_>>>()?;
        let mentions =
            |raw: Vec<[usize; 3]>| -> Vec<Mention> { raw.into_iter().map(|[s, a, b]| Mention::new(s, a, b)).collect() };
        Bag::new(
            self.bag_id,
            self.head,
            self.tail,
            self.sentences,
            mentions(self.head_mentions),
            mentions(self.tail_mentions),
            relations,
            schema,
        )
    }

    pub fn from_bag(bag: &Bag, schema: &RelationSchema) -> Self {
        let raw = |ms: &[Mention]| -> Vec<[usize; 3]> {
            ms.iter()
                .map(|m| [m.sentence_index, m.token_start, m.token_end])
                .collect()
        };
        Self {
            bag_id: bag.bag_id().to_owned(),
            head: bag.head().to_owned(),
            tail: bag.tail().to_owned(),
            relations: bag
                .true_relations()
                .iter()
                .filter_map(|&r| schema.label(r).map(str::to_owned))
                .collect(),
            sentences: bag.sentences().to_vec(),
            head_mentions: raw(bag.head_mentions()),
            tail_mentions: raw(bag.tail_mentions()),
        }
    }
}

/// Calls `f` with every non-blank line parsed as `T`, together with its
/// 1-based line number.
pub fn for_each_record<T, R, F>(reader: R, mut f: F) -> Result<()>
where
    T: DeserializeOwned,
    R: BufRead,
    F: FnMut(usize, T) -> Result<()>,
{
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::from(e).at_line(line_no))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(trimmed).map_err(|e| Error::from(e).at_line(line_no))?;
        f(line_no, record).map_err(|e| match e {
            e @ Error::Line { .. } => e,
            e => e.at_line(line_no),
        })?;
    }
    Ok(())
}

pub fn write_records<T, W, I>(mut writer: W, records: I) -> Result<()>
where
    T: Serialize,
    W: Write,
    I: IntoIterator<Item = T>,
{
    for record in records {
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_bags<R: BufRead>(reader: R, schema: &RelationSchema) -> Result<Vec<Bag>> {
    let mut bags = Vec::new();
    for_each_record(reader, |_, record: BagRecord| {
        bags.push(record.into_bag(schema)?);
        Ok(())
    })?;
    Ok(bags)
}

pub fn write_bags<W: Write>(writer: W, bags: &[Bag], schema: &RelationSchema) -> Result<()> {
    write_records(writer, bags.iter().map(|b| BagRecord::from_bag(b, schema)))
}

#[derive(Debug, Deserialize)]
struct PredictionRecord {
    bag_id: String,
    scores: Vec<f64>,
}

/// Parses a prediction file keyed by bag id.
///
/// Any record with `bag_id` and `scores` is accepted, so updated-prediction
/// files (which add a `validated` column) can be read back too.
pub fn parse_rc_predictions<R: BufRead>(reader: R, schema: &RelationSchema) -> Result<HashMap<String, RcPrediction>> {
    let mut out = HashMap::new();
    for_each_record(reader, |_, record: PredictionRecord| {
        let scores = checked_scores(&record.bag_id, record.scores, schema)?;
        if out.contains_key(&record.bag_id) {
            return Err(Error::DuplicateBag(record.bag_id));
        }
        out.insert(
            record.bag_id.clone(),
            RcPrediction {
                bag_id: record.bag_id,
                scores,
            },
        );
        Ok(())
    })?;
    Ok(out)
}

/// Token range kept for one sentence: `window` tokens before the earlier
/// mention through `window` tokens after the later one.
pub fn truncation_range(sentence_len: usize, head: Mention, tail: Mention, window: usize) -> Range<usize> {
    let first_start = head.token_start.min(tail.token_start);
    let last_end = head.token_end.max(tail.token_end);
    first_start.saturating_sub(window)..last_end.saturating_add(window).min(sentence_len)
}

pub fn truncate_sentence(sentence: &[String], head: Mention, tail: Mention, window: usize) -> Vec<String> {
    sentence[truncation_range(sentence.len(), head, tail, window)].to_vec()
}

/// Concatenated, truncated context of a bag with [`NULL_TOKEN`] at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    tokens: Vec<String>,
    tail_span: Option<(usize, usize)>,
}

impl Context {
    /// Builds a context from raw tokens, which must already start with the
    /// sentinel.
    pub fn new(tokens: Vec<String>, tail_span: Option<(usize, usize)>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(NULL_TOKEN) {
            return Err(Error::InvalidArgument(format!(
                "context must start with `{NULL_TOKEN}`"
            )));
        }
        if let Some((start, end)) = tail_span {
            if !(1 <= start && start < end && end <= tokens.len()) {
                return Err(Error::InvalidArgument(format!(
                    "tail span ({start}, {end}) invalid for context of {} tokens",
                    tokens.len()
                )));
            }
        }
        Ok(Self { tokens, tail_span })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tail_span(&self) -> Option<(usize, usize)> {
        self.tail_span
    }

    pub fn tail_tokens(&self) -> Option<&[String]> {
        self.tail_span.map(|(s, e)| &self.tokens[s..e])
    }
}

pub fn build_context(bag: &Bag, window: usize) -> Context {
    let mut tokens = vec![NULL_TOKEN.to_owned()];
    let mut tail_span = None;
    for (s, sentence) in bag.sentences().iter().enumerate() {
        let (Some(head), Some(tail)) = (bag.first_head_mention(s), bag.first_tail_mention(s)) else {
            continue;
        };
        let range = truncation_range(sentence.len(), head, tail, window);
        let offset = tokens.len();
        if tail_span.is_none() {
            tail_span = bag
                .mentions_in(bag.tail_mentions(), s)
                .into_iter()
                .find(|m| m.token_start >= range.start && m.token_end <= range.end)
                .map(|m| (m.token_start - range.start + offset, m.token_end - range.start + offset));
        }
        tokens.extend_from_slice(&sentence[range]);
    }
    Context { tokens, tail_span }
}
