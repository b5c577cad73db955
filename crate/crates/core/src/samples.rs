//! Question construction and generation of the QA training set.

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{build_context, write_records, Context};
use crate::model::{Bag, RelationSchema};
use crate::seed::derive_seed;

/// Separator between head entity and relation label in a question.
pub const QUESTION_SEPARATOR: &str = " | ";

/// Default negatives per positive (1:2 answerable to unanswerable).
pub const DEFAULT_NEG_PER_POS: usize = 2;

/// Span designating the "null" sentinel; end is exclusive.
pub const NULL_SPAN: (usize, usize) = (0, 1);

pub fn make_question(head: &str, relation_label: &str) -> Result<String> {
    if head.is_empty() || relation_label.is_empty() {
        return Err(Error::InvalidArgument(
            "question needs a non-empty head and relation label".into(),
        ));
    }
    Ok(format!("{head}{QUESTION_SEPARATOR}{relation_label}"))
}

/// Splits a question back into `(head, relation_label)`.
///
/// Splits on the last separator so that heads containing `" | "` survive.
pub fn split_question(question: &str) -> Option<(&str, &str)> {
    question
        .rsplit_once(QUESTION_SEPARATOR)
        .filter(|(h, r)| !h.is_empty() && !r.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaSample {
    pub bag_id: String,
    pub relation: usize,
    pub question: String,
    pub context: Context,
    /// Answer token span, end exclusive. [`NULL_SPAN`] when unanswerable.
    pub answer_span: (usize, usize),
    pub answerable: bool,
}

impl QaSample {
    /// Start and end token positions of the answer (end inclusive), as
    /// used by the position loss. Both are 0 for unanswerable samples.
    pub fn answer_positions(&self) -> (usize, usize) {
        (self.answer_span.0, self.answer_span.1 - 1)
    }

    pub fn to_record(&self) -> QaSampleRecord {
        QaSampleRecord {
            question: self.question.clone(),
            context_tokens: self.context.tokens().to_vec(),
            answer_start: self.answer_span.0,
            answer_end: self.answer_span.1,
            answerable: self.answerable,
        }
    }
}

/// One line of a QA sample file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaSampleRecord {
    pub question: String,
    pub context_tokens: Vec<String>,
    pub answer_start: usize,
    /// Exclusive.
    pub answer_end: usize,
    pub answerable: bool,
}

impl QaSampleRecord {
    /// Checks the sentinel and the answerable/span agreement.
    pub fn check(&self) -> Result<()> {
        let ctx = Context::new(self.context_tokens.clone(), None)?;
        let span = (self.answer_start, self.answer_end);
        if span.0 >= span.1 || span.1 > ctx.len() {
            return Err(Error::InvalidArgument(format!(
                "answer span {span:?} invalid for {} context tokens",
                ctx.len()
            )));
        }
        if self.answerable == (span == NULL_SPAN) {
            return Err(Error::InvalidArgument(format!(
                "answerable={} disagrees with answer span {span:?}",
                self.answerable
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QaDataset {
    pub samples: Vec<QaSample>,
    /// Bags with gold facts that produced nothing because no tail mention
    /// survived truncation.
    pub skipped_bags: usize,
}

impl QaDataset {
    pub fn answerable_count(&self) -> usize {
        self.samples.iter().filter(|s| s.answerable).count()
    }

    pub fn unanswerable_count(&self) -> usize {
        self.samples.len() - self.answerable_count()
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        write_records(writer, self.samples.iter().map(QaSample::to_record))
    }
}

/// Builds answerable samples for every gold non-NA relation of each bag and
/// `neg_per_pos` unanswerable samples per positive.
///
/// Negatives are drawn without replacement, per bag, from the non-NA
/// relations outside the bag's gold set; when fewer are available all of
/// them are used. Each bag draws from its own RNG stream derived from
/// `seed` and its id, so the output does not depend on bag order or
/// parallel scheduling.
pub fn generate_qa_dataset(
    bags: &[Bag],
    schema: &RelationSchema,
    neg_per_pos: usize,
    window: usize,
    seed: u64,
) -> Result<QaDataset> {
    let mut dataset = QaDataset::default();
    for bag in bags {
        let positives: Vec<usize> = bag.gold_facts(schema).collect();
        if positives.is_empty() {
            continue;
        }
        let context = build_context(bag, window);
        let Some(tail_span) = context.tail_span() else {
            dataset.skipped_bags += 1;
            continue;
        };

        let wrong: Vec<usize> = schema
            .non_na_indices()
            .filter(|r| !bag.true_relations().contains(r))
            .collect();
        let wanted = (neg_per_pos * positives.len()).min(wrong.len());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["qa-negatives", bag.bag_id()]));
        let negatives: Vec<usize> = index::sample(&mut rng, wrong.len(), wanted)
            .into_iter()
            .map(|i| wrong[i])
            .collect();

        let mut push = |relation: usize, answerable: bool| -> Result<()> {
            let label = schema.label(relation).expect("relation index from schema");
            dataset.samples.push(QaSample {
                bag_id: bag.bag_id().to_owned(),
                relation,
                question: make_question(bag.head(), label)?,
                context: context.clone(),
                answer_span: if answerable { tail_span } else { NULL_SPAN },
                answerable,
            });
            Ok(())
        };
        for &r in &positives {
            push(r, true)?;
        }
        for &r in &negatives {
            push(r, false)?;
        }
    }
    if dataset.skipped_bags > 0 {
        log::warn!(
            "{} bag(s) skipped: no tail mention in the truncated context",
            dataset.skipped_bags
        );
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::model::Mention;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn schema() -> RelationSchema {
        RelationSchema::from_labels(&["NA", "contains", "founder", "born_in", "ceo_of"], "NA").unwrap()
    }

    fn bag(id: &str, gold: &[usize]) -> Bag {
        Bag::new(
            id,
            "Jobs",
            "Apple Inc",
            vec![toks("Jobs co-founded Apple Inc in 1976")],
            vec![Mention::new(0, 0, 1)],
            vec![Mention::new(0, 2, 4)],
            gold.iter().copied().collect::<BTreeSet<_>>(),
            &schema(),
        )
        .unwrap()
    }

    #[test]
    fn questions() {
        assert_eq!(make_question("Jobs", "co-founded").unwrap(), "Jobs | co-founded");
        assert_eq!(make_question("Jobs", "located in").unwrap(), "Jobs | located in");
        assert_eq!(
            make_question("Cook county", "contains").unwrap(),
            "Cook county | contains"
        );
        assert!(make_question("", "contains").is_err());
        assert!(make_question("Jobs", "").is_err());
    }

    #[test]
    fn split_question_inverts_make_question() {
        let q = make_question("A | B", "founder").unwrap();
        assert_eq!(split_question(&q), Some(("A | B", "founder")));
        assert_eq!(split_question("no separator"), None);
    }

    #[test]
    fn one_positive_two_negatives() {
        let ds = generate_qa_dataset(&[bag("b", &[2])], &schema(), 2, 40, 1).unwrap();
        assert_eq!(ds.samples.len(), 3);
        assert_eq!(ds.answerable_count(), 1);
        let pos = &ds.samples[0];
        assert!(pos.answerable);
        assert_eq!(pos.question, "Jobs | founder");
        let (s, e) = pos.answer_span;
        assert_eq!(pos.context.tokens()[s..e].join(" "), "Apple Inc");
        for neg in &ds.samples[1..] {
            assert!(!neg.answerable);
            assert_eq!(neg.answer_span, NULL_SPAN);
            assert_eq!(neg.answer_positions(), (0, 0));
            assert!(neg.relation != 0 && neg.relation != 2);
        }
        assert_ne!(ds.samples[1].relation, ds.samples[2].relation);
    }

    #[test]
    fn na_bags_yield_nothing() {
        let ds = generate_qa_dataset(&[bag("b", &[0])], &schema(), 2, 40, 1).unwrap();
        assert!(ds.samples.is_empty());
    }

    #[test]
    fn zero_negatives() {
        let ds = generate_qa_dataset(&[bag("b", &[1, 2])], &schema(), 0, 40, 1).unwrap();
        assert_eq!(ds.samples.len(), 2);
        assert!(ds.samples.iter().all(|s| s.answerable));
    }

    #[test]
    fn negatives_clamped_to_available() {
        // Gold {1,2,3}: only relation 4 remains as a wrong answer.
        let ds = generate_qa_dataset(&[bag("b", &[1, 2, 3])], &schema(), 2, 40, 1).unwrap();
        assert_eq!(ds.answerable_count(), 3);
        assert_eq!(ds.unanswerable_count(), 1);
        assert_eq!(ds.samples[3].relation, 4);
    }

    #[test]
    fn empty_bag_is_skipped() {
        let empty = Bag::new(
            "e",
            "Jobs",
            "Apple",
            vec![],
            vec![],
            vec![],
            BTreeSet::from([1]),
            &schema(),
        )
        .unwrap();
        let ds = generate_qa_dataset(&[empty, bag("b", &[1])], &schema(), 2, 40, 1).unwrap();
        assert_eq!(ds.skipped_bags, 1);
        assert_eq!(ds.samples.len(), 3);
    }

    #[test]
    fn record_check() {
        let ds = generate_qa_dataset(&[bag("b", &[2])], &schema(), 2, 40, 1).unwrap();
        for s in &ds.samples {
            s.to_record().check().unwrap();
        }
        let mut bad = ds.samples[0].to_record();
        bad.answerable = false;
        assert!(bad.check().is_err());
    }
}
