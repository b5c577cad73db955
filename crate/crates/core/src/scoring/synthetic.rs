use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Context;
use crate::model::RelationSchema;
use crate::samples::split_question;
use crate::seed::derive_seed;

use super::{QaScore, QaScorer};

/// A known `(head, relation, tail)` triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fact {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

/// Oracle scorer backed by a fact table.
///
/// A question `head | relation` is answerable when the fact table holds the
/// triple for the context's tail entity. Answerable questions put
/// `1 - noise * u` of the answerable and position mass on the tail span;
/// the rest concentrate on the null sentinel the same way. `u` is a seeded
/// draw in `[0, 1)` keyed by the question and context, so scores are
/// reproducible across runs, threads and processes.
///
/// The tail is taken from the context's tail span when present. Contexts
/// received without one (e.g. over the wire) are searched for the first
/// occurrence of a known tail for that head and relation.
#[derive(Debug, Clone)]
pub struct SyntheticScorer {
    schema: RelationSchema,
    tails: HashMap<(String, usize), Vec<Vec<String>>>,
    noise: f64,
    seed: u64,
}

impl SyntheticScorer {
    pub fn new(schema: RelationSchema, facts: impl IntoIterator<Item = Fact>, noise: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::Config(format!(
                "synthetic noise must lie in [0, 1), got {noise}"
            )));
        }
        let mut tails: HashMap<(String, usize), Vec<Vec<String>>> = HashMap::new();
        for fact in facts {
            let relation = schema.index_of(&fact.relation)?;
            let tail_tokens: Vec<String> = fact.tail.split_whitespace().map(str::to_owned).collect();
            let entry = tails.entry((fact.head, relation)).or_default();
            if !entry.contains(&tail_tokens) {
                entry.push(tail_tokens);
            }
        }
        Ok(Self {
            schema,
            tails,
            noise,
            seed,
        })
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Span (end exclusive) of the answering tail, if the question is a fact.
    fn answer_span(&self, question: &str, context: &Context) -> Option<(usize, usize)> {
        let (head, label) = split_question(question)?;
        let relation = self.schema.index_of(label).ok()?;
        let known = self.tails.get(&(head.to_owned(), relation))?;
        if let Some(span) = context.tail_span() {
            let tail = context.tail_tokens()?;
            return known.iter().any(|t| t.as_slice() == tail).then_some(span);
        }
        let tokens = &context.tokens()[1..];
        known
            .iter()
            .filter(|t| !t.is_empty())
            .filter_map(|t| {
                tokens
                    .windows(t.len())
                    .position(|w| w == t.as_slice())
                    .map(|p| (p + 1, p + 1 + t.len()))
            })
            .min()
    }
}

/// Distribution with `mass` at `peak` and the remainder spread evenly.
fn peaked(len: usize, peak: usize, mass: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - mass) / (len - 1) as f64;
    let mut v = vec![rest; len];
    v[peak] = mass;
    v
}

impl QaScorer for SyntheticScorer {
    fn score(&self, question: &str, context: &Context) -> Result<QaScore> {
        let joined = context.tokens().join("\u{1f}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &["synthetic-scorer", question, &joined]));
        let u: f64 = rng.random();
        let u_pos: f64 = rng.random();
        let n = context.len();
        let score = match self.answer_span(question, context) {
            Some((start, end)) => {
                let mass = 1.0 - self.noise * u_pos;
                QaScore {
                    p_ans: 1.0 - self.noise * u,
                    p_start: peaked(n, start, mass),
                    p_end: peaked(n, end - 1, mass),
                }
            }
            None => {
                let mass = 1.0 - self.noise * u_pos;
                QaScore {
                    p_ans: self.noise * u,
                    p_start: peaked(n, 0, mass),
                    p_end: peaked(n, 0, mass),
                }
            }
        };
        score.check_for(context)?;
        Ok(score)
    }

    fn describe(&self) -> String {
        format!(
            "synthetic(noise={}, seed={}, facts={})",
            self.noise,
            self.seed,
            self.tails.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> RelationSchema {
        RelationSchema::from_labels(&["NA", "founder", "born_in"], "NA").unwrap()
    }

    fn facts() -> Vec<Fact> {
        vec![Fact {
            head: "Jobs".into(),
            relation: "founder".into(),
            tail: "Apple Inc".into(),
        }]
    }

    fn ctx(with_span: bool) -> Context {
        let tokens = ["null", "Jobs", "started", "Apple", "Inc", "."]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Context::new(tokens, with_span.then_some((3, 5))).unwrap()
    }

    #[test]
    fn noiseless_true_fact() {
        let s = SyntheticScorer::new(schema(), facts(), 0.0, 1).unwrap();
        let score = s.score("Jobs | founder", &ctx(true)).unwrap();
        assert_eq!(score.p_ans, 1.0);
        assert_eq!(score.p_start[3], 1.0);
        assert_eq!(score.p_end[4], 1.0);
        assert_eq!(score.confidence(), 1.0);
        assert_eq!(score.validation_score(), 1.0);
    }

    #[test]
    fn noiseless_wrong_relation() {
        let s = SyntheticScorer::new(schema(), facts(), 0.0, 1).unwrap();
        let score = s.score("Jobs | born_in", &ctx(true)).unwrap();
        assert_eq!(score.p_ans, 0.0);
        assert_eq!(score.confidence(), 0.0);
        assert_eq!(score.validation_score(), 0.0);
    }

    #[test]
    fn finds_tail_without_span() {
        let s = SyntheticScorer::new(schema(), facts(), 0.0, 1).unwrap();
        let with = s.score("Jobs | founder", &ctx(true)).unwrap();
        let without = s.score("Jobs | founder", &ctx(false)).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn noisy_scores_are_reproducible_and_bounded() {
        let s = SyntheticScorer::new(schema(), facts(), 0.1, 9).unwrap();
        let a = s.score("Jobs | founder", &ctx(true)).unwrap();
        let b = s.score("Jobs | founder", &ctx(true)).unwrap();
        assert_eq!(a, b);
        assert!(a.p_ans > 0.9 && a.p_ans <= 1.0);
        let wrong = s.score("Jobs | born_in", &ctx(true)).unwrap();
        assert!(wrong.p_ans < 0.1);
        assert!(a.validation_score() > wrong.validation_score());
    }

    #[test]
    fn rejects_bad_noise_and_labels() {
        assert!(SyntheticScorer::new(schema(), facts(), 1.0, 1).is_err());
        let bad = vec![Fact {
            head: "a".into(),
            relation: "nope".into(),
            tail: "b".into(),
        }];
        assert!(SyntheticScorer::new(schema(), bad, 0.0, 1).is_err());
    }

    #[test]
    fn sentinel_only_context() {
        let s = SyntheticScorer::new(schema(), facts(), 0.1, 1).unwrap();
        let ctx = Context::new(vec!["null".into()], None).unwrap();
        let score = s.score("Jobs | founder", &ctx).unwrap();
        assert_eq!(score.p_start, vec![1.0]);
        assert_eq!(score.confidence(), 0.0);
    }
}
