//! Seeded synthetic corpora for tests, benchmarks and demos.
//!
//! Each bag holds one gold relation and one to three sentences mentioning
//! its head and tail among filler tokens. Classifier scores start from the
//! gold one-hot, softened with uniform noise; on exactly
//! `round(flip_rate * n_bags)` bags a wrong relation is pushed above the gold
//! one so the argmax is wrong.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Bag, Mention, RcPrediction, RelationSchema};
use crate::scoring::Fact;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_bags: usize,
    /// Schema size including NA.
    pub n_relations: usize,
    /// Fraction of bags whose classifier argmax is wrong.
    pub flip_rate: f64,
    /// Fraction of bags whose only gold label is NA.
    pub na_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_bags: 500,
            n_relations: 12,
            flip_rate: 0.3,
            na_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub schema: RelationSchema,
    pub bags: Vec<Bag>,
    pub predictions: Vec<RcPrediction>,
    pub facts: Vec<Fact>,
}

impl SyntheticCorpus {
    pub fn prediction_map(&self) -> HashMap<String, RcPrediction> {
        self.predictions.iter().map(|p| (p.bag_id.clone(), p.clone())).collect()
    }
}

pub fn synthetic_schema(n_relations: usize) -> Result<RelationSchema> {
    let labels: Vec<String> = std::iter::once("NA".to_owned())
        .chain((1..n_relations).map(|i| format!("rel_{i}")))
        .collect();
    RelationSchema::from_labels(&labels, "NA")
}

fn filler(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| format!("w{}", rng.random_range(0..500))).collect()
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticCorpus> {
    let schema = synthetic_schema(config.n_relations)?;
    let non_na: Vec<usize> = schema.non_na_indices().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_flip = (config.flip_rate * config.n_bags as f64).round() as usize;
    let mut order: Vec<usize> = (0..config.n_bags).collect();
    order.shuffle(&mut rng);
    let flipped: BTreeSet<usize> = order[..n_flip.min(config.n_bags)].iter().copied().collect();

    let mut bags = Vec::with_capacity(config.n_bags);
    let mut predictions = Vec::with_capacity(config.n_bags);
    let mut facts = Vec::new();
    for i in 0..config.n_bags {
        let bag_id = format!("bag{i:05}");
        let head = format!("Head{i}");
        let tail_tokens = vec!["Tail".to_owned(), format!("{i}")];
        let tail = tail_tokens.join(" ");
        let gold = if rng.random_bool(config.na_fraction) {
            schema.na_index()
        } else {
            non_na[rng.random_range(0..non_na.len())]
        };

        let n_sentences = rng.random_range(1..=3);
        let mut sentences = Vec::with_capacity(n_sentences);
        let mut head_mentions = Vec::new();
        let mut tail_mentions = Vec::new();
        for s in 0..n_sentences {
            let before = rng.random_range(0..50);
            let between = rng.random_range(1..10);
            let after = rng.random_range(0..50);
            let head_first = rng.random_bool(0.7);
            let (first, second) = if head_first {
                (vec![head.clone()], tail_tokens.clone())
            } else {
                (tail_tokens.clone(), vec![head.clone()])
            };
            let mut tokens = filler(&mut rng, before);
            let first_at = Mention::new(s, tokens.len(), tokens.len() + first.len());
            tokens.extend(first);
            tokens.extend(filler(&mut rng, between));
            let second_at = Mention::new(s, tokens.len(), tokens.len() + second.len());
            tokens.extend(second);
            tokens.extend(filler(&mut rng, after));
            let (h, t) = if head_first {
                (first_at, second_at)
            } else {
                (second_at, first_at)
            };
            head_mentions.push(h);
            tail_mentions.push(t);
            sentences.push(tokens);
        }

        let mut scores: Vec<f64> = (0..schema.len()).map(|_| rng.random_range(0.0..0.15)).collect();
        if flipped.contains(&i) {
            let wrong = loop {
                let w = non_na[rng.random_range(0..non_na.len())];
                if w != gold {
                    break w;
                }
            };
            scores[gold] = rng.random_range(0.2..0.45);
            scores[wrong] = (scores[gold] + rng.random_range(0.05..0.4)).min(1.0);
        } else {
            scores[gold] = rng.random_range(0.5..1.0);
        }

        if gold != schema.na_index() {
            facts.push(Fact {
                head: head.clone(),
                relation: schema.label(gold).expect("gold from schema").to_owned(),
                tail: tail.clone(),
            });
        }
        bags.push(Bag::new(
            bag_id.clone(),
            head,
            tail,
            sentences,
            head_mentions,
            tail_mentions,
            BTreeSet::from([gold]),
            &schema,
        )?);
        predictions.push(RcPrediction::new(bag_id, scores, &schema)?);
    }
    Ok(SyntheticCorpus {
        schema,
        bags,
        predictions,
        facts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argmax(v: &[f64]) -> usize {
        (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
    }

    #[test]
    fn flips_exactly_the_requested_share() {
        let corpus = generate(&SynthConfig {
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(corpus.bags.len(), 500);
        assert_eq!(corpus.schema.len(), 12);
        let wrong = corpus
            .bags
            .iter()
            .zip(&corpus.predictions)
            .filter(|(b, p)| !b.true_relations().contains(&argmax(&p.scores)))
            .count();
        assert_eq!(wrong, 150);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n_bags: 20,
            seed: 11,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.bags, b.bags);
        assert_eq!(a.predictions, b.predictions);
        let c = generate(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.predictions, c.predictions);
    }
}
