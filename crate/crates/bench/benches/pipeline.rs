use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use qaval_core::synth::{generate, SynthConfig};
use qaval_core::{
    collect_fact_predictions, confidence_score, gold_fact_count, pr_curve, update_unvalidated, update_validated,
    validate_dataset, SyntheticScorer, ValidationConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn bench_confidence(c: &mut Criterion) {
    let mut group = c.benchmark_group("confidence_score");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [64, 512, 4096] {
        let ps = distribution(&mut rng, n);
        let pe = distribution(&mut rng, n);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| confidence_score(black_box(&ps), black_box(&pe)).unwrap())
        });
    }
    group.finish();
}

fn bench_fusion(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<(f64, f64)> = (0..1024).map(|_| (rng.random(), rng.random())).collect();
    let mut group = c.benchmark_group("fusion");
    group.throughput(Throughput::Elements(pairs.len() as u64));
    group.bench_function("validated", |b| {
        b.iter(|| pairs.iter().map(|&(q, p)| update_validated(q, p, 10.0)).sum::<f64>())
    });
    group.bench_function("unvalidated", |b| {
        b.iter(|| {
            pairs
                .iter()
                .map(|&(_, p)| update_unvalidated(p, 0.9, 10.0))
                .sum::<f64>()
        })
    });
    group.finish();
}

fn bench_validate_dataset(c: &mut Criterion) {
    let corpus = generate(&SynthConfig {
        n_bags: 500,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let scorer = SyntheticScorer::new(corpus.schema.clone(), corpus.facts.clone(), 0.1, 3).unwrap();
    let preds = corpus.prediction_map();
    let mut group = c.benchmark_group("validate_dataset");
    group.sample_size(10);
    group.throughput(Throughput::Elements(corpus.bags.len() as u64));
    for (name, config) in [
        ("strategy_I", ValidationConfig::qa_extremes_defaults()),
        ("strategy_II", ValidationConfig::rc_top_k_defaults()),
    ] {
        for threads in [1, 4] {
            group.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &threads| {
                b.iter(|| validate_dataset(&corpus.bags, &preds, &scorer, &config, &corpus.schema, threads).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_pr_curve(c: &mut Criterion) {
    let corpus = generate(&SynthConfig {
        n_bags: 5000,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let gold = gold_fact_count(&corpus.bags, &corpus.schema);
    let facts = collect_fact_predictions(&corpus.predictions, &corpus.bags, &corpus.schema).unwrap();
    let mut group = c.benchmark_group("evaluation");
    group.throughput(Throughput::Elements(facts.len() as u64));
    group.bench_function("collect_fact_predictions", |b| {
        b.iter(|| collect_fact_predictions(&corpus.predictions, &corpus.bags, &corpus.schema).unwrap())
    });
    group.bench_function("pr_curve", |b| b.iter(|| pr_curve(black_box(&facts), gold).unwrap()));
    group.finish();
}

criterion_group!(
    benches,
    bench_confidence,
    bench_fusion,
    bench_validate_dataset,
    bench_pr_curve
);
criterion_main!(benches);
