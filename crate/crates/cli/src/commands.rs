use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context as _};
use qaval_core::eval::MetricsReport;
use qaval_core::ingest::{for_each_record, write_bags, write_records};
use qaval_core::samples::QaSampleRecord;
use qaval_core::scoring::protocol::serve_tcp;
use qaval_core::synth::{generate, SynthConfig};
use qaval_core::{
    collect_fact_predictions, compare_reports, evaluate, generate_qa_dataset, gold_fact_count, parse_bags,
    parse_rc_predictions, validate_dataset, Bag, Fact, QaScorer, RcPrediction, RelationSchema, RemoteScorer,
    SyntheticScorer,
};
use serde_json::json;

use crate::args::{CheckArgs, Cli, Command, CompareArgs, EvalArgs, GenQaArgs, ServeArgs, SynthArgs, ValidateArgs};
use crate::manifest::{RunManifest, ScorerRecord};
use crate::options::{usage, ConfigFile, FactSource, ScorerChoice, ValidateOptions};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenQa(a) => gen_qa(&a),
        Command::Validate(a) => validate(&a),
        Command::Eval(a) => eval(&a),
        Command::Compare(a) => compare(&a),
        Command::Check(a) => check(&a),
        Command::Synth(a) => synth(&a),
        Command::ServeSynthetic(a) => serve_synthetic(&a),
    }
}

/// Writes `text` and a newline to stdout; a reader that hung up is not an
/// error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_schema(path: &Path) -> anyhow::Result<RelationSchema> {
    serde_json::from_reader(open(path)?).with_context(|| format!("invalid schema file {}", path.display()))
}

fn load_bags(path: &Path, schema: &RelationSchema) -> anyhow::Result<Vec<Bag>> {
    parse_bags(open(path)?, schema).with_context(|| format!("invalid bag file {}", path.display()))
}

fn load_predictions(
    path: &Path,
    schema: &RelationSchema,
) -> anyhow::Result<std::collections::HashMap<String, RcPrediction>> {
    parse_rc_predictions(open(path)?, schema).with_context(|| format!("invalid prediction file {}", path.display()))
}

fn load_facts(path: &Path) -> anyhow::Result<Vec<Fact>> {
    let mut facts = Vec::new();
    for_each_record(open(path)?, |_, fact: Fact| {
        facts.push(fact);
        Ok(())
    })
    .with_context(|| format!("invalid fact file {}", path.display()))?;
    Ok(facts)
}

fn gold_facts(bags: &[Bag], schema: &RelationSchema) -> Vec<Fact> {
    bags.iter()
        .flat_map(|bag| {
            bag.gold_facts(schema).map(move |r| Fact {
                head: bag.head().to_owned(),
                relation: schema.label(r).expect("gold relation from schema").to_owned(),
                tail: bag.tail().to_owned(),
            })
        })
        .collect()
}

fn gen_qa(args: &GenQaArgs) -> anyhow::Result<()> {
    let schema = load_schema(&args.schema)?;
    let bags = load_bags(&args.bags, &schema)?;
    let dataset = generate_qa_dataset(&bags, &schema, args.neg_per_pos, args.window, args.seed)?;
    dataset.write(create(&args.out)?)?;

    let mut manifest = RunManifest::new(
        "gen-qa",
        json!({ "neg_per_pos": args.neg_per_pos, "window": args.window, "seed": args.seed }),
    )?;
    manifest
        .input("bags", &args.bags)?
        .input("schema", &args.schema)?
        .output("qa_samples", &args.out)?;
    manifest.write_beside(&args.out)?;
    eprintln!(
        "wrote {} samples ({} answerable, {} unanswerable, {} bags skipped) to {}",
        dataset.samples.len(),
        dataset.answerable_count(),
        dataset.unanswerable_count(),
        dataset.skipped_bags,
        args.out.display()
    );
    Ok(())
}

fn build_scorer(
    choice: &ScorerChoice,
    bags: &[Bag],
    schema: &RelationSchema,
    manifest: &mut RunManifest,
) -> anyhow::Result<Arc<dyn QaScorer>> {
    Ok(match choice {
        ScorerChoice::Synthetic { facts, noise, seed } => {
            let facts = match facts {
                FactSource::Gold => gold_facts(bags, schema),
                FactSource::File(path) => {
                    manifest.input("facts", path)?;
                    load_facts(path)?
                }
            };
            Arc::new(SyntheticScorer::new(schema.clone(), facts, *noise, *seed)?)
        }
        ScorerChoice::Remote { endpoint } => Arc::new(RemoteScorer::connect(endpoint)?),
    })
}

fn validate(args: &ValidateArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let schema = load_schema(&args.schema)?;
    let options = ValidateOptions::resolve(args, file, &schema)?;
    let bags = load_bags(&args.bags, &schema)?;
    let predictions = load_predictions(&args.rc_scores, &schema)?;
    let known: HashSet<&str> = bags.iter().map(Bag::bag_id).collect();
    let extra = predictions.keys().filter(|id| !known.contains(id.as_str())).count();
    if extra > 0 {
        log::warn!("{extra} predictions have no matching bag and are ignored");
    }

    let scorer_spec = args.scorer.clone().unwrap_or_else(|| match &options.scorer {
        ScorerChoice::Remote { endpoint } => format!("remote:{endpoint}"),
        ScorerChoice::Synthetic { .. } => "synthetic (from config file)".into(),
    });
    let mut manifest = RunManifest::new(
        "validate",
        json!({ "validation": options.config, "parallelism": options.parallelism }),
    )?;
    manifest
        .input("bags", &args.bags)?
        .input("schema", &args.schema)?
        .input("rc_scores", &args.rc_scores)?;
    if let Some(path) = &args.config {
        manifest.input("config", path)?;
    }
    let scorer = build_scorer(&options.scorer, &bags, &schema, &mut manifest)?;
    if !scorer.is_deterministic() {
        log::warn!(
            "scorer {} may not reproduce identical scores across runs",
            scorer.describe()
        );
    }
    manifest.scorer = Some(ScorerRecord {
        spec: scorer_spec,
        description: scorer.describe(),
        deterministic: scorer.is_deterministic(),
    });

    let updated = validate_dataset(
        &bags,
        &predictions,
        scorer.as_ref(),
        &options.config,
        &schema,
        options.parallelism,
    )?;
    write_records(create(&args.out)?, &updated)?;
    manifest.output("predictions", &args.out)?;
    manifest.write_beside(&args.out)?;
    eprintln!("wrote {} updated predictions to {}", updated.len(), args.out.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let schema = load_schema(&args.schema)?;
    let bags = load_bags(&args.bags, &schema)?;
    let mut by_id = load_predictions(&args.pred, &schema)?;
    let mut ordered = Vec::with_capacity(bags.len());
    for bag in &bags {
        match by_id.remove(bag.bag_id()) {
            Some(pred) => ordered.push(pred),
            None => bail!("prediction file has no entry for bag `{}`", bag.bag_id()),
        }
    }
    if let Some(id) = by_id.keys().min() {
        bail!(
            "prediction file has {} entries for unknown bags (first: `{id}`)",
            by_id.len()
        );
    }

    let facts = collect_fact_predictions(&ordered, &bags, &schema)?;
    let (report, curve) = evaluate(&facts, gold_fact_count(&bags, &schema), &args.pn)?;
    if let Some(path) = &args.pr_out {
        curve.write_columns(create(path)?)?;
        let mut manifest = RunManifest::new("eval", json!({ "pn": args.pn }))?;
        manifest
            .input("pred", &args.pred)?
            .input("bags", &args.bags)?
            .input("schema", &args.schema)?
            .output("pr_curve", path)?;
        manifest.write_beside(path)?;
    }
    let summary: Vec<String> = std::iter::once(format!("AUC {:.2}", 100.0 * report.auc))
        .chain(report.p_at.iter().map(|(n, p)| format!("P@{n} {:.1}", 100.0 * p)))
        .collect();
    eprintln!(
        "{} ({} predictions, {} gold facts)",
        summary.join("  "),
        report.n_predictions,
        report.n_gold
    );
    emit(&serde_json::to_string(&report)?)
}

fn load_report(path: &Path) -> anyhow::Result<MetricsReport> {
    serde_json::from_reader(open(path)?).with_context(|| format!("invalid metrics report {}", path.display()))
}

fn compare(args: &CompareArgs) -> anyhow::Result<()> {
    let before = load_report(&args.before)?;
    let after = load_report(&args.after)?;
    let delta = compare_reports(&before, &after)?;
    emit(&serde_json::to_string_pretty(&delta)?)
}

fn count_records<T: serde::de::DeserializeOwned>(
    path: &Path,
    mut check: impl FnMut(&T) -> qaval_core::Result<()>,
) -> anyhow::Result<usize> {
    let mut n = 0;
    for_each_record(open(path)?, |_, record: T| {
        check(&record)?;
        n += 1;
        Ok(())
    })
    .with_context(|| format!("{} failed the check", path.display()))?;
    Ok(n)
}

fn check(args: &CheckArgs) -> anyhow::Result<()> {
    let needs_schema = args.bags.is_some() || args.rc_scores.is_some();
    if args.schema.is_none() && needs_schema {
        return Err(usage("--schema is required to check bag and prediction files"));
    }
    let given = [
        &args.schema,
        &args.bags,
        &args.rc_scores,
        &args.qa_samples,
        &args.facts,
        &args.metrics,
    ];
    if given.iter().all(|p| p.is_none()) {
        return Err(usage("nothing to check; pass at least one file"));
    }
    let schema = args.schema.as_deref().map(load_schema).transpose()?;
    let mut out = Vec::new();
    if let (Some(schema), Some(path)) = (&schema, &args.schema) {
        writeln!(
            out,
            "ok schema {}: {} labels, NA = {}",
            path.display(),
            schema.len(),
            schema.labels()[schema.na_index()]
        )?;
    }
    if let (Some(schema), Some(path)) = (&schema, &args.bags) {
        writeln!(
            out,
            "ok bags {}: {} records",
            path.display(),
            load_bags(path, schema)?.len()
        )?;
    }
    if let (Some(schema), Some(path)) = (&schema, &args.rc_scores) {
        writeln!(
            out,
            "ok predictions {}: {} records",
            path.display(),
            load_predictions(path, schema)?.len()
        )?;
    }
    if let Some(path) = &args.qa_samples {
        let n = count_records(path, QaSampleRecord::check)?;
        writeln!(out, "ok qa samples {}: {n} records", path.display())?;
    }
    if let Some(path) = &args.facts {
        let n = count_records(path, |fact: &Fact| match &schema {
            Some(schema) => schema.index_of(&fact.relation).map(|_| ()),
            None => Ok(()),
        })?;
        writeln!(out, "ok facts {}: {n} records", path.display())?;
    }
    if let Some(path) = &args.metrics {
        load_report(path)?;
        writeln!(out, "ok metrics {}", path.display())?;
    }
    emit(String::from_utf8_lossy(&out).trim_end())
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let config = SynthConfig {
        n_bags: args.n_bags,
        n_relations: args.n_relations,
        flip_rate: args.flip_rate,
        na_fraction: args.na_fraction,
        seed: args.seed,
    };
    if !(0.0..=1.0).contains(&config.flip_rate) || !(0.0..=1.0).contains(&config.na_fraction) {
        return Err(usage("--flip-rate and --na-fraction must lie in [0, 1]"));
    }
    if config.n_relations < 3 {
        return Err(usage("--n-relations must be at least 3 (NA plus two relations)"));
    }
    let corpus = generate(&config)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;

    let schema_path = dir.join("schema.json");
    let bags_path = dir.join("bags.jsonl");
    let rc_path = dir.join("rc_scores.jsonl");
    let facts_path = dir.join("facts.jsonl");
    let mut schema_file = create(&schema_path)?;
    serde_json::to_writer_pretty(&mut schema_file, &corpus.schema)?;
    writeln!(schema_file)?;
    schema_file.flush()?;
    write_bags(create(&bags_path)?, &corpus.bags, &corpus.schema)?;
    write_records(create(&rc_path)?, &corpus.predictions)?;
    write_records(create(&facts_path)?, &corpus.facts)?;

    let mut manifest = RunManifest::new(
        "synth",
        json!({
            "n_bags": config.n_bags,
            "n_relations": config.n_relations,
            "flip_rate": config.flip_rate,
            "na_fraction": config.na_fraction,
            "seed": config.seed,
        }),
    )?;
    manifest
        .output("schema", &schema_path)?
        .output("bags", &bags_path)?
        .output("rc_scores", &rc_path)?
        .output("facts", &facts_path)?;
    manifest.write_to(&dir.join("manifest.json"))?;
    eprintln!("wrote {} bags to {}", corpus.bags.len(), dir.display());
    Ok(())
}

fn serve_synthetic(args: &ServeArgs) -> anyhow::Result<()> {
    let schema = load_schema(&args.schema)?;
    let facts = match (&args.facts, &args.bags) {
        (Some(path), _) => load_facts(path)?,
        (None, Some(path)) => gold_facts(&load_bags(path, &schema)?, &schema),
        (None, None) => return Err(usage("pass --facts or --bags")),
    };
    let scorer = SyntheticScorer::new(schema, facts, args.noise, args.seed).map_err(|e| usage(e.to_string()))?;
    let listener = TcpListener::bind(&args.listen).with_context(|| format!("cannot listen on {}", args.listen))?;
    let addr = listener.local_addr()?;
    emit(&format!("listening on {addr}"))?;
    serve_tcp(listener, Arc::new(scorer))?;
    Ok(())
}
