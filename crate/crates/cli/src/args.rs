use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "qaval",
    version,
    about = "Validate relation-classifier scores with a QA model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build QA training samples (questions, contexts, answer spans) from bags.
    GenQa(GenQaArgs),
    /// Rescore classifier predictions with QA validation.
    Validate(ValidateArgs),
    /// Score predictions against gold bags: AUC, P@N and the PR curve.
    Eval(EvalArgs),
    /// Compare two metrics reports produced by `eval`.
    Compare(CompareArgs),
    /// Check input and output files against their formats.
    Check(CheckArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Serve a synthetic scorer over the wire protocol.
    ServeSynthetic(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenQaArgs {
    #[arg(long)]
    pub bags: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Unanswerable samples per answerable one.
    #[arg(long, default_value_t = qaval_core::samples::DEFAULT_NEG_PER_POS)]
    pub neg_per_pos: usize,
    /// Tokens kept before the earlier and after the later mention.
    #[arg(long, default_value_t = qaval_core::model::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
pub enum StrategyArg {
    /// QA-score every relation and validate the extremes.
    #[value(name = "I")]
    #[serde(rename = "I")]
    One,
    /// Validate the classifier's top-k relations.
    #[value(name = "II")]
    #[serde(rename = "II")]
    Two,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub bags: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub rc_scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `synthetic:gold|<facts.jsonl>[,noise=X][,seed=N]` or `remote:<host:port>`.
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Strategy I: percent of QA-ranked relations validated from the top [default: 10].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Strategy I: percent validated from the bottom [default: 20].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Strategy II: number of top classifier relations validated [default: 3].
    #[arg(long)]
    pub k: Option<usize>,
    /// Weight of the QA score [default: 10].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Stand-in QA score for unvalidated relations [default: 0.9].
    #[arg(long)]
    pub c: Option<f64>,
    /// Context window in tokens [default: 40].
    #[arg(long)]
    pub window: Option<usize>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn positive_cutoff(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("cut-offs must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction file (classifier or validated scores).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub bags: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Comma-separated precision cut-offs.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300", value_parser = positive_cutoff)]
    pub pn: Vec<usize>,
    /// Where to write the PR curve (`recall<TAB>precision` per line).
    #[arg(long)]
    pub pr_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub before: PathBuf,
    #[arg(long)]
    pub after: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Required to check bag and prediction files.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub bags: Option<PathBuf>,
    /// Classifier or validated prediction file.
    #[arg(long, alias = "pred")]
    pub rc_scores: Option<PathBuf>,
    #[arg(long)]
    pub qa_samples: Option<PathBuf>,
    #[arg(long)]
    pub facts: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving schema.json, bags.jsonl, rc_scores.jsonl and facts.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub n_bags: usize,
    /// Schema size including NA.
    #[arg(long, default_value_t = 12)]
    pub n_relations: usize,
    #[arg(long, default_value_t = 0.3)]
    pub flip_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub na_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub listen: String,
    #[arg(long)]
    pub schema: PathBuf,
    /// Fact file the scorer treats as true.
    #[arg(long, conflicts_with = "bags", required_unless_present = "bags")]
    pub facts: Option<PathBuf>,
    /// Take the true facts from the gold relations of these bags.
    #[arg(long)]
    pub bags: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
