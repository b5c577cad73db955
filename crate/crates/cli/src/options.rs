use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use qaval_core::{RelationSchema, Strategy, ValidationConfig};
use serde::Deserialize;

use crate::args::{StrategyArg, ValidateArgs};

/// An error in how the tool was invoked; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Contents of a `--config` file for `validate`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scorer: Option<String>,
    pub strategy: Option<StrategyArg>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub window: Option<usize>,
    pub parallelism: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("invalid config file {}: {e}", path.display())))
    }
}

/// Everything `validate` needs once flags and config file are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub scorer: ScorerChoice,
    pub config: ValidationConfig,
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl ValidateOptions {
    /// Flags win over the config file; unset values fall back to the
    /// defaults of the chosen strategy.
    pub fn resolve(args: &ValidateArgs, file: ConfigFile, schema: &RelationSchema) -> anyhow::Result<Self> {
        let scorer = args
            .scorer
            .clone()
            .or(file.scorer)
            .ok_or_else(|| usage("--scorer is required (flag or config file)"))?;
        let strategy = args
            .strategy
            .or(file.strategy)
            .ok_or_else(|| usage("--strategy is required (I or II)"))?;
        let alpha = args.alpha.or(file.alpha);
        let beta = args.beta.or(file.beta);
        let k = args.k.or(file.k);

        let mut config = match strategy {
            StrategyArg::One => {
                if k.is_some() {
                    return Err(usage("--k applies to strategy II only"));
                }
                let mut config = ValidationConfig::qa_extremes_defaults();
                if let Strategy::QaExtremes {
                    alpha_percent,
                    beta_percent,
                } = &mut config.strategy
                {
                    *alpha_percent = alpha.unwrap_or(*alpha_percent);
                    *beta_percent = beta.unwrap_or(*beta_percent);
                }
                config
            }
            StrategyArg::Two => {
                if alpha.is_some() || beta.is_some() {
                    return Err(usage("--alpha and --beta apply to strategy I only"));
                }
                let mut config = ValidationConfig::rc_top_k_defaults();
                if let (Strategy::RcTopK { k: slot }, Some(k)) = (&mut config.strategy, k) {
                    *slot = k;
                }
                config
            }
        };
        config.lambda = args.lambda.or(file.lambda).unwrap_or(config.lambda);
        config.c = args.c.or(file.c).unwrap_or(config.c);
        config.window = args.window.or(file.window).unwrap_or(config.window);
        config.validate(schema).map_err(|e| usage(e.to_string()))?;

        let parallelism = args
            .parallelism
            .or(file.parallelism)
            .unwrap_or_else(default_parallelism);
        if parallelism == 0 {
            return Err(usage("--parallelism must be at least 1"));
        }
        Ok(Self {
            scorer: ScorerChoice::parse(&scorer)?,
            config,
            parallelism,
        })
    }
}

/// Where a synthetic scorer gets its true facts.
#[derive(Debug, Clone, PartialEq)]
pub enum FactSource {
    /// The gold relations of the bags being validated.
    Gold,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerChoice {
    Synthetic { facts: FactSource, noise: f64, seed: u64 },
    Remote { endpoint: String },
}

impl ScorerChoice {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        if let Some(endpoint) = text.strip_prefix("remote:") {
            if endpoint.is_empty() {
                return Err(usage("remote scorer needs an endpoint, e.g. remote:127.0.0.1:7878"));
            }
            return Ok(Self::Remote {
                endpoint: endpoint.to_owned(),
            });
        }
        let Some(rest) = text.strip_prefix("synthetic:") else {
            return Err(usage(format!(
                "unknown scorer `{text}`; expected synthetic:<gold|facts.jsonl>[,noise=X][,seed=N] or remote:<host:port>"
            )));
        };
        let mut parts = rest.split(',');
        let facts = match parts.next().unwrap_or("") {
            "" => return Err(usage("synthetic scorer needs `gold` or a fact file")),
            "gold" => FactSource::Gold,
            path => FactSource::File(PathBuf::from(path)),
        };
        let (mut noise, mut seed) = (0.0, 0);
        for option in parts {
            match option.split_once('=') {
                Some(("noise", v)) => {
                    noise = v.parse().map_err(|_| usage(format!("invalid noise `{v}`")))?;
                }
                Some(("seed", v)) => {
                    seed = v.parse().map_err(|_| usage(format!("invalid seed `{v}`")))?;
                }
                _ => return Err(usage(format!("unknown synthetic scorer option `{option}`"))),
            }
        }
        if !(0.0..1.0).contains(&noise) {
            return Err(usage(format!("noise must lie in [0, 1), got {noise}")));
        }
        Ok(Self::Synthetic { facts, noise, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(strategy: Option<StrategyArg>) -> ValidateArgs {
        ValidateArgs {
            bags: "b".into(),
            schema: "s".into(),
            rc_scores: "r".into(),
            out: "o".into(),
            scorer: Some("synthetic:gold".into()),
            strategy,
            alpha: None,
            beta: None,
            k: None,
            lambda: None,
            c: None,
            window: None,
            parallelism: Some(2),
            config: None,
        }
    }

    fn schema() -> RelationSchema {
        RelationSchema::from_labels(&["NA", "a", "b", "c", "d"], "NA").unwrap()
    }

    #[test]
    fn scorer_strings() {
        assert_eq!(
            ScorerChoice::parse("synthetic:gold").unwrap(),
            ScorerChoice::Synthetic {
                facts: FactSource::Gold,
                noise: 0.0,
                seed: 0
            }
        );
        assert_eq!(
            ScorerChoice::parse("synthetic:f.jsonl,noise=0.2,seed=9").unwrap(),
            ScorerChoice::Synthetic {
                facts: FactSource::File("f.jsonl".into()),
                noise: 0.2,
                seed: 9
            }
        );
        assert_eq!(
            ScorerChoice::parse("remote:localhost:9000").unwrap(),
            ScorerChoice::Remote {
                endpoint: "localhost:9000".into()
            }
        );
        for bad in [
            "synthetic:",
            "synthetic:gold,noise=1.5",
            "synthetic:gold,x=1",
            "remote:",
            "oracle",
        ] {
            assert!(ScorerChoice::parse(bad).unwrap_err().is::<UsageError>(), "{bad}");
        }
    }

    #[test]
    fn strategy_defaults() {
        let o = ValidateOptions::resolve(&args(Some(StrategyArg::One)), ConfigFile::default(), &schema()).unwrap();
        assert_eq!(o.config, ValidationConfig::qa_extremes_defaults());
        let o = ValidateOptions::resolve(&args(Some(StrategyArg::Two)), ConfigFile::default(), &schema()).unwrap();
        assert_eq!(o.config, ValidationConfig::rc_top_k_defaults());
        assert_eq!(o.parallelism, 2);
    }

    #[test]
    fn foreign_strategy_flags_rejected() {
        let mut a = args(Some(StrategyArg::One));
        a.k = Some(3);
        assert!(ValidateOptions::resolve(&a, ConfigFile::default(), &schema())
            .unwrap_err()
            .is::<UsageError>());
        let mut a = args(Some(StrategyArg::Two));
        a.alpha = Some(5.0);
        assert!(ValidateOptions::resolve(&a, ConfigFile::default(), &schema())
            .unwrap_err()
            .is::<UsageError>());
        let mut a = args(Some(StrategyArg::Two));
        a.k = Some(99);
        assert!(ValidateOptions::resolve(&a, ConfigFile::default(), &schema())
            .unwrap_err()
            .is::<UsageError>());
    }

    #[test]
    fn flags_override_config_file() {
        let file: ConfigFile = toml::from_str("strategy = \"II\"\nk = 2\nlambda = 5.0\nc = 0.8\n").unwrap();
        let mut a = args(None);
        a.lambda = Some(20.0);
        let o = ValidateOptions::resolve(&a, file, &schema()).unwrap();
        assert_eq!(o.config.strategy, Strategy::RcTopK { k: 2 });
        assert_eq!((o.config.lambda, o.config.c), (20.0, 0.8));
        assert!(toml::from_str::<ConfigFile>("gamma = 1").is_err());
    }
}
