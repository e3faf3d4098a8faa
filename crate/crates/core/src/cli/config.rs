use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::arl::{ArlConfig, AttackConfig};
use crate::datasets::SynthConfig;
use crate::error::{Error, Result};

/// Seed used when neither the config nor `FRESH_SEED` sets one.
pub const DEFAULT_SEED: u64 = 42;
/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "FRESH_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// Export directory written by `gen-data` and read by later commands.
    pub dir: PathBuf,
    /// IDX image file, for `kind = "idx"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    /// IDX label file, for `kind = "idx"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub synthetic: SynthConfig,
}

/// Post-hoc attack budgets. Epochs, batch size and classifier learning rate
/// follow the `[arl]` section unless set here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    /// Whether `train` also runs the reconstruction attack.
    pub reconstruction: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_classifier: Option<f64>,
    pub lr_reconstructor: f64,
    pub reconstructor_width: usize,
    /// Sample triplets dumped by the reconstruction attack.
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Jsonl,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<ReportFormat>,
}

/// Everything a command needs, read from a sectioned TOML file. Missing keys
/// take the values printed by `freqshield defaults`; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data generation, training and attacks.
    pub seed: u64,
    pub dataset: DatasetSection,
    pub arl: ArlConfig,
    pub attack: AttackSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let attack = AttackConfig::default();
        Self {
            seed: DEFAULT_SEED,
            dataset: DatasetSection {
                kind: DatasetKind::Synthetic,
                dir: PathBuf::from("data"),
                images: None,
                labels: None,
                synthetic: SynthConfig {
                    seed: DEFAULT_SEED,
                    ..SynthConfig::default()
                },
            },
            arl: ArlConfig {
                seed: DEFAULT_SEED,
                ..ArlConfig::desk_scale()
            },
            attack: AttackSection {
                reconstruction: false,
                epochs: None,
                batch_size: None,
                lr_classifier: None,
                lr_reconstructor: attack.lr_reconstructor,
                reconstructor_width: attack.reconstructor_width,
                samples: attack.samples,
            },
            output: OutputSection {
                dir: PathBuf::from("out"),
                formats: vec![ReportFormat::Jsonl, ReportFormat::Csv],
            },
        }
    }
}

/// Section keys that would shadow the single top-level seed.
const SHADOWED_SEEDS: [(&str, &str); 2] = [("arl", "seed"), ("dataset.synthetic", "seed")];

fn defaults_table() -> Table {
    let mut t = Table::try_from(RunConfig::default()).expect("defaults serialize to TOML");
    for (section, key) in SHADOWED_SEEDS {
        if let Some(Value::Table(s)) = lookup_mut(&mut t, section) {
            s.remove(key);
        }
    }
    t
}

fn lookup_mut<'a>(t: &'a mut Table, dotted: &str) -> Option<&'a mut Value> {
    let mut parts = dotted.split('.');
    let mut cur = t.get_mut(parts.next()?)?;
    for p in parts {
        cur = cur.as_table_mut()?.get_mut(p)?;
    }
    Some(cur)
}

fn merge(base: &mut Table, overlay: Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// The documented defaults as TOML.
    pub fn defaults_toml() -> String {
        toml::to_string_pretty(&defaults_table()).expect("defaults serialize to TOML")
    }

    /// Parses `text` over the defaults. `seed_override` (normally from
    /// `FRESH_SEED`) wins over the file.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let mut user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config: {}", e.message())))?;
        for (section, key) in SHADOWED_SEEDS {
            if let Some(Value::Table(s)) = lookup_mut(&mut user, section) {
                if s.contains_key(key) {
                    return Err(Error::Config(format!(
                        "`{section}.{key}` is not allowed; set `seed` once at the top level"
                    )));
                }
            }
        }
        let mut merged = defaults_table();
        merge(&mut merged, user);
        let mut cfg: RunConfig = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config: {}", e.message())))?;
        if let Some(s) = seed_override {
            cfg.seed = s;
        }
        cfg.dataset.synthetic.seed = cfg.seed;
        cfg.arl.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::parse(&text, seed_from_env()?)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.synthetic.validate()?;
        self.arl.validate()?;
        self.attack_config().validate()?;
        if self.dataset.kind == DatasetKind::Idx && (self.dataset.images.is_none() || self.dataset.labels.is_none()) {
            return Err(Error::Config("dataset kind `idx` needs both `images` and `labels`".into()));
        }
        Ok(())
    }

    /// Attack budget with unset fields taken from the training run.
    pub fn attack_config(&self) -> AttackConfig {
        let base = AttackConfig::matching(&self.arl);
        AttackConfig {
            epochs: self.attack.epochs.unwrap_or(base.epochs),
            batch_size: self.attack.batch_size.unwrap_or(base.batch_size),
            lr_classifier: self.attack.lr_classifier.unwrap_or(base.lr_classifier),
            lr_reconstructor: self.attack.lr_reconstructor,
            reconstructor_width: self.attack.reconstructor_width,
            samples: self.attack.samples,
        }
    }
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}
