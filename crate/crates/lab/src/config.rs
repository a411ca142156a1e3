//! Experiment configuration: line-oriented `key = value` files with
//! `[section]` headers, or the same structure as a JSON object.
//!
//! ```text
//! seed = 7
//! out = runs
//!
//! [corpus]
//! lower_problems = 60
//! lower_mix = 0.6, 0.3, 0.1
//! meta_hard_fraction = 1.0
//!
//! [train]
//! objective = dpo
//! strategy = domain
//! beta1 = 0.02
//!
//! [select]
//! methods = judge, random, oracle
//! ```

use judgelab_core::bilevel::{OptimizerKind, TrainConfig};
use judgelab_core::judge::{LossConfig, Objective};
use judgelab_core::minilang::{Corpus, CorpusConfig, Pool, PoolSpec};
use judgelab_core::reweight::StrategyKind;
use judgelab_core::selector::{Method, SelectConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("no seed given: set `seed` in the config or pass --seed")]
    MissingSeed,
    #[error("could not read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config {path} is not a JSON object of sections")]
    JsonShape { path: String },
    #[error("invalid JSON config {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

/// Which pool of a corpus a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolName {
    Lower,
    Meta,
    Test,
}

impl PoolName {
    pub fn of(self, corpus: &Corpus) -> &Pool {
        match self {
            PoolName::Lower => &corpus.lower,
            PoolName::Meta => &corpus.meta,
            PoolName::Test => &corpus.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectSection {
    pub rounds: usize,
    pub sampled: bool,
    pub methods: Vec<Method>,
    pub pool: PoolName,
}

impl Default for SelectSection {
    fn default() -> Self {
        let d = SelectConfig::default();
        Self {
            rounds: d.rounds,
            sampled: d.sampled,
            methods: Method::ALL.to_vec(),
            pool: PoolName::Test,
        }
    }
}

impl SelectSection {
    pub fn select_config(&self) -> SelectConfig {
        SelectConfig {
            rounds: self.rounds,
            sampled: self.sampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateSection {
    pub objectives: Vec<Objective>,
    pub strategies: Vec<StrategyKind>,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            objectives: Objective::ALL.to_vec(),
            strategies: StrategyKind::ALL.to_vec(),
        }
    }
}

/// Everything one command needs. `out` is where run directories go and is
/// not part of any manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub select: SelectSection,
    pub ablate: AblateSection,
}

/// One `key = value` assignment, tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_ini(text: &str, path: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let err = |message: &str| ConfigError::Syntax {
            path: path.to_string(),
            line: i + 1,
            message: message.to_string(),
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err("section header needs a closing `]`"))?;
            section = name.trim().to_ascii_lowercase();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(err("empty key"));
        }
        out.push(Entry {
            section: section.clone(),
            key: key.to_ascii_lowercase(),
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

fn json_scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        serde_json::Value::Array(items) => items
            .iter()
            .map(json_scalar)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.join(",")),
        _ => None,
    }
}

/// The JSON mirror: top-level scalars plus one object per section.
pub fn parse_json(text: &str, path: &str) -> Result<Vec<Entry>, ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|source| ConfigError::Json {
            path: path.to_string(),
            source,
        })?;
    let shape = || ConfigError::JsonShape {
        path: path.to_string(),
    };
    let mut out = Vec::new();
    for (key, v) in value.as_object().ok_or_else(shape)? {
        if let Some(fields) = v.as_object() {
            for (k, fv) in fields {
                out.push(Entry {
                    section: key.to_ascii_lowercase(),
                    key: k.to_ascii_lowercase(),
                    value: json_scalar(fv).ok_or_else(shape)?,
                    line: 0,
                });
            }
        } else {
            out.push(Entry {
                section: String::new(),
                key: key.to_ascii_lowercase(),
                value: json_scalar(v).ok_or_else(shape)?,
                line: 0,
            });
        }
    }
    Ok(out)
}

fn bad(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| bad(key, format!("{v:?}: {e}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn mix(key: &str, v: &str) -> Result<[f64; 3], ConfigError> {
    let xs: Vec<f64> = list(key, v)?;
    xs.try_into()
        .map_err(|_| bad(key, "expected three weights: easy, medium, hard"))
}

/// Enums whose names are their lowercase serde representation.
fn named<T: DeserializeOwned>(key: &str, v: &str) -> Result<T, ConfigError> {
    serde_json::from_value(serde_json::Value::String(v.trim().to_ascii_lowercase()))
        .map_err(|_| bad(key, format!("unknown value {v:?}")))
}

fn named_list<T: DeserializeOwned>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|s| named(key, s)).collect()
}

fn set_pool(spec: &mut PoolSpec, field: &str, key: &str, v: &str) -> Result<bool, ConfigError> {
    match field {
        "problems" => spec.problems = num(key, v)?,
        "mix" => spec.difficulty_mix = mix(key, v)?,
        "candidates" => spec.candidates_per_problem = num(key, v)?,
        "intensities" => spec.intensity_weights = list(key, v)?,
        "malformed" => spec.malformed_rate = num(key, v)?,
        "generator" => spec.generator = named(key, v)?,
        "hard_fraction" => {
            let h: f64 = num(key, v)?;
            if !(0.0..=1.0).contains(&h) {
                return Err(bad(key, "must lie in [0, 1]"));
            }
            spec.difficulty_mix = [(1.0 - h) / 2.0, (1.0 - h) / 2.0, h];
        }
        _ => return Ok(false),
    }
    Ok(true)
}

impl ExperimentConfig {
    /// Defaults with an explicit seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            out: PathBuf::from("runs"),
            corpus: CorpusConfig::default(),
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            loss: LossConfig::default(),
            select: SelectSection::default(),
            ablate: AblateSection::default(),
        }
    }

    /// Reads `path` (JSON when it ends in `.json`), then applies the
    /// command-line overrides. A seed must come from one of the two.
    pub fn load(
        path: Option<&Path>,
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, ConfigError> {
        let entries = match path {
            None => Vec::new(),
            Some(p) => {
                let name = p.display().to_string();
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: name.clone(),
                    source,
                })?;
                if p.extension().is_some_and(|e| e == "json") {
                    parse_json(&text, &name)?
                } else {
                    parse_ini(&text, &name)?
                }
            }
        };
        Self::from_entries(&entries, seed, out)
    }

    pub fn from_entries(
        entries: &[Entry],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, ConfigError> {
        let file_seed = entries
            .iter()
            .find(|e| e.section.is_empty() && e.key == "seed")
            .map(|e| num::<u64>("seed", &e.value))
            .transpose()?;
        let seed = seed.or(file_seed).ok_or(ConfigError::MissingSeed)?;
        let mut cfg = Self::with_seed(seed);
        for e in entries {
            cfg.set(e)?;
        }
        cfg.seed = seed;
        cfg.train.seed = seed;
        if let Some(o) = out {
            cfg.out = o.to_path_buf();
        }
        cfg.train
            .validate()
            .map_err(|e| bad("train", e.to_string()))?;
        if cfg.select.rounds == 0 {
            return Err(bad("select.rounds", "must be at least 1"));
        }
        if cfg.select.methods.is_empty() {
            return Err(bad("select.methods", "name at least one method"));
        }
        if cfg.loss.group_size < 2 {
            return Err(bad("loss.group_size", "must be at least 2"));
        }
        if !(cfg.loss.beta > 0.0 && cfg.loss.beta.is_finite()) {
            return Err(bad("loss.beta", "must be positive"));
        }
        if !(0.0..1.0).contains(&cfg.loss.eps_malformed) {
            return Err(bad("loss.eps_malformed", "must lie in [0, 1)"));
        }
        Ok(cfg)
    }

    fn set(&mut self, e: &Entry) -> Result<(), ConfigError> {
        let key = if e.section.is_empty() {
            e.key.clone()
        } else {
            format!("{}.{}", e.section, e.key)
        };
        let v = e.value.as_str();
        let k = key.as_str();
        let t = &mut self.train;
        match (e.section.as_str(), e.key.as_str()) {
            ("", "seed") => {}
            ("", "out") => self.out = PathBuf::from(v),
            ("corpus", "max_retries") => self.corpus.max_retries = num(k, v)?,
            ("corpus", field) => {
                let (pool, rest) = field
                    .split_once('_')
                    .ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
                let spec = match pool {
                    "lower" => &mut self.corpus.lower,
                    "meta" => &mut self.corpus.meta,
                    "test" => &mut self.corpus.test,
                    _ => return Err(ConfigError::UnknownKey(key)),
                };
                if !set_pool(spec, rest, k, v)? {
                    return Err(ConfigError::UnknownKey(key));
                }
            }
            ("train", "beta1") => t.beta1 = num(k, v)?,
            ("train", "beta2") => t.beta2 = num(k, v)?,
            ("train", "unroll_steps") => t.unroll_steps = num(k, v)?,
            ("train", "lower_accumulation") => t.lower_accumulation = num(k, v)?,
            ("train", "upper_accumulation") => t.upper_accumulation = num(k, v)?,
            ("train", "max_iterations") => t.max_iterations = num(k, v)?,
            ("train", "objective") => t.objective = named(k, v)?,
            ("train", "strategy") => t.strategy = named(k, v)?,
            ("train", "optimizer") => t.optimizer = named::<OptimizerKind>(k, v)?,
            ("train", "convergence_window") => t.convergence_window = num(k, v)?,
            ("train", "convergence_tol") => t.convergence_tol = num(k, v)?,
            ("train", "log_every") => t.log_every = num(k, v)?,
            ("train", "hidden") => t.hidden = num(k, v)?,
            ("train", "upper_clip") => t.upper_clip = Some(num(k, v)?),
            ("loss", "beta") => self.loss.beta = num(k, v)?,
            ("loss", "group_size") => self.loss.group_size = num(k, v)?,
            ("loss", "eps_malformed") => self.loss.eps_malformed = num(k, v)?,
            ("select", "rounds") => self.select.rounds = num(k, v)?,
            ("select", "sampled") => self.select.sampled = num(k, v)?,
            ("select", "methods") => self.select.methods = named_list(k, v)?,
            ("select", "pool") => self.select.pool = named(k, v)?,
            ("ablate", "objectives") => self.ablate.objectives = named_list(k, v)?,
            ("ablate", "strategies") => self.ablate.strategies = named_list(k, v)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }
}
