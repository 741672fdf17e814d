//! Resolved run configuration: defaults, then a JSON file, then
//! `EDITSYNTH_*` environment overrides, then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compose::{GenerationConfig, TaskMix};
use crate::curation::{ConstantScorer, CurationConfig, KeywordScorer, ScorerError, SimilarityScorer, TableScorer};
use crate::metrics::EvalConfig;
use crate::task::Task;

/// Prefix of environment overrides. `__` separates nesting levels, e.g.
/// `EDITSYNTH_GENERATION__SCENE__DURATION_S=12`.
pub const ENV_PREFIX: &str = "EDITSYNTH_";
/// Environment variable naming the config file when no flag is given.
pub const ENV_CONFIG_FILE: &str = "EDITSYNTH_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {reason}")]
    Parse { origin: String, reason: String },
    #[error("override '{key}': {reason}")]
    Override { key: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerConfig {
    Constant { score: f64 },
    Table { path: PathBuf },
    #[default]
    Keyword,
}

impl ScorerConfig {
    pub fn build(&self) -> Result<Box<dyn SimilarityScorer>, ScorerError> {
        Ok(match self {
            ScorerConfig::Constant { score } => Box::new(ConstantScorer(*score)),
            ScorerConfig::Table { path } => Box::new(TableScorer::from_json_file(path)?),
            ScorerConfig::Keyword => Box::new(KeywordScorer::default()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionCheckConfig {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub task_mix: TaskMix,
    /// Triplets generated per parallel batch.
    pub chunk_size: usize,
    /// Template bank JSON; the built-in bank when unset.
    pub templates: Option<PathBuf>,
    pub scorer: ScorerConfig,
    pub curation: CurationConfig,
    pub generation: GenerationConfig,
    pub eval: EvalConfig,
    pub diffusion_check: DiffusionCheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task_mix: Task::ALL.iter().map(|t| (*t, 100)).collect(),
            chunk_size: 64,
            templates: None,
            scorer: ScorerConfig::default(),
            curation: CurationConfig::default(),
            generation: GenerationConfig::default(),
            eval: EvalConfig::default(),
            diffusion_check: DiffusionCheckConfig::default(),
        }
    }
}

/// A fully merged config with its canonical JSON and hash.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub canonical: Value,
    pub hash: String,
}

/// Canonical form: compact JSON with object keys sorted.
pub fn canonical_json(v: &Value) -> String {
    // serde_json's default map is ordered by key
    serde_json::to_string(v).expect("json value serializes")
}

pub fn config_hash(v: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(v).as_bytes()))
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, key: &str, path: &[String], value: Value) -> Result<(), ConfigError> {
    let bad = |reason: &str| ConfigError::Override {
        key: key.to_string(),
        reason: reason.to_string(),
    };
    if path.is_empty() || path.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let mut node = root;
    for (i, part) in path.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Map::new());
                node.as_object_mut().expect("just set")
            }
            _ => return Err(bad(&format!("'{}' is not a section", path[..i].join(".")))),
        };
        if i + 1 == path.len() {
            obj.insert(part.clone(), value);
            return Ok(());
        }
        node = obj.entry(part.clone()).or_insert(Value::Null);
    }
    unreachable!("path is non-empty")
}

/// Parses `a.b.c=value`. Values are JSON when they parse as JSON, else strings.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Override {
        key: s.to_string(),
        reason: "expected key=value".into(),
    })?;
    Ok((k.trim().to_string(), parse_scalar(v)))
}

/// Merges defaults, `file`, environment variables (already filtered or not;
/// only `EDITSYNTH_*` entries are used) and dotted-key overrides, in
/// increasing precedence, then validates the result.
pub fn resolve(
    file: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &[(String, Value)],
) -> Result<ResolvedConfig, ConfigError> {
    let mut value = serde_json::to_value(RunConfig::default()).expect("default config serializes");

    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let patch: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            origin: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if !patch.is_object() {
            return Err(ConfigError::Parse {
                origin: path.display().to_string(),
                reason: "top level must be an object".into(),
            });
        }
        merge(&mut value, patch);
    }

    let mut env: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != ENV_CONFIG_FILE)
        .collect();
    env.sort();
    for (k, v) in env {
        let path: Vec<String> = k[ENV_PREFIX.len()..].split("__").map(|p| p.to_ascii_lowercase()).collect();
        set_path(&mut value, &k, &path, parse_scalar(&v))?;
    }

    for (k, v) in overrides {
        let path: Vec<String> = k.split('.').map(str::to_string).collect();
        set_path(&mut value, k, &path, v.clone())?;
    }

    let config: RunConfig = serde_json::from_value(value).map_err(|e| ConfigError::Parse {
        origin: "merged config".into(),
        reason: e.to_string(),
    })?;
    config.validate()?;
    // re-serialize so defaults filled by serde appear in the canonical form
    let canonical = serde_json::to_value(&config).expect("config serializes");
    let hash = config_hash(&canonical);
    Ok(ResolvedConfig { config, canonical, hash })
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chunk_size == 0 {
            return Err(ConfigError::Invalid("chunk_size must be at least 1".into()));
        }
        self.curation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.generation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.eval.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let ScorerConfig::Constant { score } = self.scorer {
            if !(-1.0..=1.0).contains(&score) {
                return Err(ConfigError::Invalid(format!("constant score {score} outside [-1, 1]")));
            }
        }
        Ok(())
    }
}
