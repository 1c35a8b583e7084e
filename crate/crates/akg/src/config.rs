//! Layered configuration: defaults, then a TOML file, then `AKG_*`
//! environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use akg_core::schema::EntityKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value `{value}` for {key}: {message}")]
    Value {
        key: String,
        value: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Replays digest-keyed fixture files.
    Mock,
    /// Chat-completions endpoint from `AKG_LLM_URL`.
    Live,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "live" => Ok(BackendKind::Live),
            other => Err(format!("expected `mock` or `live`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationSettings {
    pub kinds: Vec<EntityKind>,
    pub threshold: f64,
    pub k_max: usize,
    pub sample_cap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSettings {
    pub bind: String,
    pub max_question_chars: usize,
    /// Questions accepted per minute across all clients.
    pub ask_per_minute: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub backend: BackendKind,
    pub fixtures: Option<PathBuf>,
    /// Embedding provider for disambiguation and scoring: `mock` or `live`.
    pub embedder: BackendKind,
    pub max_reasks: u32,
    pub parallelism: usize,
    pub context_cap: usize,
    pub disambiguation: DisambiguationSettings,
    pub service: ServiceSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            backend: BackendKind::Mock,
            fixtures: None,
            embedder: BackendKind::Mock,
            max_reasks: 2,
            parallelism: 4,
            context_cap: akg_core::qa::DEFAULT_CONTEXT_CAP,
            disambiguation: DisambiguationSettings {
                kinds: vec![EntityKind::Task, EntityKind::Dataset, EntityKind::Metric],
                threshold: 0.25,
                k_max: 16,
                sample_cap: 10_000,
                seed: 0,
            },
            service: ServiceSettings {
                bind: "127.0.0.1:8080".into(),
                max_question_chars: 1_000,
                ask_per_minute: 60,
            },
        }
    }
}

/// One configuration layer; unset fields leave the layer below untouched.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub backend: Option<BackendKind>,
    pub fixtures: Option<PathBuf>,
    pub embedder: Option<BackendKind>,
    pub max_reasks: Option<u32>,
    pub parallelism: Option<usize>,
    pub context_cap: Option<usize>,
    #[serde(default)]
    pub disambiguation: DisambiguationLayer,
    #[serde(default)]
    pub service: ServiceLayer,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisambiguationLayer {
    pub kinds: Option<Vec<EntityKind>>,
    pub threshold: Option<f64>,
    pub k_max: Option<usize>,
    pub sample_cap: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceLayer {
    pub bind: Option<String>,
    pub max_question_chars: Option<usize>,
    pub ask_per_minute: Option<usize>,
}

macro_rules! take {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl Config {
    pub fn apply(&mut self, layer: ConfigLayer) {
        take!(self.backend, layer.backend);
        if layer.fixtures.is_some() {
            self.fixtures = layer.fixtures;
        }
        take!(self.embedder, layer.embedder);
        take!(self.max_reasks, layer.max_reasks);
        take!(self.parallelism, layer.parallelism);
        take!(self.context_cap, layer.context_cap);
        let d = layer.disambiguation;
        take!(self.disambiguation.kinds, d.kinds);
        take!(self.disambiguation.threshold, d.threshold);
        take!(self.disambiguation.k_max, d.k_max);
        take!(self.disambiguation.sample_cap, d.sample_cap);
        take!(self.disambiguation.seed, d.seed);
        let s = layer.service;
        take!(self.service.bind, s.bind);
        take!(self.service.max_question_chars, s.max_question_chars);
        take!(self.service.ask_per_minute, s.ask_per_minute);
    }

    /// Resolve all layers. `env` is a lookup so tests need not touch the
    /// process environment.
    pub fn resolve(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        flags: ConfigLayer,
    ) -> Result<Config, ConfigError> {
        let mut config = Config::default();
        if let Some(path) = file {
            config.apply(layer_from_file(path)?);
        }
        config.apply(layer_from_env(env)?);
        config.apply(flags);
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, message: &str| ConfigError::Value {
            key: key.into(),
            value,
            message: message.into(),
        };
        let t = self.disambiguation.threshold;
        if !(0.0..=2.0).contains(&t) {
            return Err(bad("disambiguation.threshold", t.to_string(), "must lie in [0, 2]"));
        }
        if self.disambiguation.k_max < 2 {
            return Err(bad("disambiguation.k_max", self.disambiguation.k_max.to_string(), "must be at least 2"));
        }
        if self.disambiguation.sample_cap == 0 {
            return Err(bad("disambiguation.sample_cap", "0".into(), "must be positive"));
        }
        if let Some(kind) = self.disambiguation.kinds.iter().find(|k| !k.is_disambiguated()) {
            return Err(bad("disambiguation.kinds", kind.to_string(), "only Task, Dataset and Metric are clustered"));
        }
        if self.parallelism == 0 {
            return Err(bad("parallelism", "0".into(), "must be positive"));
        }
        if self.service.max_question_chars == 0 {
            return Err(bad("service.max_question_chars", "0".into(), "must be positive"));
        }
        Ok(())
    }
}

pub fn layer_from_file(path: &Path) -> Result<ConfigLayer, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn parsed<T: std::str::FromStr>(
    env: &impl Fn(&str) -> Option<String>,
    key: &str,
) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match env(key).filter(|v| !v.trim().is_empty()) {
        None => Ok(None),
        Some(value) => value.trim().parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
            key: key.into(),
            value,
            message: e.to_string(),
        }),
    }
}

/// Environment layer. Recognized variables: `AKG_BACKEND`, `AKG_FIXTURES`,
/// `AKG_EMBEDDER`, `AKG_MAX_REASKS`, `AKG_PARALLELISM`, `AKG_CONTEXT_CAP`,
/// `AKG_SEED`, `AKG_THRESHOLD`, `AKG_BIND`, `AKG_MAX_QUESTION_CHARS` and
/// `AKG_ASK_PER_MINUTE`.
pub fn layer_from_env(env: impl Fn(&str) -> Option<String>) -> Result<ConfigLayer, ConfigError> {
    Ok(ConfigLayer {
        backend: parsed(&env, "AKG_BACKEND")?,
        fixtures: env("AKG_FIXTURES").filter(|v| !v.is_empty()).map(PathBuf::from),
        embedder: parsed(&env, "AKG_EMBEDDER")?,
        max_reasks: parsed(&env, "AKG_MAX_REASKS")?,
        parallelism: parsed(&env, "AKG_PARALLELISM")?,
        context_cap: parsed(&env, "AKG_CONTEXT_CAP")?,
        disambiguation: DisambiguationLayer {
            seed: parsed(&env, "AKG_SEED")?,
            threshold: parsed(&env, "AKG_THRESHOLD")?,
            ..Default::default()
        },
        service: ServiceLayer {
            bind: env("AKG_BIND").filter(|v| !v.is_empty()),
            max_question_chars: parsed(&env, "AKG_MAX_QUESTION_CHARS")?,
            ask_per_minute: parsed(&env, "AKG_ASK_PER_MINUTE")?,
        },
    })
}
