use std::fmt;
use std::path::{Path, PathBuf};

use np_corner::parse::{parse_eps_range, parse_n_list, parse_real};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError { key: key.into(), reason: reason.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Everything a run needs. Every field is optional so that a config file
/// and command-line flags can be layered; [`ExperimentConfig::require`]
/// turns a missing value into a [`ConfigError`] naming the key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_mesh: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper_sign: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, deserialize_with = "n_list", skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub grading: Option<f64>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, deserialize_with = "eps_list", skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "real", skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flat_control: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot: Option<bool>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RealOrText {
    Real(f64),
    Int(i64),
    Text(String),
}

fn finite<E: serde::de::Error>(v: f64) -> Result<f64, E> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(E::custom(format!("{v} is not a finite number")))
    }
}

fn real<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    match RealOrText::deserialize(d)? {
        RealOrText::Real(v) => finite(v).map(Some),
        RealOrText::Int(v) => Ok(Some(v as f64)),
        RealOrText::Text(s) => parse_real(&s).map(Some).map_err(serde::de::Error::custom),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ListOrText<T> {
    List(Vec<T>),
    Text(String),
}

fn n_list<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<usize>>, D::Error> {
    match ListOrText::<usize>::deserialize(d)? {
        ListOrText::List(v) => Ok(Some(v)),
        ListOrText::Text(s) => parse_n_list(&s).map(Some).map_err(serde::de::Error::custom),
    }
}

fn eps_list<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
    match ListOrText::<f64>::deserialize(d)? {
        ListOrText::List(v) => v.into_iter().map(finite).collect::<Result<_, _>>().map(Some),
        ListOrText::Text(s) => parse_eps_range(&s).map(Some).map_err(serde::de::Error::custom),
    }
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .and_then(|span| {
                    let start = text.get(..span.start)?.rfind('\n').map_or(0, |i| i + 1);
                    let end = text.get(span.start..)?.find('\n').map_or(text.len(), |i| span.start + i);
                    text.get(start..end)
                })
                .and_then(|line| line.split('=').next())
                .map(|k| k.trim().to_string())
                .filter(|k| !k.is_empty())
                .unwrap_or_else(|| "<file>".to_string());
            ConfigError::new(key, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are all representable in TOML")
    }

    /// Values set in `top` win.
    pub fn overlay(mut self, top: &ExperimentConfig) -> Self {
        overlay!(
            self, top, command, shape, geometry, mesh_file, save_mesh, mode, alpha, k, lambda, beta, sweep, paper_sign, n,
            n_list, grading, h, rho, r0, eps, delta, levels, count, samples, flat_control, out, out_dir, seed,
            threads, format, plot,
        );
        self
    }

    pub fn require<T: Clone>(value: &Option<T>, key: &str) -> Result<T, ConfigError> {
        value.clone().ok_or_else(|| ConfigError::new(key, "required but not given"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
