//! Run configuration: flat `key = value` files with `#` comments, plus
//! flag overrides applied on top.
//!
//! Recognized keys: `objective`, `B`, `C`, `dim`, `n_particles`, `lambda`,
//! `sigma`, `beta`, `h`, `scheme`, `noise_mode`, `seed`, `init_low`,
//! `init_high`, `max_steps`, `diameter_tol`, `record_stride`, `out_csv`,
//! `out_jsonl`. Box bounds take either one scalar (broadcast over all
//! components) or `dim` comma-separated values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{NoiseMode, ParamError, Params, Scheme};
use crate::objectives::{registry_get, Objective, ObjectiveError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: expected 'key = value', got '{text}'")]
    Syntax { path: PathBuf, line: usize, text: String },
    #[error("{path}:{line}: unknown key '{key}'")]
    UnknownKey { path: PathBuf, line: usize, key: String },
    #[error("{path}:{line}: invalid value for '{key}': {reason}")]
    BadValue { path: PathBuf, line: usize, key: String, reason: String },
    #[error("missing required key 'objective'")]
    MissingObjective,
    #[error("invalid value for '{key}': {reason}")]
    BadOverride { key: String, reason: String },
    #[error("init box must have 1 or {dim} components per bound, got {got}")]
    BoxArity { dim: usize, got: usize },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Everything one run needs. `Default` reproduces the reference experiment
/// (100 particles, `lambda=1`, `beta=10`, `h=0.01`, box `[-2,2]^2`) with the
/// objective left unset.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub objective: Option<String>,
    /// Objective parameters (`B`, `C`).
    pub objective_params: BTreeMap<String, f64>,
    pub dim: usize,
    pub n_particles: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub beta: f64,
    pub h: f64,
    pub scheme: Scheme,
    pub noise_mode: NoiseMode,
    pub seed: u64,
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
    pub max_steps: u64,
    pub diameter_tol: f64,
    pub record_stride: u64,
    pub out_csv: Option<PathBuf>,
    pub out_jsonl: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut objective_params = BTreeMap::new();
        objective_params.insert("B".to_string(), 0.0);
        objective_params.insert("C".to_string(), 0.0);
        RunConfig {
            objective: None,
            objective_params,
            dim: 2,
            n_particles: 100,
            lambda: 1.0,
            sigma: 1.0,
            beta: 10.0,
            h: 0.01,
            scheme: Scheme::SemiExact,
            noise_mode: NoiseMode::Common,
            seed: 0,
            init_low: vec![-2.0],
            init_high: vec![2.0],
            max_steps: 1000,
            diameter_tol: 1e-3,
            record_stride: 1,
            out_csv: None,
            out_jsonl: None,
        }
    }
}

fn parse_f64(value: &str) -> Result<f64, String> {
    value.trim().parse::<f64>().map_err(|e| format!("'{value}' is not a number ({e})"))
}

fn parse_vector(value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(parse_f64).collect()
}

pub fn parse_scheme(value: &str) -> Result<Scheme, String> {
    match value.trim() {
        "euler" => Ok(Scheme::Euler),
        "semi_exact" => Ok(Scheme::SemiExact),
        "deterministic" => Ok(Scheme::Deterministic),
        other => Err(format!("'{other}' is not one of euler, semi_exact, deterministic")),
    }
}

pub fn parse_noise_mode(value: &str) -> Result<NoiseMode, String> {
    match value.trim() {
        "common" => Ok(NoiseMode::Common),
        "independent" => Ok(NoiseMode::Independent),
        other => Err(format!("'{other}' is not one of common, independent")),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let uint = |v: &str| -> Result<u64, String> {
            v.trim().parse::<u64>().map_err(|e| format!("'{v}' is not a nonnegative integer ({e})"))
        };
        match key {
            "objective" => self.objective = Some(value.trim().to_string()),
            "B" => {
                self.objective_params.insert("B".to_string(), parse_f64(value)?);
            }
            "C" => {
                self.objective_params.insert("C".to_string(), parse_f64(value)?);
            }
            "dim" => self.dim = uint(value)? as usize,
            "n_particles" => self.n_particles = uint(value)? as usize,
            "lambda" => self.lambda = parse_f64(value)?,
            "sigma" => self.sigma = parse_f64(value)?,
            "beta" => self.beta = parse_f64(value)?,
            "h" => self.h = parse_f64(value)?,
            "scheme" => self.scheme = parse_scheme(value)?,
            "noise_mode" => self.noise_mode = parse_noise_mode(value)?,
            "seed" => self.seed = uint(value)?,
            "init_low" => self.init_low = parse_vector(value)?,
            "init_high" => self.init_high = parse_vector(value)?,
            "max_steps" => self.max_steps = uint(value)?,
            "diameter_tol" => self.diameter_tol = parse_f64(value)?,
            "record_stride" => self.record_stride = uint(value)?,
            "out_csv" => self.out_csv = Some(PathBuf::from(value.trim())),
            "out_jsonl" => self.out_jsonl = Some(PathBuf::from(value.trim())),
            unknown => return Err(format!("unknown key '{unknown}'")),
        }
        Ok(())
    }

    /// Parses a config file into defaults-plus-assignments. Later keys win.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    path: path.to_path_buf(),
                    line,
                    text: content.to_string(),
                });
            };
            let key = key.trim();
            cfg.set(key, value).map_err(|reason| {
                if reason.starts_with("unknown key") {
                    ConfigError::UnknownKey {
                        path: path.to_path_buf(),
                        line,
                        key: key.to_string(),
                    }
                } else {
                    ConfigError::BadValue {
                        path: path.to_path_buf(),
                        line,
                        key: key.to_string(),
                        reason,
                    }
                }
            })?;
        }
        Ok(cfg)
    }

    /// Validated model parameters for this configuration.
    pub fn params(&self) -> Result<Params, ConfigError> {
        Ok(Params {
            lambda: self.lambda,
            sigma: self.sigma,
            beta: self.beta,
            h: self.h,
            n_particles: self.n_particles,
            dim: self.dim,
            noise_mode: self.noise_mode,
            scheme: self.scheme,
        }
        .validated()?)
    }

    /// The configured objective with metadata, from the registry.
    pub fn objective(&self) -> Result<Objective, ConfigError> {
        let name = self.objective.as_deref().ok_or(ConfigError::MissingObjective)?;
        Ok(registry_get(name, self.dim, &self.objective_params)?)
    }

    /// Initialization box broadcast to `dim` components and checked to be
    /// nondegenerate.
    pub fn init_box(&self) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
        let broadcast = |v: &Vec<f64>| -> Result<Vec<f64>, ConfigError> {
            match v.len() {
                1 => Ok(vec![v[0]; self.dim]),
                n if n == self.dim => Ok(v.clone()),
                got => Err(ConfigError::BoxArity { dim: self.dim, got }),
            }
        };
        let low = broadcast(&self.init_low)?;
        let high = broadcast(&self.init_high)?;
        for l in 0..self.dim {
            let ordered = low[l].is_finite() && high[l].is_finite() && low[l] < high[l];
            if !ordered {
                return Err(ConfigError::BadOverride {
                    key: "init_low/init_high".to_string(),
                    reason: format!(
                        "degenerate box in component {l}: low {} >= high {}",
                        low[l], high[l]
                    ),
                });
            }
        }
        Ok((low, high))
    }
}
