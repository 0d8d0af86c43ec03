//! Experiment configuration: defaults, a flat `key = value` file, and
//! command-line overrides, applied in that order.

use std::fmt;
use std::path::{Path, PathBuf};

use zerolattice::matching::lattice_spacing;
use zerolattice::pipeline::TrialConfig;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "ZEROLATTICE_OUT";
const DEFAULT_OUT: &str = "zerolattice-out";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: u64,
    pub window: f64,
    pub grid: f64,
    pub const_c: f64,
    pub threshold: f64,
    pub kernel_radius: f64,
    pub truncation_tol: f64,
    /// Grid margin around the window on which fields are computed.
    pub buffer: f64,
    /// Random test sets per trial for `verify` and `calibrate`.
    pub sets: usize,
    /// Test-set centers are drawn from `[-set_center, set_center]^2`.
    pub set_center: f64,
    /// Sub-cells per side for basin cells on a label boundary.
    pub supersample: usize,
    /// Draws per dilation in `toys`.
    pub toy_trials: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let base = TrialConfig::default();
        Self {
            seed: 1,
            trials: 20,
            window: base.window_half_width,
            grid: base.spacing,
            const_c: base.const_c,
            threshold: base.threshold,
            kernel_radius: base.kernel_radius,
            truncation_tol: base.truncation_tol,
            buffer: base.buffer,
            sets: 10,
            set_center: 4.0,
            supersample: 1,
            toy_trials: 1000,
            out: std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from),
        }
    }
}

/// A configuration problem, located at a file line when it came from one.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub location: Option<(PathBuf, usize)>,
    pub message: String,
}

impl ConfigError {
    fn plain(message: impl Into<String>) -> Self {
        Self {
            location: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Some((path, line)) => write!(f, "{}:{}: {}", path.display(), line, self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| format!("invalid value {value:?} for {key}: {e}"))
}

impl ExperimentConfig {
    /// Sets one key. Keys accept `-` and `_` interchangeably.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key.replace('-', "_").as_str() {
            "seed" => self.seed = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "const_c" => self.const_c = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "kernel_radius" => self.kernel_radius = parse(key, value)?,
            "truncation_tol" => self.truncation_tol = parse(key, value)?,
            "buffer" => self.buffer = parse(key, value)?,
            "sets" => self.sets = parse(key, value)?,
            "set_center" => self.set_center = parse(key, value)?,
            "supersample" => self.supersample = parse(key, value)?,
            "toy_trials" => self.toy_trials = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Applies a config file. Blank lines and lines starting with `#` are
    /// skipped; every other line must be `key = value`.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::plain(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let at = |message: String| ConfigError {
                location: Some((path.to_path_buf(), i + 1)),
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            self.set(key.trim(), value.trim()).map_err(at)?;
            self.check_key(key.trim()).map_err(at)?;
        }
        Ok(())
    }

    fn check_key(&self, key: &str) -> Result<(), String> {
        self.problems()
            .into_iter()
            .find(|(k, _)| *k == key.replace('-', "_"))
            .map_or(Ok(()), |(_, msg)| Err(msg))
    }

    fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let positive = [
            ("window", self.window),
            ("grid", self.grid),
            ("const_c", self.const_c),
            ("threshold", self.threshold),
            ("kernel_radius", self.kernel_radius),
            ("truncation_tol", self.truncation_tol),
            ("set_center", self.set_center),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                out.push((key, format!("{key} must be positive, got {v}")));
            }
        }
        let min_window = 4.0 * lattice_spacing();
        if self.window.is_finite() && self.window > 0.0 && self.window < min_window {
            out.push(("window", format!("window must be at least 4 sqrt(pi) = {min_window:.4}, got {}", self.window)));
        }
        if self.grid >= self.kernel_radius {
            out.push(("grid", format!("grid spacing {} must be below kernel_radius {}", self.grid, self.kernel_radius)));
        }
        if !(self.buffer.is_finite() && self.buffer >= 0.0) {
            out.push(("buffer", format!("buffer must be nonnegative, got {}", self.buffer)));
        }
        for (key, v) in [
            ("trials", self.trials as usize),
            ("sets", self.sets),
            ("supersample", self.supersample),
        ] {
            if v == 0 {
                out.push((key, format!("{key} must be at least 1")));
            }
        }
        if self.toy_trials < 2 {
            out.push(("toy_trials", "toy_trials must be at least 2".into()));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.problems().into_iter().next() {
            Some((_, msg)) => Err(ConfigError::plain(msg)),
            None => Ok(()),
        }
    }

    pub fn trial_config(&self) -> TrialConfig {
        TrialConfig {
            seed: self.seed,
            window_half_width: self.window,
            buffer: self.buffer,
            spacing: self.grid,
            const_c: self.const_c,
            kernel_radius: self.kernel_radius,
            truncation_tol: self.truncation_tol,
            threshold: self.threshold,
        }
    }

    /// Key/value echo for the manifest, in a fixed order.
    pub fn echo(&self) -> Vec<(&'static str, serde_json::Value)> {
        use serde_json::json;
        vec![
            ("seed", json!(self.seed)),
            ("trials", json!(self.trials)),
            ("window", json!(self.window)),
            ("grid", json!(self.grid)),
            ("const_c", json!(self.const_c)),
            ("threshold", json!(self.threshold)),
            ("kernel_radius", json!(self.kernel_radius)),
            ("truncation_tol", json!(self.truncation_tol)),
            ("buffer", json!(self.buffer)),
            ("sets", json!(self.sets)),
            ("set_center", json!(self.set_center)),
            ("supersample", json!(self.supersample)),
            ("toy_trials", json!(self.toy_trials)),
            ("out", json!(self.out.display().to_string())),
        ]
    }
}
