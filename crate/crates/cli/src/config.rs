//! Flat `key=value` run configuration.
//!
//! Keys are namespaced by the stage that reads them: `ingest.*`,
//! `train.*` and `metrics.*`. Later sources override earlier ones:
//! defaults, then the `--config` file, then command-line flags.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use musegan_core::{CleanseConfig, TrainConfig};

use crate::CliError;

/// Evaluation options.
#[derive(Clone, Debug, PartialEq)]
#[derive(Default)]
pub struct MetricsOptions {
    /// Adds the shuffled-bar TD row to reports.
    pub shuffled: bool,
    pub shuffle_seed: u64,
}


#[derive(Clone, Debug, Default, PartialEq)]
pub struct CliConfig {
    pub ingest: CleanseConfig,
    pub train: TrainConfig,
    pub metrics: MetricsOptions,
    /// Keys set by a file or a flag rather than left at their default.
    pub explicit: BTreeSet<String>,
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::Config(format!("{key}: cannot parse '{value}'"))
}

impl CliConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "ingest.min_confidence" => self.ingest.min_confidence = value.parse().map_err(|_| bad(key, value))?,
            "ingest.genre" => {
                self.ingest.genre_filter = match value {
                    "" | "none" => None,
                    g => Some(g.to_string()),
                }
            }
            "metrics.shuffled" => self.metrics.shuffled = value.parse().map_err(|_| bad(key, value))?,
            "metrics.shuffle_seed" => self.metrics.shuffle_seed = value.parse().map_err(|_| bad(key, value))?,
            k if k.starts_with("train.") => self.train.set(k, value)?,
            _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{source}:{}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| CliError::Config(format!("{source}:{}: {}", i + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its resolved value.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ingest.min_confidence={}", self.ingest.min_confidence);
        let _ = writeln!(s, "ingest.genre={}", self.ingest.genre_filter.as_deref().unwrap_or("none"));
        s.push_str(&self.train.to_key_values());
        let _ = writeln!(s, "metrics.shuffled={}", self.metrics.shuffled);
        let _ = writeln!(s, "metrics.shuffle_seed={}", self.metrics.shuffle_seed);
        s
    }
}
