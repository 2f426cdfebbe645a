//! Adversarial training: losses, the update schedule, monitoring and
//! checkpoints.

mod checkpoint;
mod loss;
mod train;

use std::fmt::Write as _;

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::midi::MidiError;
use crate::models::{ModelConfig, ModelError, ModelKind, Profile, TemporalMode};
use crate::pianoroll::{PianoRollError, TrackFamily};
use crate::tensor::{AdamConfig, TensorError};

pub use checkpoint::load_checkpoint;
pub use loss::{critic_loss, generator_loss, gradient_penalty, interpolate, Critic, CriticLoss, NORM_EPSILON};
pub use train::{sample_phrases, snapshot_metrics, train, SAMPLE_CHUNK, Snapshot, StepRecord, TrainLog, Trainer, UpdateTarget};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("store does not fit the model: {0}")]
    StoreMismatch(String),
    #[error("non-finite {what} at step {step}\n{dump}")]
    NonFinite { step: usize, what: String, dump: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    PianoRoll(#[from] PianoRollError),
    #[error(transparent)]
    Midi(#[from] MidiError),
}

impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Checkpoint(e.to_string())
    }
}

/// Every knob of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub temporal: TemporalMode,
    pub profile: Profile,
    /// Human-provided track in conditional mode.
    pub condition: Option<TrackFamily>,
    pub ablate_bn: bool,
    pub batch_size: usize,
    /// Critic updates per generator update.
    pub critic_updates: usize,
    pub adam: AdamConfig,
    /// Gradient-penalty weight.
    pub gp_weight: f64,
    pub steps: usize,
    pub seed: u64,
    pub snapshot_every: usize,
    pub snapshot_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Composer,
            temporal: TemporalMode::FromScratch,
            profile: Profile::Full,
            condition: None,
            ablate_bn: false,
            batch_size: 64,
            critic_updates: 5,
            adam: AdamConfig::default(),
            gp_weight: 10.0,
            steps: 1000,
            seed: 0,
            snapshot_every: 100,
            snapshot_samples: 64,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
    value
        .parse()
        .map_err(|_| TrainError::Config(format!("{key}: cannot parse '{value}'")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.critic_updates < 1 {
            return Err(TrainError::Config("critic updates per generator update must be >= 1".into()));
        }
        if !(self.gp_weight > 0.0) {
            return Err(TrainError::Config("gradient-penalty weight must be > 0".into()));
        }
        if self.batch_size < 2 {
            return Err(TrainError::Config("batch size must be >= 2".into()));
        }
        if self.snapshot_every == 0 || self.snapshot_samples == 0 {
            return Err(TrainError::Config("snapshot cadence and size must be >= 1".into()));
        }
        self.model_config()?;
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig, TrainError> {
        let mut m = match (self.temporal, self.condition) {
            (TemporalMode::FromScratch, None) => ModelConfig::new(self.kind, self.profile),
            (TemporalMode::TrackConditional, Some(f)) => ModelConfig::conditional(self.kind, self.profile, f)?,
            (TemporalMode::FromScratch, Some(f)) => {
                return Err(TrainError::Config(format!("condition track {f} given in from-scratch mode")))
            }
            (TemporalMode::TrackConditional, None) => {
                return Err(TrainError::Config("conditional mode needs a condition track".into()))
            }
        };
        m.ablate_bn = self.ablate_bn;
        Ok(m)
    }

    /// Keys accepted by [`TrainConfig::set`], without the `train.` prefix.
    pub const KEYS: [&'static str; 16] = [
        "model",
        "temporal",
        "profile",
        "condition_track",
        "ablate_bn",
        "batch_size",
        "critic_updates",
        "lr",
        "beta1",
        "beta2",
        "adam_eps",
        "gp_weight",
        "steps",
        "seed",
        "snapshot_every",
        "snapshot_samples",
    ];

    /// Sets one `train.*` key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let k = key.strip_prefix("train.").unwrap_or(key);
        match k {
            "model" => self.kind = value.parse()?,
            "temporal" => self.temporal = value.parse()?,
            "profile" => self.profile = value.parse()?,
            "condition_track" => {
                self.condition = match value {
                    "none" | "" => None,
                    v => Some(v.parse()?),
                }
            }
            "ablate_bn" => self.ablate_bn = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "critic_updates" => self.critic_updates = parse(key, value)?,
            "lr" => self.adam.lr = parse(key, value)?,
            "beta1" => self.adam.beta1 = parse(key, value)?,
            "beta2" => self.adam.beta2 = parse(key, value)?,
            "adam_eps" => self.adam.eps = parse(key, value)?,
            "gp_weight" => self.gp_weight = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "snapshot_every" => self.snapshot_every = parse(key, value)?,
            "snapshot_samples" => self.snapshot_samples = parse(key, value)?,
            _ => return Err(TrainError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// `train.key=value` lines; floats print in round-trip form.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let cond = self.condition.map_or("none", |f| f.name());
        let a = &self.adam;
        let lines: [(&str, String); 16] = [
            ("model", self.kind.to_string()),
            ("temporal", self.temporal.to_string()),
            ("profile", self.profile.to_string()),
            ("condition_track", cond.to_string()),
            ("ablate_bn", self.ablate_bn.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("critic_updates", self.critic_updates.to_string()),
            ("lr", a.lr.to_string()),
            ("beta1", a.beta1.to_string()),
            ("beta2", a.beta2.to_string()),
            ("adam_eps", a.eps.to_string()),
            ("gp_weight", self.gp_weight.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("snapshot_every", self.snapshot_every.to_string()),
            ("snapshot_samples", self.snapshot_samples.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "train.{k}={v}");
        }
        s
    }

    pub fn from_key_values(text: &str) -> Result<Self, TrainError> {
        let mut c = TrainConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("expected key=value, got '{line}'")))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut c = TrainConfig {
            profile: Profile::Toy,
            temporal: TemporalMode::TrackConditional,
            condition: Some(TrackFamily::Guitar),
            ..TrainConfig::default()
        };
        c.adam.lr = 0.0003;
        let back = TrainConfig::from_key_values(&c.to_key_values()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad_ratio = TrainConfig {
            critic_updates: 0,
            ..TrainConfig::default()
        };
        assert!(bad_ratio.validate().is_err());
        let bad_gp = TrainConfig {
            gp_weight: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad_gp.validate().is_err());
        assert!(TrainConfig::default().set("train.bogus", "1").is_err());
    }
}
