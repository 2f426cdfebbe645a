//! Generator, encoder and critic networks and their assembly into the
//! jamming, composer and hybrid models.

mod musegan;
mod network;
mod noise;
mod specs;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::pianoroll::TrackFamily;
use crate::tensor::TensorError;

pub use musegan::{generate_conditional, generate_from_scratch, ModelParams, MuseGan};
pub use network::{BnStore, Forward, LayerKind, LayerSpec, Network, NetworkSpec};
pub use noise::{NoiseBundle, NoiseLayout};
pub use specs::{bar_generator_spec, discriminator_spec, encoder_spec, temporal_generator_spec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape audit failed in {network} at layer {layer}: {detail}")]
    Audit {
        network: String,
        layer: usize,
        detail: String,
    },
    #[error("noise does not match the model: {0}")]
    Noise(String),
    #[error("condition: {0}")]
    Condition(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Network scale: `Full` matches the published layer tables, `Toy` keeps
/// the topology at desk scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Profile {
    Full,
    Toy,
}

/// Data and width constants of a profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub bars: usize,
    pub steps: usize,
    pub pitches: usize,
    pub lowest_pitch: u8,
    /// Total generator noise length per input path.
    pub noise_total: usize,
    pub encoder_width: usize,
    /// Divisor applied to the full filter counts.
    pub filter_div: usize,
}

impl Profile {
    pub fn dims(self) -> Dims {
        match self {
            Profile::Full => Dims {
                bars: 4,
                steps: 96,
                pitches: 84,
                lowest_pitch: 24,
                noise_total: 128,
                encoder_width: 16,
                filter_div: 1,
            },
            Profile::Toy => Dims {
                bars: 2,
                steps: 16,
                pitches: 12,
                lowest_pitch: 48,
                noise_total: 64,
                encoder_width: 4,
                filter_div: 16,
            },
        }
    }

    pub fn default_families(self) -> Vec<TrackFamily> {
        match self {
            Profile::Full => TrackFamily::ALL.to_vec(),
            Profile::Toy => vec![TrackFamily::Bass, TrackFamily::Guitar],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Full => "full",
            Profile::Toy => "toy",
        }
    }
}

impl FromStr for Profile {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Profile::Full),
            "toy" => Ok(Profile::Toy),
            _ => Err(ModelError::Config(format!("unknown profile '{s}' (full, toy)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Jamming,
    Composer,
    Hybrid,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Jamming, ModelKind::Composer, ModelKind::Hybrid];

    /// `(K_temp, K_bar)`: how many bar generators the shared temporal
    /// generator feeds, and how many tracks each bar generator emits.
    pub fn k_values(self, tracks: usize) -> (usize, usize) {
        match self {
            ModelKind::Jamming => (1, 1),
            ModelKind::Composer => (1, tracks),
            ModelKind::Hybrid => (tracks, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Jamming => "jamming",
            ModelKind::Composer => "composer",
            ModelKind::Hybrid => "hybrid",
        }
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown model '{s}' (jamming, composer, hybrid)")))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TemporalMode {
    /// Bar latents come from the temporal generator.
    FromScratch,
    /// Bars are conditioned on an encoded human track; time-dependent
    /// noise is drawn per bar.
    TrackConditional,
}

impl TemporalMode {
    pub fn name(self) -> &'static str {
        match self {
            TemporalMode::FromScratch => "scratch",
            TemporalMode::TrackConditional => "conditional",
        }
    }
}

impl FromStr for TemporalMode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scratch" => Ok(TemporalMode::FromScratch),
            "conditional" => Ok(TemporalMode::TrackConditional),
            _ => Err(ModelError::Config(format!("unknown temporal mode '{s}' (scratch, conditional)"))),
        }
    }
}

impl fmt::Display for TemporalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub temporal: TemporalMode,
    pub profile: Profile,
    pub families: Vec<TrackFamily>,
    /// Index into `families` of the human-provided track (conditional only).
    pub condition_track: Option<usize>,
    /// Drops every batch-norm layer from the generator side.
    pub ablate_bn: bool,
}

impl ModelConfig {
    /// From-scratch model over the profile's default tracks.
    pub fn new(kind: ModelKind, profile: Profile) -> Self {
        ModelConfig {
            kind,
            temporal: TemporalMode::FromScratch,
            profile,
            families: profile.default_families(),
            condition_track: None,
            ablate_bn: false,
        }
    }

    /// Track-conditional model given `family`.
    pub fn conditional(kind: ModelKind, profile: Profile, family: TrackFamily) -> Result<Self, ModelError> {
        let mut c = ModelConfig::new(kind, profile);
        c.temporal = TemporalMode::TrackConditional;
        c.condition_track = Some(
            c.families
                .iter()
                .position(|&f| f == family)
                .ok_or_else(|| ModelError::Condition(format!("{family} is not one of the model's tracks")))?,
        );
        Ok(c)
    }

    /// Indices of the tracks the generator produces.
    pub fn output_tracks(&self) -> Vec<usize> {
        (0..self.families.len()).filter(|&i| Some(i) != self.condition_track).collect()
    }
}
