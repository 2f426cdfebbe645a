//! Multi-track piano-roll generation with convolutional Wasserstein GANs:
//! a small autodiff engine, piano-roll data handling, MIDI ingestion,
//! evaluation metrics, the jamming/composer/hybrid models and training.

pub mod metrics;
pub mod midi;
pub mod models;
pub mod pianoroll;
pub mod tensor;
pub mod trainer;

pub use metrics::{full_report, full_report_with_shuffle, MetricsError, MetricsReport};
pub use midi::{CleanseConfig, DatasetStore, MidiError, SkipReason};
pub use models::{ModelConfig, ModelError, ModelKind, ModelParams, MuseGan, Profile, TemporalMode};
pub use pianoroll::{BarLayout, PhraseShape, PianoRollBar, PianoRollError, PianoRollPhrase, TrackFamily};
pub use tensor::{Tensor, TensorError};
pub use trainer::{load_checkpoint, sample_phrases, TrainConfig, TrainError, TrainLog, Trainer};
