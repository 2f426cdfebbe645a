//! MIDI parsing, cleansing into training phrases, the phrase store and
//! MIDI export.

mod export;
mod ingest;
mod parse;
mod store;

use thiserror::Error;

pub use export::{export_program, phrases_to_midi, sixteenth_notes};
pub use ingest::{
    classify_track, cleanse_and_segment, parse_metadata, quantize, CleanseConfig, QuantizedSong, QuantizedTrack,
    SkipReason, SongMetadata,
};
pub use parse::{parse_midi, MidiInstrument, MidiNote, MidiSong, TempoChange, TimeSignature, DRUM_CHANNEL};
pub use store::{DatasetStore, STORE_MAGIC, STORE_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MidiError {
    #[error("MIDI parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("time signature {numerator}/{denominator} is not 4/4")]
    UnsupportedTimeSignature { numerator: u8, denominator: u8 },
    #[error("metadata line {line}: {message}")]
    Metadata { line: usize, message: String },
    #[error("store: {0}")]
    Store(String),
    #[error("io: {0}")]
    Io(String),
}
