//! MIDI song -> quantized notes -> five-track piano-roll phrases.

use std::collections::HashMap;
use std::fmt;

use super::parse::MidiSong;
use super::MidiError;
use crate::pianoroll::{
    crop_pitch_range, crop_rows, encode_notes, merge_tracks, BarLayout, NoteEvent, PianoRollBar, PianoRollPhrase, TrackFamily,
    BARS_PER_PHRASE, CROPPED_PITCHES, LOWEST_CROPPED_PITCH, STEPS_PER_BAR,
};

/// General MIDI program groups: pianos 0-7, guitars 24-31, basses 32-39;
/// anything else counts as strings.
pub fn classify_track(program: u8, is_drum: bool) -> TrackFamily {
    if is_drum {
        return TrackFamily::Drums;
    }
    match program {
        0..=7 => TrackFamily::Piano,
        24..=31 => TrackFamily::Guitar,
        32..=39 => TrackFamily::Bass,
        _ => TrackFamily::Strings,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedTrack {
    pub program: u8,
    pub is_drum: bool,
    pub notes: Vec<NoteEvent>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedSong {
    pub steps_per_bar: usize,
    pub tracks: Vec<QuantizedTrack>,
    /// One past the last step any note reaches.
    pub end_step: usize,
    /// No tempo event was present; 120 BPM assumed.
    pub default_tempo: bool,
    /// No time-signature event was present; 4/4 assumed.
    pub default_time_signature: bool,
}

/// Snaps note boundaries to the nearest of `steps_per_bar` steps per 4/4 bar
/// (ties round up). Notes that collapse to zero length are dropped. The
/// song ends at its last note-off or its last end-of-track, whichever is
/// later.
pub fn quantize(song: &MidiSong, steps_per_bar: usize) -> Result<QuantizedSong, MidiError> {
    if let Some(ts) = song
        .time_signatures
        .iter()
        .find(|t| (t.numerator, t.denominator) != (4, 4))
    {
        return Err(MidiError::UnsupportedTimeSignature {
            numerator: ts.numerator,
            denominator: ts.denominator,
        });
    }
    let ticks_per_bar = 4 * song.ticks_per_beat as u64;
    let snap = |tick: u64| -> usize {
        let scaled = 2 * tick as u128 * steps_per_bar as u128 + ticks_per_bar as u128;
        (scaled / (2 * ticks_per_bar as u128)) as usize
    };
    let mut end_step = snap(song.end_tick);
    let tracks = song
        .instruments
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let notes = inst
                .notes
                .iter()
                .filter_map(|n| {
                    let (on, off) = (snap(n.start), snap(n.end));
                    (off > on).then(|| {
                        end_step = end_step.max(off);
                        NoteEvent {
                            onset: on,
                            duration: off - on,
                            pitch: n.pitch,
                            track: i,
                        }
                    })
                })
                .collect();
            QuantizedTrack {
                program: inst.program,
                is_drum: inst.is_drum,
                notes,
            }
        })
        .collect();
    Ok(QuantizedSong {
        steps_per_bar,
        tracks,
        end_step,
        default_tempo: song.tempos.is_empty(),
        default_time_signature: song.time_signatures.is_empty(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CleanseConfig {
    /// Songs whose sidecar confidence is below this are skipped.
    pub min_confidence: f64,
    /// Keep only songs whose sidecar genre matches (case-insensitive).
    pub genre_filter: Option<String>,
    pub phrase_bars: usize,
    pub steps_per_bar: usize,
}

impl Default for CleanseConfig {
    fn default() -> Self {
        CleanseConfig {
            min_confidence: 0.0,
            genre_filter: None,
            phrase_bars: BARS_PER_PHRASE,
            steps_per_bar: STEPS_PER_BAR,
        }
    }
}

/// Sidecar record for one MIDI file.
#[derive(Clone, Debug, PartialEq)]
pub struct SongMetadata {
    pub genre: String,
    pub confidence: f64,
}

/// Parses `filename<TAB>genre<TAB>confidence` lines. Blank lines and lines
/// starting with `#` are ignored.
pub fn parse_metadata(text: &str) -> Result<HashMap<String, SongMetadata>, MidiError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| MidiError::Metadata {
            line: i + 1,
            message: msg.to_string(),
        };
        if fields.len() != 3 {
            return Err(bad("expected 3 tab-separated fields"));
        }
        let confidence: f64 = fields[2].trim().parse().map_err(|_| bad("confidence is not a number"))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(bad("confidence outside [0, 1]"));
        }
        out.insert(
            fields[0].to_string(),
            SongMetadata {
                genre: fields[1].to_string(),
                confidence,
            },
        );
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    Parse,
    TimeSignature,
    Genre,
    Confidence,
    NoPhrases,
}

impl SkipReason {
    pub const ALL: [SkipReason; 5] = [
        SkipReason::Parse,
        SkipReason::TimeSignature,
        SkipReason::Genre,
        SkipReason::Confidence,
        SkipReason::NoPhrases,
    ];

    pub fn code(self) -> &'static str {
        match self {
            SkipReason::Parse => "parse-error",
            SkipReason::TimeSignature => "time-signature",
            SkipReason::Genre => "genre",
            SkipReason::Confidence => "confidence",
            SkipReason::NoPhrases => "no-phrases",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Filters a song, merges its instruments into the five families, crops the
/// pitch range and cuts consecutive non-overlapping phrases. Trailing bars
/// that do not fill a phrase are dropped, as are phrases with no notes.
pub fn cleanse_and_segment(
    song: &MidiSong,
    cfg: &CleanseConfig,
    meta: Option<&SongMetadata>,
) -> Result<Vec<PianoRollPhrase>, SkipReason> {
    if cfg.phrase_bars == 0 {
        return Err(SkipReason::NoPhrases);
    }
    let q = quantize(song, cfg.steps_per_bar).map_err(|_| SkipReason::TimeSignature)?;
    if let Some(m) = meta {
        if let Some(genre) = &cfg.genre_filter {
            if !m.genre.eq_ignore_ascii_case(genre) {
                return Err(SkipReason::Genre);
            }
        }
        if m.confidence < cfg.min_confidence {
            return Err(SkipReason::Confidence);
        }
    }
    let layout = BarLayout {
        steps: cfg.steps_per_bar,
        ..BarLayout::RAW
    };
    let n_bars = q.end_step.div_ceil(cfg.steps_per_bar);
    let n_phrases = n_bars / cfg.phrase_bars;
    if n_phrases == 0 {
        return Err(SkipReason::NoPhrases);
    }
    let used_bars = n_phrases * cfg.phrase_bars;
    let mut per_track: Vec<Vec<PianoRollBar>> = Vec::new();
    let mut families = Vec::new();
    for t in &q.tracks {
        let family = classify_track(t.program, t.is_drum);
        let bars = encode_notes(&t.notes, family, layout, n_bars).expect("quantized notes lie inside the song");
        per_track.push(bars.into_iter().take(used_bars).collect());
        families.push(family);
    }
    let merged: Vec<PianoRollBar> = (0..used_bars)
        .map(|b| {
            let cropped: Vec<PianoRollBar> = per_track
                .iter()
                .map(|bars| crop_bar(&bars[b], cfg.steps_per_bar))
                .collect();
            merge_tracks(&cropped, &families).expect("uniform single-track bars")
        })
        .collect();
    let phrases: Vec<PianoRollPhrase> = merged
        .chunks(cfg.phrase_bars)
        .map(|c| PianoRollPhrase::new(c.to_vec(), TrackFamily::ALL.to_vec()).expect("uniform bars"))
        .filter(|p| !p.is_empty())
        .collect();
    if phrases.is_empty() {
        return Err(SkipReason::NoPhrases);
    }
    Ok(phrases)
}

fn crop_bar(bar: &PianoRollBar, steps: usize) -> PianoRollBar {
    if steps == STEPS_PER_BAR {
        crop_pitch_range(bar).expect("raw layout")
    } else {
        crop_rows(bar, LOWEST_CROPPED_PITCH as usize, CROPPED_PITCHES).expect("raw layout has 128 rows")
    }
}
