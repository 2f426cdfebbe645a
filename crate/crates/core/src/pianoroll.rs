//! Multi-track binary piano-rolls.
//!
//! A bar is an `R x S x M` binary tensor (time step, pitch, track) stored
//! row-major with the track index fastest. A phrase is `T` bars of equal
//! shape. Row `s` of a bar holds MIDI pitch `lowest_pitch + s`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const STEPS_PER_BAR: usize = 96;
pub const RAW_PITCHES: usize = 128;
pub const CROPPED_PITCHES: usize = 84;
/// MIDI number of C1, the lowest row after cropping.
pub const LOWEST_CROPPED_PITCH: u8 = 24;
pub const BARS_PER_PHRASE: usize = 4;
pub const TRACK_COUNT: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PianoRollError {
    #[error("pitch {0} outside the MIDI range 0-127")]
    PitchOutOfRange(u8),
    #[error("pitch {pitch} outside the roll window [{lowest}, {})", *lowest as usize + pitches)]
    PitchOutsideWindow { pitch: u8, lowest: u8, pitches: usize },
    #[error("note at step {onset} lasting {duration} exceeds the {total}-step roll")]
    EventOutOfRange { onset: usize, duration: usize, total: usize },
    #[error("note duration must be at least one step")]
    ZeroDuration,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty track mapping")]
    EmptyMapping,
    #[error("unknown track family '{0}'")]
    UnknownFamily(String),
}

/// The five instrument families the tracks are merged into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrackFamily {
    Bass,
    Drums,
    Guitar,
    Piano,
    Strings,
}

impl TrackFamily {
    pub const ALL: [TrackFamily; 5] = [
        TrackFamily::Bass,
        TrackFamily::Drums,
        TrackFamily::Guitar,
        TrackFamily::Piano,
        TrackFamily::Strings,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrackFamily::Bass => "bass",
            TrackFamily::Drums => "drums",
            TrackFamily::Guitar => "guitar",
            TrackFamily::Piano => "piano",
            TrackFamily::Strings => "strings",
        }
    }

    /// One-letter column label used in report tables.
    pub fn letter(self) -> char {
        match self {
            TrackFamily::Bass => 'B',
            TrackFamily::Drums => 'D',
            TrackFamily::Guitar => 'G',
            TrackFamily::Piano => 'P',
            TrackFamily::Strings => 'S',
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<TrackFamily> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_drums(self) -> bool {
        self == TrackFamily::Drums
    }
}

impl fmt::Display for TrackFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrackFamily {
    type Err = PianoRollError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PianoRollError::UnknownFamily(s.to_string()))
    }
}

/// Time and pitch extents of one bar plus the MIDI number of row 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BarLayout {
    pub steps: usize,
    pub pitches: usize,
    pub lowest_pitch: u8,
}

impl BarLayout {
    pub const RAW: BarLayout = BarLayout {
        steps: STEPS_PER_BAR,
        pitches: RAW_PITCHES,
        lowest_pitch: 0,
    };
    pub const CROPPED: BarLayout = BarLayout {
        steps: STEPS_PER_BAR,
        pitches: CROPPED_PITCHES,
        lowest_pitch: LOWEST_CROPPED_PITCH,
    };

    pub fn pitch_class(&self, row: usize) -> usize {
        (self.lowest_pitch as usize + row) % 12
    }

    fn row_of(&self, pitch: u8) -> Result<usize, PianoRollError> {
        if pitch > 127 {
            return Err(PianoRollError::PitchOutOfRange(pitch));
        }
        let row = pitch.checked_sub(self.lowest_pitch).map(usize::from);
        match row {
            Some(r) if r < self.pitches => Ok(r),
            _ => Err(PianoRollError::PitchOutsideWindow {
                pitch,
                lowest: self.lowest_pitch,
                pitches: self.pitches,
            }),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PianoRollBar {
    layout: BarLayout,
    tracks: usize,
    cells: Vec<bool>,
}

impl PianoRollBar {
    pub fn empty(layout: BarLayout, tracks: usize) -> Self {
        PianoRollBar {
            layout,
            tracks,
            cells: vec![false; layout.steps * layout.pitches * tracks],
        }
    }

    pub fn from_cells(layout: BarLayout, tracks: usize, cells: Vec<bool>) -> Result<Self, PianoRollError> {
        if cells.len() != layout.steps * layout.pitches * tracks {
            return Err(PianoRollError::ShapeMismatch(format!(
                "{} cells for {}x{}x{tracks}",
                cells.len(),
                layout.steps,
                layout.pitches
            )));
        }
        Ok(PianoRollBar { layout, tracks, cells })
    }

    pub fn layout(&self) -> BarLayout {
        self.layout
    }

    pub fn steps(&self) -> usize {
        self.layout.steps
    }

    pub fn pitches(&self) -> usize {
        self.layout.pitches
    }

    pub fn tracks(&self) -> usize {
        self.tracks
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    fn index(&self, step: usize, pitch: usize, track: usize) -> usize {
        debug_assert!(step < self.layout.steps && pitch < self.layout.pitches && track < self.tracks);
        (step * self.layout.pitches + pitch) * self.tracks + track
    }

    pub fn get(&self, step: usize, pitch: usize, track: usize) -> bool {
        self.cells[self.index(step, pitch, track)]
    }

    pub fn set(&mut self, step: usize, pitch: usize, track: usize, on: bool) {
        let i = self.index(step, pitch, track);
        self.cells[i] = on;
    }

    pub fn track_is_empty(&self, track: usize) -> bool {
        (0..self.layout.steps * self.layout.pitches).all(|i| !self.cells[i * self.tracks + track])
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    /// `(step, pitch row)` of every active cell of one track.
    pub fn active(&self, track: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let p = self.layout.pitches;
        (0..self.layout.steps * p)
            .filter(move |i| self.cells[i * self.tracks + track])
            .map(move |i| (i / p, i % p))
    }

    /// Copy holding only `track`.
    pub fn single_track(&self, track: usize) -> PianoRollBar {
        let cells = self.cells.iter().skip(track).step_by(self.tracks).copied().collect();
        PianoRollBar {
            layout: self.layout,
            tracks: 1,
            cells,
        }
    }
}

impl fmt::Debug for PianoRollBar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on = self.cells.iter().filter(|&&c| c).count();
        write!(
            f,
            "PianoRollBar({}x{}x{}, lowest {}, {on} active)",
            self.layout.steps, self.layout.pitches, self.tracks, self.layout.lowest_pitch
        )
    }
}

/// Extents of a phrase tensor `T x R x S x M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PhraseShape {
    pub bars: usize,
    pub layout: BarLayout,
    pub tracks: usize,
}

impl PhraseShape {
    pub const DEFAULT: PhraseShape = PhraseShape {
        bars: BARS_PER_PHRASE,
        layout: BarLayout::CROPPED,
        tracks: TRACK_COUNT,
    };

    pub fn dims(&self) -> [usize; 4] {
        [self.bars, self.layout.steps, self.layout.pitches, self.tracks]
    }

    pub fn cells(&self) -> usize {
        self.dims().iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PianoRollPhrase {
    bars: Vec<PianoRollBar>,
    families: Vec<TrackFamily>,
}

impl PianoRollPhrase {
    pub fn new(bars: Vec<PianoRollBar>, families: Vec<TrackFamily>) -> Result<Self, PianoRollError> {
        let first = bars.first().ok_or_else(|| PianoRollError::ShapeMismatch("phrase without bars".into()))?;
        if let Some(b) = bars.iter().find(|b| b.layout != first.layout || b.tracks != first.tracks) {
            return Err(PianoRollError::ShapeMismatch(format!("{first:?} vs {b:?}")));
        }
        if families.len() != first.tracks {
            return Err(PianoRollError::ShapeMismatch(format!(
                "{} track labels for {} tracks",
                families.len(),
                first.tracks
            )));
        }
        Ok(PianoRollPhrase { bars, families })
    }

    pub fn empty(shape: PhraseShape, families: Vec<TrackFamily>) -> Result<Self, PianoRollError> {
        Self::new(vec![PianoRollBar::empty(shape.layout, shape.tracks); shape.bars], families)
    }

    /// Builds a phrase from values laid out as `T x R x S x M`, treating a cell as
    /// active iff its value is strictly positive.
    pub fn from_values(shape: PhraseShape, families: Vec<TrackFamily>, values: &[f64]) -> Result<Self, PianoRollError> {
        if values.len() != shape.cells() {
            return Err(PianoRollError::ShapeMismatch(format!(
                "{} values for {:?}",
                values.len(),
                shape.dims()
            )));
        }
        let per_bar = shape.cells() / shape.bars;
        let bars = values
            .chunks(per_bar)
            .map(|c| PianoRollBar::from_cells(shape.layout, shape.tracks, binarize(c)))
            .collect::<Result<_, _>>()?;
        Self::new(bars, families)
    }

    pub fn shape(&self) -> PhraseShape {
        PhraseShape {
            bars: self.bars.len(),
            layout: self.bars[0].layout,
            tracks: self.bars[0].tracks,
        }
    }

    pub fn bars(&self) -> &[PianoRollBar] {
        &self.bars
    }

    pub fn bars_mut(&mut self) -> &mut [PianoRollBar] {
        &mut self.bars
    }

    pub fn families(&self) -> &[TrackFamily] {
        &self.families
    }

    pub fn track_of(&self, family: TrackFamily) -> Option<usize> {
        self.families.iter().position(|&f| f == family)
    }

    pub fn is_empty(&self) -> bool {
        self.bars.iter().all(PianoRollBar::is_empty)
    }

    /// Cells as network input: active -> 1, inactive -> -1.
    pub fn to_signed_values(&self) -> Vec<f64> {
        self.bars
            .iter()
            .flat_map(|b| b.cells.iter().map(|&c| if c { 1.0 } else { -1.0 }))
            .collect()
    }

    /// Keeps the `pitches` rows starting at MIDI `lowest_pitch` and the
    /// given tracks, in the given order.
    pub fn restrict(&self, lowest_pitch: u8, pitches: usize, families: &[TrackFamily]) -> Result<PianoRollPhrase, PianoRollError> {
        let layout = self.bars[0].layout;
        let first = (lowest_pitch as usize)
            .checked_sub(layout.lowest_pitch as usize)
            .filter(|f| f + pitches <= layout.pitches)
            .ok_or_else(|| {
                PianoRollError::ShapeMismatch(format!(
                    "pitches {lowest_pitch}..{} outside {}..{}",
                    lowest_pitch as usize + pitches,
                    layout.lowest_pitch,
                    layout.lowest_pitch as usize + layout.pitches
                ))
            })?;
        let tracks = families
            .iter()
            .map(|&f| self.track_of(f).ok_or_else(|| PianoRollError::UnknownFamily(f.name().to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let bars = self
            .bars
            .iter()
            .map(|bar| {
                let cropped = crop_rows(bar, first, pitches)?;
                let mut out = PianoRollBar::empty(cropped.layout, tracks.len());
                for step in 0..cropped.steps() {
                    for row in 0..pitches {
                        for (k, &t) in tracks.iter().enumerate() {
                            if cropped.get(step, row, t) {
                                out.set(step, row, k, true);
                            }
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, PianoRollError>>()?;
        PianoRollPhrase::new(bars, families.to_vec())
    }

    /// A one-track phrase holding `track` of every bar.
    pub fn single_track(&self, track: usize) -> PianoRollPhrase {
        PianoRollPhrase {
            bars: self.bars.iter().map(|b| b.single_track(track)).collect(),
            families: vec![self.families[track]],
        }
    }
}

/// Note in absolute time steps from the start of a roll.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoteEvent {
    pub onset: usize,
    pub duration: usize,
    pub pitch: u8,
    pub track: usize,
}

/// Renders one track's notes into `n_bars` single-track bars.
///
/// Melodic notes cover `[onset, onset + duration - 1)`: the last step is
/// left as a rest so repeated pitches stay distinguishable, which drops any
/// note shorter than two steps. Drum notes mark only their onset.
pub fn encode_notes(
    events: &[NoteEvent],
    family: TrackFamily,
    layout: BarLayout,
    n_bars: usize,
) -> Result<Vec<PianoRollBar>, PianoRollError> {
    let total = layout.steps * n_bars;
    let mut bars = vec![PianoRollBar::empty(layout, 1); n_bars];
    for e in events {
        let row = layout.row_of(e.pitch)?;
        if e.duration == 0 {
            return Err(PianoRollError::ZeroDuration);
        }
        if e.onset + e.duration > total {
            return Err(PianoRollError::EventOutOfRange {
                onset: e.onset,
                duration: e.duration,
                total,
            });
        }
        let span = if family.is_drums() {
            e.onset..e.onset + 1
        } else {
            e.onset..e.onset + e.duration - 1
        };
        for step in span {
            bars[step / layout.steps].set(step % layout.steps, row, 0, true);
        }
    }
    Ok(bars)
}

/// Inverse scan of [`encode_notes`]: every maximal run of active cells in a
/// pitch row becomes one note. Melodic runs gain back the one-step rest;
/// drum cells are single-step onsets.
pub fn decode_notes(bars: &[PianoRollBar], track: usize, family: TrackFamily) -> Vec<NoteEvent> {
    let Some(first) = bars.first() else {
        return Vec::new();
    };
    let layout = first.layout;
    let total = layout.steps * bars.len();
    let on = |step: usize, row: usize| bars[step / layout.steps].get(step % layout.steps, row, track);
    let mut notes = Vec::new();
    for row in 0..layout.pitches {
        let pitch = layout.lowest_pitch + row as u8;
        let mut step = 0;
        while step < total {
            if !on(step, row) {
                step += 1;
                continue;
            }
            if family.is_drums() {
                notes.push(NoteEvent {
                    onset: step,
                    duration: 1,
                    pitch,
                    track,
                });
                step += 1;
                continue;
            }
            let start = step;
            while step < total && on(step, row) {
                step += 1;
            }
            notes.push(NoteEvent {
                onset: start,
                duration: step - start + 1,
                pitch,
                track,
            });
        }
    }
    notes.sort();
    notes
}

/// Maximal runs of active cells per pitch row within a single bar,
/// as `(pitch row, start step, length)`.
pub fn bar_runs(bar: &PianoRollBar, track: usize) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    for row in 0..bar.pitches() {
        let mut step = 0;
        while step < bar.steps() {
            if bar.get(step, row, track) {
                let start = step;
                while step < bar.steps() && bar.get(step, row, track) {
                    step += 1;
                }
                runs.push((row, start, step - start));
            } else {
                step += 1;
            }
        }
    }
    runs
}

/// Keeps MIDI pitches 24 (C1) through 107 (B7) of a full 128-row bar.
pub fn crop_pitch_range(bar: &PianoRollBar) -> Result<PianoRollBar, PianoRollError> {
    if bar.layout != BarLayout::RAW {
        return Err(PianoRollError::ShapeMismatch(format!(
            "cropping needs a {}-step, 128-pitch bar starting at MIDI 0, got {bar:?}",
            STEPS_PER_BAR
        )));
    }
    crop_rows(bar, LOWEST_CROPPED_PITCH as usize, CROPPED_PITCHES)
}

/// Keeps `count` rows starting at `first`.
pub fn crop_rows(bar: &PianoRollBar, first: usize, count: usize) -> Result<PianoRollBar, PianoRollError> {
    if first + count > bar.pitches() {
        return Err(PianoRollError::ShapeMismatch(format!(
            "rows [{first}, {}) of {}",
            first + count,
            bar.pitches()
        )));
    }
    let layout = BarLayout {
        steps: bar.steps(),
        pitches: count,
        lowest_pitch: bar.layout.lowest_pitch + first as u8,
    };
    let mut out = PianoRollBar::empty(layout, bar.tracks);
    for step in 0..bar.steps() {
        for row in 0..count {
            for track in 0..bar.tracks {
                if bar.get(step, first + row, track) {
                    out.set(step, row, track, true);
                }
            }
        }
    }
    Ok(out)
}

/// Merges single-track bars into the five family channels by binary OR.
/// `mapping[i]` is the family of `rolls[i]`.
pub fn merge_tracks(rolls: &[PianoRollBar], mapping: &[TrackFamily]) -> Result<PianoRollBar, PianoRollError> {
    if mapping.is_empty() {
        return Err(PianoRollError::EmptyMapping);
    }
    if rolls.len() != mapping.len() {
        return Err(PianoRollError::ShapeMismatch(format!(
            "{} rolls, {} family labels",
            rolls.len(),
            mapping.len()
        )));
    }
    let layout = rolls[0].layout;
    let mut out = PianoRollBar::empty(layout, TRACK_COUNT);
    for (roll, family) in rolls.iter().zip(mapping) {
        if roll.layout != layout || roll.tracks != 1 {
            return Err(PianoRollError::ShapeMismatch(format!("{roll:?} vs {layout:?} single-track")));
        }
        let channel = family.code() as usize;
        for (i, &c) in roll.cells.iter().enumerate() {
            if c {
                out.cells[i * TRACK_COUNT + channel] = true;
            }
        }
    }
    Ok(out)
}

/// Threshold at zero: a cell is on iff its value is strictly positive.
pub fn binarize(raw: &[f64]) -> Vec<bool> {
    raw.iter().map(|&v| v > 0.0).collect()
}

/// Pitch-class histogram of one track, scaled to unit Euclidean norm
/// (the zero vector for an empty track).
pub fn chroma(bar: &PianoRollBar, track: usize) -> [f64; 12] {
    let mut c = [0.0; 12];
    for (_, row) in bar.active(track) {
        c[bar.layout.pitch_class(row)] += 1.0;
    }
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut c {
            *x /= norm;
        }
    }
    c
}
