//! Binary phrase store.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic         b"MGPR"
//! version       u16 (= 1)
//! bars T        u16
//! steps R       u16
//! pitches S     u16
//! tracks M      u16
//! lowest pitch  u8   MIDI number of pitch row 0
//! families      M x u8 (bass 0, drums 1, guitar 2, piano 3, strings 4)
//! count         u64
//! payload       count x ceil(T*R*S*M / 8) bytes
//! ```
//!
//! Each phrase is its cells in `(bar, step, pitch, track)` row-major order,
//! packed least-significant bit first; unused trailing bits are zero.

use std::fs;
use std::path::Path;

use super::MidiError;
use crate::pianoroll::{BarLayout, PhraseShape, PianoRollBar, PianoRollPhrase, TrackFamily};

pub const STORE_MAGIC: &[u8; 4] = b"MGPR";
pub const STORE_VERSION: u16 = 1;

/// Phrases of one uniform shape plus their track labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetStore {
    pub shape: PhraseShape,
    pub families: Vec<TrackFamily>,
    pub phrases: Vec<PianoRollPhrase>,
}

impl DatasetStore {
    pub fn new(shape: PhraseShape, families: Vec<TrackFamily>) -> Self {
        DatasetStore {
            shape,
            families,
            phrases: Vec::new(),
        }
    }

    /// Store holding `phrases`, which must share one shape and labelling.
    pub fn from_phrases(phrases: Vec<PianoRollPhrase>) -> Result<Self, MidiError> {
        let first = phrases.first().ok_or_else(|| MidiError::Store("cannot infer shape of empty store".into()))?;
        let mut store = DatasetStore::new(first.shape(), first.families().to_vec());
        for p in phrases {
            store.push(p)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, phrase: PianoRollPhrase) -> Result<(), MidiError> {
        if phrase.shape() != self.shape || phrase.families() != self.families.as_slice() {
            return Err(MidiError::Store(format!(
                "phrase {:?} does not match store {:?}",
                phrase.shape().dims(),
                self.shape.dims()
            )));
        }
        self.phrases.push(phrase);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    fn phrase_bytes(&self) -> usize {
        self.shape.cells().div_ceil(8)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.shape;
        let mut out = Vec::with_capacity(32 + self.len() * self.phrase_bytes());
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        for d in [s.bars, s.layout.steps, s.layout.pitches, s.tracks] {
            out.extend_from_slice(&(d as u16).to_le_bytes());
        }
        out.push(s.layout.lowest_pitch);
        out.extend(self.families.iter().map(|f| f.code()));
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for p in &self.phrases {
            let mut packed = vec![0u8; self.phrase_bytes()];
            let cells = p.bars().iter().flat_map(|b| b.cells().iter());
            for (i, &c) in cells.enumerate() {
                if c {
                    packed[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&packed);
        }
        out
    }

    /// Decodes a store. The header and total length are validated before any
    /// phrase is decoded, so a truncated file yields an error and nothing else.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MidiError> {
        let bad = |m: String| MidiError::Store(m);
        if bytes.len() < 4 || &bytes[..4] != STORE_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let u16_at = |i: usize| -> Result<usize, MidiError> {
            bytes
                .get(i..i + 2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]) as usize)
                .ok_or_else(|| MidiError::Store("truncated header".into()))
        };
        let version = u16_at(4)? as u16;
        if version != STORE_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let (bars, steps, pitches, tracks) = (u16_at(6)?, u16_at(8)?, u16_at(10)?, u16_at(12)?);
        if bars == 0 || steps == 0 || pitches == 0 || tracks == 0 {
            return Err(bad("zero extent in header".into()));
        }
        let lowest = *bytes.get(14).ok_or_else(|| bad("truncated header".into()))?;
        if lowest as usize + pitches > 128 {
            return Err(bad(format!("pitch window {lowest}+{pitches} exceeds MIDI range")));
        }
        let fam_end = 15 + tracks;
        let families = bytes
            .get(15..fam_end)
            .ok_or_else(|| bad("truncated header".into()))?
            .iter()
            .map(|&c| TrackFamily::from_code(c).ok_or_else(|| bad(format!("unknown family code {c}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let count_bytes = bytes.get(fam_end..fam_end + 8).ok_or_else(|| bad("truncated header".into()))?;
        let count = u64::from_le_bytes(count_bytes.try_into().expect("8 bytes"));
        let shape = PhraseShape {
            bars,
            layout: BarLayout {
                steps,
                pitches,
                lowest_pitch: lowest,
            },
            tracks,
        };
        let mut store = DatasetStore::new(shape, families);
        let per = store.phrase_bytes();
        let payload = &bytes[fam_end + 8..];
        let expected = (count as u128) * per as u128;
        if payload.len() as u128 != expected {
            return Err(bad(format!(
                "payload is {} bytes, header promises {count} phrases of {per} bytes",
                payload.len()
            )));
        }
        let cells = shape.cells();
        let per_bar = cells / bars;
        for chunk in payload.chunks_exact(per) {
            let bits: Vec<bool> = (0..cells).map(|i| chunk[i / 8] >> (i % 8) & 1 == 1).collect();
            if !cells.is_multiple_of(8) && chunk[per - 1] >> (cells % 8) != 0 {
                return Err(bad("non-zero padding bits".into()));
            }
            let bars = bits
                .chunks(per_bar)
                .map(|c| PianoRollBar::from_cells(shape.layout, tracks, c.to_vec()).expect("sized from header"))
                .collect();
            let phrase = PianoRollPhrase::new(bars, store.families.clone()).expect("uniform bars");
            store.phrases.push(phrase);
        }
        Ok(store)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), MidiError> {
        fs::write(path.as_ref(), self.to_bytes()).map_err(|e| MidiError::Io(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, MidiError> {
        let bytes = fs::read(path.as_ref()).map_err(|e| MidiError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_bytes(&bytes)
    }
}
