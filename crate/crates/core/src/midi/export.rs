//! Piano-roll -> Standard MIDI File export.

use crate::pianoroll::{decode_notes, NoteEvent, PianoRollBar, PianoRollPhrase, TrackFamily};

use super::parse::DRUM_CHANNEL;

/// General MIDI program and channel used for each family on export.
pub fn export_program(family: TrackFamily) -> (u8, u8) {
    match family {
        TrackFamily::Bass => (33, 0),
        TrackFamily::Drums => (0, DRUM_CHANNEL),
        TrackFamily::Guitar => (25, 1),
        TrackFamily::Piano => (0, 2),
        TrackFamily::Strings => (48, 3),
    }
}

/// Notes of each track snapped to a sixteenth-note grid.
///
/// Onsets and offsets round to the nearest grid line, every note lasts at
/// least one grid cell, and overlapping notes of one pitch are merged.
pub fn sixteenth_notes(bars: &[PianoRollBar], families: &[TrackFamily]) -> Vec<Vec<NoteEvent>> {
    let Some(first) = bars.first() else {
        return vec![Vec::new(); families.len()];
    };
    let grid = (first.steps() / 16).max(1);
    let total = first.steps() * bars.len();
    let snap = |s: usize| (s + grid / 2) / grid * grid;
    families
        .iter()
        .enumerate()
        .map(|(track, &family)| {
            let mut notes: Vec<NoteEvent> = decode_notes(bars, track, family)
                .into_iter()
                .map(|n| {
                    let mut on = snap(n.onset);
                    if on + grid > total {
                        on = total - grid;
                    }
                    let off = if family.is_drums() {
                        on + grid
                    } else {
                        snap(n.onset + n.duration).clamp(on + grid, total)
                    };
                    NoteEvent {
                        onset: on,
                        duration: off - on,
                        ..n
                    }
                })
                .collect();
            notes.sort_by_key(|n| (n.pitch, n.onset));
            let mut merged: Vec<NoteEvent> = Vec::with_capacity(notes.len());
            for n in notes {
                match merged.last_mut() {
                    Some(prev) if prev.pitch == n.pitch && n.onset < prev.onset + prev.duration => {
                        let end = (prev.onset + prev.duration).max(n.onset + n.duration);
                        prev.duration = end - prev.onset;
                    }
                    _ => merged.push(n),
                }
            }
            merged.sort();
            merged
        })
        .collect()
}

fn varlen(mut v: u32, out: &mut Vec<u8>) {
    let mut stack = vec![(v & 0x7f) as u8];
    v >>= 7;
    while v > 0 {
        stack.push((v & 0x7f) as u8 | 0x80);
        v >>= 7;
    }
    out.extend(stack.iter().rev());
}

/// Track chunk with end-of-track at `end` or after the last event.
fn chunk(events: &mut [(u64, u8, Vec<u8>)], end: u64) -> Vec<u8> {
    events.sort_by_key(|e| (e.0, e.1));
    let mut body = Vec::new();
    let mut last = 0;
    for (tick, _, bytes) in events.iter() {
        varlen((tick - last) as u32, &mut body);
        body.extend_from_slice(bytes);
        last = *tick;
    }
    varlen((end.max(last) - last) as u32, &mut body);
    body.extend_from_slice(&[0xff, 0x2f, 0x00]);
    let mut out = b"MTrk".to_vec();
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend(body);
    out
}

/// Writes consecutive phrases as one format-1 file at 120 BPM in 4/4, one
/// tick per time step (so a quarter note is `steps / 4` ticks). Every track
/// ends at the last bar line, so trailing silent bars survive re-ingestion.
pub fn phrases_to_midi(phrases: &[PianoRollPhrase]) -> Vec<u8> {
    let bars: Vec<PianoRollBar> = phrases.iter().flat_map(|p| p.bars().iter().cloned()).collect();
    let families: Vec<TrackFamily> = phrases.first().map(|p| p.families().to_vec()).unwrap_or_default();
    let steps = bars.first().map_or(96, PianoRollBar::steps);
    let tpb = (steps / 4).max(1) as u16;

    let mut out = b"MThd".to_vec();
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(families.len() as u16 + 1).to_be_bytes());
    out.extend_from_slice(&tpb.to_be_bytes());

    let mut conductor = vec![
        (0, 0, vec![0xff, 0x51, 0x03, 0x07, 0xa1, 0x20]),
        (0, 1, vec![0xff, 0x58, 0x04, 4, 2, 24, 8]),
    ];
    let end = (steps * bars.len()) as u64;
    out.extend(chunk(&mut conductor, end));

    for (family, notes) in families.iter().zip(sixteenth_notes(&bars, &families)) {
        let (program, channel) = export_program(*family);
        let name = family.name().as_bytes();
        let mut meta = vec![0xff, 0x03, name.len() as u8];
        meta.extend_from_slice(name);
        let mut events = vec![(0, 0, meta), (0, 1, vec![0xc0 | channel, program])];
        for n in notes {
            let start = n.onset as u64;
            let end = (n.onset + n.duration) as u64;
            // note-offs sort before note-ons on the same tick
            events.push((start, 3, vec![0x90 | channel, n.pitch, 100]));
            events.push((end, 2, vec![0x80 | channel, n.pitch, 0]));
        }
        out.extend(chunk(&mut events, end));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pianoroll::{BarLayout, PhraseShape};

    #[test]
    fn snaps_to_sixteenths() {
        let shape = PhraseShape {
            bars: 1,
            ..PhraseShape::DEFAULT
        };
        let mut phrase = PianoRollPhrase::empty(shape, TrackFamily::ALL.to_vec()).unwrap();
        let piano = TrackFamily::Piano.code() as usize;
        let drums = TrackFamily::Drums.code() as usize;
        // run of 3 cells at steps 7..10 -> note [7, 11) -> [6, 12)
        for s in 7..10 {
            phrase.bars_mut()[0].set(s, 40, piano, true);
        }
        phrase.bars_mut()[0].set(95, 10, drums, true);
        let notes = sixteenth_notes(phrase.bars(), phrase.families());
        assert_eq!((notes[piano][0].onset, notes[piano][0].duration), (6, 6));
        assert_eq!((notes[drums][0].onset, notes[drums][0].duration), (90, 6));
        assert_eq!(BarLayout::CROPPED.lowest_pitch + 40, notes[piano][0].pitch);
    }

    #[test]
    fn varlen_encoding() {
        let mut v = Vec::new();
        varlen(480, &mut v);
        assert_eq!(v, vec![0x83, 0x60]);
        v.clear();
        varlen(0, &mut v);
        assert_eq!(v, vec![0]);
    }
}
