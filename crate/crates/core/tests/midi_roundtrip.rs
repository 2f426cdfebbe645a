use musegan_core::midi::{cleanse_and_segment, parse_midi, phrases_to_midi, CleanseConfig};
use musegan_core::pianoroll::{decode_notes, encode_notes, BarLayout, NoteEvent, PhraseShape, PianoRollPhrase, TrackFamily};
use proptest::prelude::*;

const GRID: usize = 6;
const TOTAL: usize = 4 * 96;

/// Per track: notes on a few pitches, each at least six steps long and
/// twelve steps clear of the next one, so snapping never merges notes.
fn track_notes() -> impl Strategy<Value = Vec<NoteEvent>> {
    prop::collection::vec((0u8..84, prop::collection::vec((12usize..40, 6usize..30), 1..6)), 0..4).prop_map(|rows| {
        let mut notes = Vec::new();
        let mut used = Vec::new();
        for (row, spans) in rows {
            if used.contains(&row) {
                continue;
            }
            used.push(row);
            let mut t = 0;
            for (gap, dur) in spans {
                let onset = t + gap - 12;
                if onset + dur > TOTAL {
                    break;
                }
                notes.push(NoteEvent {
                    onset,
                    duration: dur,
                    pitch: 24 + row,
                    track: 0,
                });
                t = onset + dur + 12;
            }
        }
        notes
    })
}

fn snap(s: usize) -> usize {
    let r = s % GRID;
    if 2 * r >= GRID {
        s - r + GRID
    } else {
        s - r
    }
}

/// Expected (pitch, onset, duration) after sixteenth-note export.
fn expected(notes: &[NoteEvent], drums: bool) -> Vec<(u8, usize, usize)> {
    let mut out: Vec<(u8, usize, usize)> = notes
        .iter()
        .map(|n| {
            let on = snap(n.onset).min(TOTAL - GRID);
            let off = if drums {
                on + GRID
            } else {
                snap(n.onset + n.duration).max(on + GRID).min(TOTAL)
            };
            (n.pitch, on, off - on)
        })
        .collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn export_then_ingest_keeps_notes_on_the_sixteenth_grid(tracks in prop::collection::vec(track_notes(), 5)) {
        let layout = BarLayout::CROPPED;
        let mut phrase = PianoRollPhrase::empty(PhraseShape::DEFAULT, TrackFamily::ALL.to_vec()).unwrap();
        for (k, notes) in tracks.iter().enumerate() {
            let family = TrackFamily::ALL[k];
            let rolls = encode_notes(notes, family, layout, 4).unwrap();
            for (b, roll) in rolls.iter().enumerate() {
                for (step, row) in roll.active(0) {
                    phrase.bars_mut()[b].set(step, row, k, true);
                }
            }
        }
        prop_assume!(!phrase.is_empty());
        let bytes = phrases_to_midi(std::slice::from_ref(&phrase));
        let song = parse_midi(&bytes).unwrap();
        let back = cleanse_and_segment(&song, &CleanseConfig::default(), None).unwrap();
        prop_assert_eq!(back.len(), 1);
        for (k, notes) in tracks.iter().enumerate() {
            let family = TrackFamily::ALL[k];
            let mut got: Vec<(u8, usize, usize)> = decode_notes(back[0].bars(), k, family)
                .into_iter()
                .map(|n| (n.pitch, n.onset, if family.is_drums() { GRID } else { n.duration }))
                .collect();
            got.sort();
            prop_assert_eq!(&got, &expected(notes, family.is_drums()), "{}", family);
            prop_assert!(got.iter().all(|n| n.1 % GRID == 0));
        }
    }
}
