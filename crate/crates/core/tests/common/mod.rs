#![allow(dead_code)]

pub mod gradcheck;

use musegan_core::midi::DatasetStore;
use musegan_core::models::Profile;
use musegan_core::pianoroll::{PhraseShape, PianoRollBar, PianoRollPhrase, TrackFamily};

/// Major and minor triads as (root, third, fifth) pitch classes.
pub const TRIADS: [[usize; 3]; 6] = [[0, 4, 7], [5, 9, 0], [7, 11, 2], [9, 0, 4], [2, 5, 9], [4, 7, 11]];

pub fn toy_shape() -> PhraseShape {
    let d = Profile::Toy.dims();
    PhraseShape {
        bars: d.bars,
        layout: musegan_core::pianoroll::BarLayout {
            steps: d.steps,
            pitches: d.pitches,
            lowest_pitch: d.lowest_pitch,
        },
        tracks: 2,
    }
}

/// Two-track toy corpus. Each bar holds one triad: guitar strikes it twice,
/// bass arpeggiates root, third and fifth, so both tracks share pitch
/// classes bar by bar.
pub fn toy_store() -> DatasetStore {
    let shape = toy_shape();
    let layout = shape.layout;
    let row = |pc: usize| (pc + 12 - layout.lowest_pitch as usize % 12) % 12;
    let (r, half) = (layout.steps, layout.steps / 2);
    let arp = [(0, r / 3), (r / 3, r / 3), (2 * (r / 3), r - 2 * (r / 3))];
    let mut phrases = Vec::new();
    for a in 0..TRIADS.len() {
        for b in 0..TRIADS.len() {
            let bars = [a, b]
                .iter()
                .map(|&c| {
                    let mut bar = PianoRollBar::empty(layout, 2);
                    for s in (0..r).filter(|s| s % half != half - 1) {
                        for &pc in &TRIADS[c] {
                            bar.set(s, row(pc), 1, true);
                        }
                    }
                    for (&pc, &(on, len)) in TRIADS[c].iter().zip(&arp) {
                        for s in on..on + len - 1 {
                            bar.set(s, row(pc), 0, true);
                        }
                    }
                    bar
                })
                .collect();
            phrases.push(PianoRollPhrase::new(bars, vec![TrackFamily::Bass, TrackFamily::Guitar]).unwrap());
        }
    }
    DatasetStore::from_phrases(phrases).unwrap()
}
