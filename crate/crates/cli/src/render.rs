//! Plain PPM piano-roll plots.

use std::fmt::Write as _;

use musegan_core::{PianoRollPhrase, TrackFamily};

pub const BACKGROUND: [u8; 3] = [255, 255, 255];

pub fn track_color(family: TrackFamily) -> [u8; 3] {
    match family {
        TrackFamily::Bass => [0, 200, 230],
        TrackFamily::Drums => [255, 110, 180],
        TrackFamily::Guitar => [240, 210, 0],
        TrackFamily::Piano => [255, 150, 30],
        TrackFamily::Strings => [60, 110, 230],
    }
}

/// Multiplies the colors of the active tracks onto white, so overlapping
/// notes come out darker than either track alone.
fn composite(colors: impl Iterator<Item = [u8; 3]>) -> [u8; 3] {
    let mut c = [255u32; 3];
    for col in colors {
        for k in 0..3 {
            c[k] = c[k] * col[k] as u32 / 255;
        }
    }
    c.map(|v| v as u8)
}

/// RGB pixels, row-major, time left to right and pitch bottom to top.
pub fn pixels(phrase: &PianoRollPhrase, scale: usize) -> (usize, usize, Vec<[u8; 3]>) {
    let shape = phrase.shape();
    let (steps, pitches) = (shape.layout.steps, shape.layout.pitches);
    let (w, h) = (shape.bars * steps * scale, pitches * scale);
    let mut out = vec![BACKGROUND; w * h];
    for (b, bar) in phrase.bars().iter().enumerate() {
        for step in 0..steps {
            for row in 0..pitches {
                let active = phrase
                    .families()
                    .iter()
                    .enumerate()
                    .filter(|&(t, _)| bar.get(step, row, t))
                    .map(|(_, &f)| track_color(f));
                let c = composite(active);
                if c == BACKGROUND {
                    continue;
                }
                let x0 = (b * steps + step) * scale;
                let y0 = (pitches - 1 - row) * scale;
                for y in y0..y0 + scale {
                    out[y * w + x0..y * w + x0 + scale].fill(c);
                }
            }
        }
    }
    (w, h, out)
}

/// Plain (ASCII) PPM, one pixel per line.
pub fn to_ppm(phrase: &PianoRollPhrase, scale: usize) -> String {
    let (w, h, px) = pixels(phrase, scale);
    let mut s = format!("P3\n{w} {h}\n255\n");
    for [r, g, b] in px {
        let _ = writeln!(s, "{r} {g} {b}");
    }
    s
}
