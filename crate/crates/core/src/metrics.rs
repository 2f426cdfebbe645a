//! Objective metrics over sets of phrases: empty bars (EB), used pitch
//! classes (UPC), qualified notes (QN), drum pattern (DP) and tonal
//! distance (TD).

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pianoroll::{bar_runs, chroma, PianoRollBar, PianoRollPhrase, TrackFamily};

/// Shortest note (in time steps) that counts as qualified.
pub const QUALIFIED_MIN_STEPS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no bars to evaluate")]
    NoBars,
    #[error("track {0} does not exist")]
    NoSuchTrack(usize),
    #[error("{metric} is undefined for the drums track")]
    DrumsTrack { metric: &'static str },
    #[error("no drums track")]
    NoDrums,
    #[error("track {0} has no notes")]
    NoNotes(usize),
    #[error("no drum onsets")]
    NoOnsets,
    #[error("tracks {0} and {1} are never active in the same bar")]
    NoCoActiveBars(usize, usize),
    #[error("phrases have inconsistent track labels")]
    MixedFamilies,
}

fn all_bars(phrases: &[PianoRollPhrase]) -> impl Iterator<Item = &PianoRollBar> {
    phrases.iter().flat_map(|p| p.bars().iter())
}

fn families(phrases: &[PianoRollPhrase]) -> Result<&[TrackFamily], MetricsError> {
    let first = phrases.first().ok_or(MetricsError::NoBars)?;
    if phrases.iter().any(|p| p.families() != first.families()) {
        return Err(MetricsError::MixedFamilies);
    }
    Ok(first.families())
}

fn pitched_track(phrases: &[PianoRollPhrase], track: usize, metric: &'static str) -> Result<(), MetricsError> {
    let fams = families(phrases)?;
    match fams.get(track) {
        None => Err(MetricsError::NoSuchTrack(track)),
        Some(f) if f.is_drums() => Err(MetricsError::DrumsTrack { metric }),
        Some(_) => Ok(()),
    }
}

fn percent(hits: usize, total: usize) -> f64 {
    100.0 * hits as f64 / total as f64
}

/// Percentage of bars in which `track` has no active cell.
pub fn empty_bars(phrases: &[PianoRollPhrase], track: usize) -> Result<f64, MetricsError> {
    let fams = families(phrases)?;
    if track >= fams.len() {
        return Err(MetricsError::NoSuchTrack(track));
    }
    let (mut empty, mut total) = (0, 0);
    for bar in all_bars(phrases) {
        total += 1;
        empty += bar.track_is_empty(track) as usize;
    }
    if total == 0 {
        return Err(MetricsError::NoBars);
    }
    Ok(percent(empty, total))
}

/// Distinct pitch classes used by `track` in one bar.
pub fn bar_pitch_classes(bar: &PianoRollBar, track: usize) -> usize {
    let mut seen = [false; 12];
    for (_, row) in bar.active(track) {
        seen[bar.layout().pitch_class(row)] = true;
    }
    seen.iter().filter(|&&s| s).count()
}

/// Mean number of pitch classes per bar. Empty bars count as zero.
pub fn used_pitch_classes(phrases: &[PianoRollPhrase], track: usize) -> Result<f64, MetricsError> {
    pitched_track(phrases, track, "UPC")?;
    let (mut sum, mut total) = (0, 0);
    for bar in all_bars(phrases) {
        sum += bar_pitch_classes(bar, track);
        total += 1;
    }
    if total == 0 {
        return Err(MetricsError::NoBars);
    }
    Ok(sum as f64 / total as f64)
}

/// Percentage of notes lasting at least [`QUALIFIED_MIN_STEPS`]. Notes are
/// maximal runs along one pitch row, cut at bar lines.
pub fn qualified_notes(phrases: &[PianoRollPhrase], track: usize) -> Result<f64, MetricsError> {
    pitched_track(phrases, track, "QN")?;
    let (mut good, mut total) = (0, 0);
    for bar in all_bars(phrases) {
        for (_, _, len) in bar_runs(bar, track) {
            total += 1;
            good += (len >= QUALIFIED_MIN_STEPS) as usize;
        }
    }
    if total == 0 {
        return Err(MetricsError::NoNotes(track));
    }
    Ok(percent(good, total))
}

/// Percentage of drum onsets on the 16-beat grid. An onset is the first
/// step of a run of active cells in a pitch row.
pub fn drum_pattern(phrases: &[PianoRollPhrase]) -> Result<f64, MetricsError> {
    let fams = families(phrases)?;
    let track = fams.iter().position(|f| f.is_drums()).ok_or(MetricsError::NoDrums)?;
    let (mut on_grid, mut total) = (0, 0);
    for bar in all_bars(phrases) {
        let grid = (bar.steps() / 16).max(1);
        for (_, start, _) in bar_runs(bar, track) {
            total += 1;
            on_grid += (start % grid == 0) as usize;
        }
    }
    if total == 0 {
        return Err(MetricsError::NoOnsets);
    }
    Ok(percent(on_grid, total))
}

/// Point in the 6-D tonal space: circle of fifths, minor thirds, major
/// thirds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TonalCentroid(pub [f64; 6]);

impl TonalCentroid {
    pub const RADII: [f64; 3] = [1.0, 1.0, 0.5];

    /// Centroid of a unit-normalized chroma vector.
    pub fn from_chroma(c: &[f64; 12]) -> Self {
        let [r1, r2, r3] = Self::RADII;
        let mut out = [0.0; 6];
        for (k, &w) in c.iter().enumerate() {
            let k = k as f64;
            let angles = [7.0 * PI / 6.0, 3.0 * PI / 2.0, 2.0 * PI / 3.0];
            let radii = [r1, r2, r3];
            for i in 0..3 {
                out[2 * i] += w * radii[i] * (k * angles[i]).sin();
                out[2 * i + 1] += w * radii[i] * (k * angles[i]).cos();
            }
        }
        TonalCentroid(out)
    }

    pub fn of_bar(bar: &PianoRollBar, track: usize) -> Self {
        Self::from_chroma(&chroma(bar, track))
    }

    pub fn distance(&self, other: &TonalCentroid) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn mean_td<'a>(
    pairs: impl Iterator<Item = (&'a PianoRollBar, &'a PianoRollBar)>,
    a: usize,
    b: usize,
) -> Result<f64, MetricsError> {
    let (mut sum, mut n) = (0.0, 0);
    for (x, y) in pairs {
        if x.track_is_empty(a) || y.track_is_empty(b) {
            continue;
        }
        sum += TonalCentroid::of_bar(x, a).distance(&TonalCentroid::of_bar(y, b));
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::NoCoActiveBars(a, b));
    }
    Ok(sum / n as f64)
}

/// Mean per-bar distance between the tonal centroids of two tracks, over
/// bars where both are active.
pub fn tonal_distance(phrases: &[PianoRollPhrase], a: usize, b: usize) -> Result<f64, MetricsError> {
    pitched_track(phrases, a, "TD")?;
    pitched_track(phrases, b, "TD")?;
    mean_td(all_bars(phrases).map(|bar| (bar, bar)), a, b)
}

/// [`tonal_distance`] after pairing the bars of `a` with a seeded random
/// permutation of the bars of `b`.
pub fn shuffled_tonal_distance(phrases: &[PianoRollPhrase], a: usize, b: usize, seed: u64) -> Result<f64, MetricsError> {
    pitched_track(phrases, a, "TD")?;
    pitched_track(phrases, b, "TD")?;
    let bars: Vec<&PianoRollBar> = all_bars(phrases).collect();
    let mut perm: Vec<usize> = (0..bars.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    mean_td(bars.iter().zip(&perm).map(|(x, &j)| (*x, bars[j])), a, b)
}

/// Canonical column order of the pairwise TD table.
pub const TD_PAIRS: [(TrackFamily, TrackFamily); 6] = [
    (TrackFamily::Bass, TrackFamily::Guitar),
    (TrackFamily::Bass, TrackFamily::Strings),
    (TrackFamily::Bass, TrackFamily::Piano),
    (TrackFamily::Guitar, TrackFamily::Strings),
    (TrackFamily::Guitar, TrackFamily::Piano),
    (TrackFamily::Strings, TrackFamily::Piano),
];

/// One named metric cell; `None` marks an undefined value.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricCell {
    pub key: String,
    pub value: Option<f64>,
}

/// All applicable metric cells of a phrase set.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub families: Vec<TrackFamily>,
    pub eb: Vec<(TrackFamily, f64)>,
    pub upc: Vec<(TrackFamily, Option<f64>)>,
    pub qn: Vec<(TrackFamily, Option<f64>)>,
    pub dp: Option<Option<f64>>,
    pub td: Vec<((TrackFamily, TrackFamily), Option<f64>)>,
    pub td_shuffled: Option<Vec<((TrackFamily, TrackFamily), Option<f64>)>>,
}

fn defined(r: Result<f64, MetricsError>) -> Result<Option<f64>, MetricsError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::NoNotes(_) | MetricsError::NoOnsets | MetricsError::NoCoActiveBars(..)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Computes every metric cell. Cells whose inputs are empty are reported
/// as undefined rather than as zero.
pub fn full_report(phrases: &[PianoRollPhrase]) -> Result<MetricsReport, MetricsError> {
    let fams = families(phrases)?.to_vec();
    if all_bars(phrases).next().is_none() {
        return Err(MetricsError::NoBars);
    }
    let ordered: Vec<(TrackFamily, usize)> = TrackFamily::ALL
        .iter()
        .filter_map(|&f| fams.iter().position(|&g| g == f).map(|i| (f, i)))
        .collect();
    let mut report = MetricsReport {
        families: fams.clone(),
        eb: Vec::new(),
        upc: Vec::new(),
        qn: Vec::new(),
        dp: None,
        td: Vec::new(),
        td_shuffled: None,
    };
    for &(f, i) in &ordered {
        report.eb.push((f, empty_bars(phrases, i)?));
        if f.is_drums() {
            report.dp = Some(defined(drum_pattern(phrases))?);
        } else {
            report.upc.push((f, Some(used_pitch_classes(phrases, i)?)));
            report.qn.push((f, defined(qualified_notes(phrases, i))?));
        }
    }
    for (x, y) in td_pairs(&fams) {
        report.td.push(((fams[x], fams[y]), defined(tonal_distance(phrases, x, y))?));
    }
    Ok(report)
}

/// [`full_report`] plus the shuffled-bar TD row.
pub fn full_report_with_shuffle(phrases: &[PianoRollPhrase], seed: u64) -> Result<MetricsReport, MetricsError> {
    let mut report = full_report(phrases)?;
    let fams = &report.families;
    let mut row = Vec::new();
    for (x, y) in td_pairs(fams) {
        row.push(((fams[x], fams[y]), defined(shuffled_tonal_distance(phrases, x, y, seed))?));
    }
    report.td_shuffled = Some(row);
    Ok(report)
}

/// Index pairs of the TD table present in `fams`, in canonical order.
fn td_pairs(fams: &[TrackFamily]) -> Vec<(usize, usize)> {
    let idx = |f: TrackFamily| fams.iter().position(|&g| g == f);
    TD_PAIRS.iter().filter_map(|&(a, b)| Some((idx(a)?, idx(b)?))).collect()
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "---".to_string(), |x| format!("{x:.2}"))
}

impl MetricsReport {
    /// Every cell in table order, keyed like `eb.B` or `td.B-G`.
    pub fn cells(&self) -> Vec<MetricCell> {
        let mut out = Vec::new();
        let mut push = |key: String, value: Option<f64>| out.push(MetricCell { key, value });
        for (f, v) in &self.eb {
            push(format!("eb.{}", f.letter()), Some(*v));
        }
        for (f, v) in &self.upc {
            push(format!("upc.{}", f.letter()), *v);
        }
        for (f, v) in &self.qn {
            push(format!("qn.{}", f.letter()), *v);
        }
        if let Some(v) = self.dp {
            push("dp.D".into(), v);
        }
        for ((a, b), v) in &self.td {
            push(format!("td.{}-{}", a.letter(), b.letter()), *v);
        }
        if let Some(row) = &self.td_shuffled {
            for ((a, b), v) in row {
                push(format!("td_shuffled.{}-{}", a.letter(), b.letter()), *v);
            }
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<Option<f64>> {
        self.cells().into_iter().find(|c| c.key == key).map(|c| c.value)
    }

    /// Tab-separated header line (leading `label` column).
    pub fn tsv_header(&self) -> String {
        let mut s = String::from("label");
        for c in self.cells() {
            s.push('\t');
            s.push_str(&c.key);
        }
        s
    }

    /// Tab-separated value line; undefined cells print as `---`.
    pub fn tsv_row(&self, label: &str) -> String {
        let mut s = label.to_string();
        for c in self.cells() {
            s.push('\t');
            s.push_str(&fmt_value(c.value));
        }
        s
    }

    pub fn to_tsv(&self, label: &str) -> String {
        format!("{}\n{}\n", self.tsv_header(), self.tsv_row(label))
    }

    /// `key=value` lines at full precision; undefined cells print as
    /// `undefined`.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for c in self.cells() {
            match c.value {
                Some(v) => writeln!(s, "{}={v:?}", c.key),
                None => writeln!(s, "{}=undefined", c.key),
            }
            .expect("write to string");
        }
        s
    }
}
