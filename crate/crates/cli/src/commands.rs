use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use musegan_core::midi::{cleanse_and_segment, parse_metadata, parse_midi, phrases_to_midi, SongMetadata};
use musegan_core::{
    full_report, full_report_with_shuffle, load_checkpoint, sample_phrases, CleanseConfig, DatasetStore,
    MetricsReport, PianoRollPhrase, SkipReason, TrackFamily, Trainer,
};

use crate::config::CliConfig;
use crate::render::to_ppm;
use crate::CliError;

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_store(path: &Path) -> Result<DatasetStore, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(DatasetStore::from_bytes(&bytes)?)
}

fn midi_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            match e.into_io_error() {
                Some(io) => CliError::io(&path, io),
                None => CliError::Input(format!("{}: filesystem loop", path.display())),
            }
        })?;
        let is_midi = entry
            .path()
            .extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| x.eq_ignore_ascii_case("mid") || x.eq_ignore_ascii_case("midi"));
        if entry.file_type().is_file() && is_midi {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Ingest summary printed as `key<TAB>value` lines.
#[derive(Default)]
struct IngestSummary {
    files: usize,
    skipped: BTreeMap<SkipReason, usize>,
    songs: usize,
    phrases: usize,
    /// Bars holding at least one note, per family.
    bars: BTreeMap<TrackFamily, usize>,
}

impl IngestSummary {
    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "files\t{}", self.files);
        for r in SkipReason::ALL {
            let _ = writeln!(s, "skipped.{}\t{}", r.code(), self.skipped.get(&r).copied().unwrap_or(0));
        }
        let _ = writeln!(s, "songs\t{}", self.songs);
        let _ = writeln!(s, "phrases\t{}", self.phrases);
        for f in TrackFamily::ALL {
            let _ = writeln!(s, "bars.{}\t{}", f.name(), self.bars.get(&f).copied().unwrap_or(0));
        }
        s
    }
}

pub fn ingest(config: &CliConfig, dir: &Path, out: &Path, metadata: Option<&Path>) -> Result<(), CliError> {
    let meta: HashMap<String, SongMetadata> = match metadata {
        Some(p) => parse_metadata(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
        None => HashMap::new(),
    };
    let profile = config.train.profile;
    let dims = profile.dims();
    let families = profile.default_families();
    let cleanse = CleanseConfig {
        phrase_bars: dims.bars,
        steps_per_bar: dims.steps,
        ..config.ingest.clone()
    };
    let files = midi_files(dir)?;
    let mut summary = IngestSummary {
        files: files.len(),
        ..Default::default()
    };
    let mut phrases: Vec<PianoRollPhrase> = Vec::new();
    for path in &files {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let result = parse_midi(&bytes)
            .map_err(|_| SkipReason::Parse)
            .and_then(|song| cleanse_and_segment(&song, &cleanse, meta.get(name)));
        let kept = match result {
            Ok(found) => {
                let mut kept = Vec::new();
                for p in found {
                    let p = p.restrict(dims.lowest_pitch, dims.pitches, &families)?;
                    if !p.is_empty() {
                        kept.push(p);
                    }
                }
                kept
            }
            Err(r) => {
                *summary.skipped.entry(r).or_default() += 1;
                continue;
            }
        };
        if kept.is_empty() {
            *summary.skipped.entry(SkipReason::NoPhrases).or_default() += 1;
            continue;
        }
        summary.songs += 1;
        for p in &kept {
            for bar in p.bars() {
                for (t, &f) in p.families().iter().enumerate() {
                    if !bar.track_is_empty(t) {
                        *summary.bars.entry(f).or_default() += 1;
                    }
                }
            }
        }
        phrases.extend(kept);
    }
    summary.phrases = phrases.len();
    print!("{}", summary.render());
    if phrases.is_empty() {
        return Err(CliError::Input(format!(
            "no phrases survived ingestion of {} MIDI files under {}",
            files.len(),
            dir.display()
        )));
    }
    let store = DatasetStore::from_phrases(phrases)?;
    write(out, &store.to_bytes())
}

pub fn train(config: &CliConfig, store: &Path, out: &Path, resume: bool) -> Result<(), CliError> {
    let data = read_store(store)?;
    let mut trainer = if resume {
        Trainer::resume(out, &data)?
    } else {
        Trainer::new(config.train.clone(), &data)?
    };
    let target = if resume && !config.explicit.contains("train.steps") {
        trainer.config().steps
    } else {
        config.train.steps
    };
    let every = trainer.config().snapshot_every;
    while trainer.steps_done() < target {
        let next = ((trainer.steps_done() / every + 1) * every).min(target);
        trainer.run_until(next, |r| {
            eprintln!(
                "step {}\td_loss {:.4}\tg_loss {:.4}\tw {:.4}\tgp {:.4}",
                r.step, r.d_loss, r.g_loss, r.wasserstein, r.gradient_penalty
            )
        })?;
        trainer.save(out)?;
    }
    if trainer.steps_done() == 0 {
        trainer.save(out)?;
    }
    println!("steps\t{}", trainer.steps_done());
    if let Some(r) = trainer.log().records.last() {
        println!("d_loss\t{}", r.d_loss);
        println!("g_loss\t{}", r.g_loss);
    }
    Ok(())
}

const MODEL_KEYS: [&str; 5] = [
    "train.profile",
    "train.model",
    "train.temporal",
    "train.condition_track",
    "train.ablate_bn",
];

fn key_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
}

pub fn generate(
    config: &CliConfig,
    checkpoint: &Path,
    n: usize,
    out: &Path,
    midi: Option<&Path>,
    conditions: Option<&Path>,
) -> Result<(), CliError> {
    let (saved, model, mut params) = load_checkpoint(checkpoint)?;
    let (want, have) = (config.train.to_key_values(), saved.to_key_values());
    for key in MODEL_KEYS.iter().filter(|k| config.explicit.contains(**k)) {
        let (w, h) = (key_value(&want, key), key_value(&have, key));
        if w != h {
            return Err(CliError::Config(format!(
                "{key}={} requested but the checkpoint was trained with {key}={}",
                w.unwrap_or("?"),
                h.unwrap_or("?")
            )));
        }
    }
    let cond = conditions.map(read_store).transpose()?;
    let phrases = sample_phrases(&model, &mut params, n, config.train.seed, cond.as_ref())?;
    if let Some(path) = midi {
        write(path, &phrases_to_midi(&phrases))?;
    }
    let store = DatasetStore::from_phrases(phrases)?;
    write(out, &store.to_bytes())?;
    println!("phrases\t{}", store.len());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("store").to_string()
}

pub fn eval(
    config: &CliConfig,
    store: &Path,
    reference: Option<&Path>,
    label: Option<String>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let data = read_store(store)?;
    let reference = reference.map(read_store).transpose()?;
    if let Some(r) = &reference {
        if r.families != data.families {
            let names = |f: &[TrackFamily]| f.iter().map(|f| f.name()).collect::<Vec<_>>().join(",");
            return Err(CliError::Input(format!(
                "reference tracks [{}] differ from [{}]",
                names(&r.families),
                names(&data.families)
            )));
        }
    }
    let report = |phrases: &[PianoRollPhrase]| {
        if config.metrics.shuffled {
            full_report_with_shuffle(phrases, config.metrics.shuffle_seed)
        } else {
            full_report(phrases)
        }
    };
    let label = label.unwrap_or_else(|| stem(store));
    let mut rows = vec![(label, report(&data.phrases)?)];
    if let Some(r) = &reference {
        rows.push(("training data".to_string(), report(&r.phrases)?));
    }
    let mut text = table_header(&rows[0].1);
    for (label, r) in &rows {
        text.push_str(&table_row(r, label, "td."));
    }
    if config.metrics.shuffled {
        for (label, r) in &rows {
            text.push_str(&table_row(r, &format!("{label} (shuffled)"), "td_shuffled."));
        }
    }
    match out {
        Some(p) => write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "---".to_string(), |x| format!("{x:.2}"))
}

fn table_header(report: &MetricsReport) -> String {
    let mut s = String::from("label");
    for c in report.cells().iter().filter(|c| !c.key.starts_with("td_shuffled.")) {
        let _ = write!(s, "\t{}", c.key);
    }
    s.push('\n');
    s
}

/// One table row. The `td.*` columns read from the cells under `td_prefix`;
/// with `td_shuffled.` every other column is left undefined.
fn table_row(report: &MetricsReport, label: &str, td_prefix: &str) -> String {
    let cells = report.cells();
    let value = |key: &str| cells.iter().find(|c| c.key == key).and_then(|c| c.value);
    let mut s = label.to_string();
    for c in cells.iter().filter(|c| !c.key.starts_with("td_shuffled.")) {
        let v = match c.key.strip_prefix("td.") {
            Some(pair) => value(&format!("{td_prefix}{pair}")),
            None if td_prefix == "td." => c.value,
            None => None,
        };
        let _ = write!(s, "\t{}", cell(v));
    }
    s.push('\n');
    s
}

fn phrase_at(store: &DatasetStore, index: usize) -> Result<&PianoRollPhrase, CliError> {
    store.phrases.get(index).ok_or_else(|| {
        CliError::Input(format!("index {index} out of range, the store holds {} phrases", store.len()))
    })
}

pub fn render(store: &Path, index: usize, out: &Path, scale: usize) -> Result<(), CliError> {
    let data = read_store(store)?;
    write(out, to_ppm(phrase_at(&data, index)?, scale).as_bytes())
}

pub fn export(store: &Path, index: Option<usize>, out: &Path) -> Result<(), CliError> {
    let data = read_store(store)?;
    let bytes = match index {
        Some(i) => phrases_to_midi(std::slice::from_ref(phrase_at(&data, i)?)),
        None => phrases_to_midi(&data.phrases),
    };
    write(out, &bytes)
}
