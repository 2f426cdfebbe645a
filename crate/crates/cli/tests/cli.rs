use std::path::Path;
use std::process::{Command, Output};

use musegan_core::midi::phrases_to_midi;
use musegan_core::{PhraseShape, PianoRollPhrase, TrackFamily};

fn musegan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_musegan")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = musegan(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// The stderr lines that are not the resolved-config log.
fn error_lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .filter(|l| !l.starts_with("config "))
        .map(str::to_string)
        .collect()
}

fn fail(args: &[&str], kind: &str) -> String {
    let out = musegan(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let lines = error_lines(&out);
    assert_eq!(lines.len(), 1, "{lines:?}");
    assert!(lines[0].starts_with(&format!("musegan: error[{kind}]: ")), "{}", lines[0]);
    lines[0].clone()
}

/// Four 4/4 bars of bass and guitar inside the toy pitch window.
fn song(shift: usize) -> Vec<u8> {
    let mut p = PianoRollPhrase::empty(PhraseShape::DEFAULT, TrackFamily::ALL.to_vec()).unwrap();
    let (bass, guitar) = (TrackFamily::Bass.code() as usize, TrackFamily::Guitar.code() as usize);
    for (b, bar) in p.bars_mut().iter_mut().enumerate() {
        let root = 48 - 24 + (b + shift) % 5;
        for step in 0..48 {
            bar.set(step, root, bass, true);
        }
        for step in 48..96 {
            for iv in [0, 4, 7] {
                bar.set(step, root + iv, guitar, true);
            }
        }
    }
    phrases_to_midi(&[p])
}

fn waltz() -> Vec<u8> {
    let mut bytes = song(0);
    let at = bytes.windows(4).position(|w| w == [0xff, 0x58, 0x04, 4]).unwrap();
    bytes[at + 3] = 3;
    bytes
}

fn fixture(dir: &Path) {
    std::fs::create_dir_all(dir.join("nested")).unwrap();
    std::fs::write(dir.join("a.mid"), song(0)).unwrap();
    std::fs::write(dir.join("nested/b.midi"), song(2)).unwrap();
    std::fs::write(dir.join("c.mid"), waltz()).unwrap();
    std::fs::write(dir.join("notes.txt"), "not midi").unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_reports_skips_and_is_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let midi = tmp.path().join("midi");
    fixture(&midi);
    let (a, b) = (tmp.path().join("a.store"), tmp.path().join("b.store"));
    let summary = ok(&["--profile", "toy", "ingest", s(&midi), "--out", s(&a)]);
    assert!(summary.contains("files\t3\n"), "{summary}");
    assert!(summary.contains("skipped.time-signature\t1\n"), "{summary}");
    assert!(summary.contains("songs\t2\n"), "{summary}");
    assert!(summary.contains("phrases\t4\n"), "{summary}");
    for f in TrackFamily::ALL {
        assert!(summary.contains(&format!("bars.{}\t", f.name())), "{summary}");
    }
    assert!(summary.contains("bars.drums\t0\n"));
    ok(&["--profile", "toy", "ingest", s(&midi), "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn metadata_filters_by_genre() {
    let tmp = tempfile::tempdir().unwrap();
    let midi = tmp.path().join("midi");
    fixture(&midi);
    let meta = tmp.path().join("meta.tsv");
    std::fs::write(&meta, "a.mid\trock\t0.9\nb.midi\tjazz\t0.9\n").unwrap();
    let out = tmp.path().join("x.store");
    let summary = ok(&[
        "--profile", "toy", "--set", "ingest.genre=rock", "ingest", s(&midi), "--out", s(&out), "--metadata", s(&meta),
    ]);
    assert!(summary.contains("skipped.genre\t1\n"), "{summary}");
    assert!(summary.contains("songs\t1\n"), "{summary}");
}

#[test]
fn zero_phrases_is_a_one_line_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.mid"), waltz()).unwrap();
    let out = tmp.path().join("x.store");
    let line = fail(&["ingest", s(tmp.path()), "--out", s(&out)], "input");
    assert!(line.contains("no phrases"), "{line}");
    assert!(!out.exists());
}

#[test]
fn config_errors_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("x.store");
    fail(&["--set", "train.bogus=1", "eval", s(&store)], "config");
    fail(&["--set", "noequals", "eval", s(&store)], "config");
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "train.profile=toy\nrender.scale=3\n").unwrap();
    let line = fail(&["--config", s(&cfg), "eval", s(&store)], "config");
    assert!(line.contains("run.cfg:2"), "{line}");
    fail(&["--model", "orchestra", "eval", s(&store)], "usage");
    fail(&["eval", s(&store)], "io");
}

#[test]
fn toy_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name);
    let midi = p("midi");
    fixture(&midi);
    let data = p("data.store");
    ok(&["--profile", "toy", "ingest", s(&midi), "--out", s(&data)]);

    let cfg = p("toy.cfg");
    std::fs::write(
        &cfg,
        "train.profile=toy\ntrain.batch_size=4\ntrain.snapshot_every=2\ntrain.snapshot_samples=4\n",
    )
    .unwrap();
    let ckpt = p("ckpt");
    let report = ok(&["--config", s(&cfg), "--seed", "3", "train", "--store", s(&data), "--out", s(&ckpt), "--steps", "3"]);
    assert!(report.starts_with("steps\t3\n"), "{report}");
    let report = ok(&["--config", s(&cfg), "train", "--store", s(&data), "--out", s(&ckpt), "--steps", "4", "--resume"]);
    assert!(report.starts_with("steps\t4\n"), "{report}");

    let (g1, g2, mid) = (p("g1.store"), p("g2.store"), p("g.mid"));
    let gen = |out: &Path| ok(&["--seed", "7", "generate", "--checkpoint", s(&ckpt), "-n", "3", "--out", s(out), "--midi", s(&mid)]);
    assert_eq!(gen(&g1), "phrases\t3\n");
    gen(&g2);
    assert_eq!(std::fs::read(&g1).unwrap(), std::fs::read(&g2).unwrap());
    assert!(std::fs::read(&mid).unwrap().starts_with(b"MThd"));
    let line = fail(&["--model", "hybrid", "generate", "--checkpoint", s(&ckpt), "--out", s(&g2)], "config");
    assert!(line.contains("train.model"), "{line}");

    let eval = |extra: &[&str]| {
        let mut args = extra.to_vec();
        args.extend(["eval", s(&g1), "--reference", s(&data)]);
        ok(&args)
    };
    let table = eval(&[]);
    assert_eq!(table, eval(&[]));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("label\teb.B\teb.G\t"), "{}", lines[0]);
    assert!(lines[1].starts_with("g1\t"));
    assert!(lines[2].starts_with("training data\t"));
    let shuffled = eval(&["--set", "metrics.shuffled=true"]);
    let rows: Vec<&str> = shuffled.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[3].starts_with("g1 (shuffled)\t---\t"), "{}", rows[3]);
    assert_eq!(rows[..3], lines[..]);

    let ppm = p("x.ppm");
    ok(&["render", s(&data), "--index", "1", "--scale", "2", "--out", s(&ppm)]);
    let img = std::fs::read_to_string(&ppm).unwrap();
    assert!(img.starts_with("P3\n64 24\n255\n"));
    assert_eq!(img.lines().count(), 3 + 64 * 24);
    fail(&["render", s(&data), "--index", "9", "--out", s(&ppm)], "input");

    let one = p("one.mid");
    ok(&["export", s(&data), "--index", "0", "--out", s(&one)]);
    let back = p("back");
    std::fs::create_dir_all(&back).unwrap();
    std::fs::copy(&one, back.join("one.mid")).unwrap();
    let again = p("again.store");
    let summary = ok(&["--profile", "toy", "ingest", s(&back), "--out", s(&again)]);
    assert!(summary.contains("phrases\t1\n"), "{summary}");
}

#[test]
fn conditional_generation_needs_and_uses_a_condition_store() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name);
    let midi = p("midi");
    fixture(&midi);
    let data = p("data.store");
    ok(&["--profile", "toy", "ingest", s(&midi), "--out", s(&data)]);
    let ckpt = p("ckpt");
    let flags = ["--profile", "toy", "--model", "hybrid", "--temporal", "conditional", "--condition-track", "guitar"];
    let mut args = flags.to_vec();
    args.extend(["--set", "train.batch_size=4", "--set", "train.snapshot_samples=4"]);
    args.extend(["train", "--store", s(&data), "--out", s(&ckpt), "--steps", "2"]);
    ok(&args);

    let out = p("g.store");
    fail(&["generate", "--checkpoint", s(&ckpt), "-n", "2", "--out", s(&out)], "config");
    let mut args = flags.to_vec();
    args.extend(["generate", "--checkpoint", s(&ckpt), "-n", "2", "--out", s(&out), "--conditions", s(&data)]);
    assert_eq!(ok(&args), "phrases\t2\n");
    let table = ok(&["eval", s(&out)]);
    assert!(table.lines().nth(1).unwrap().starts_with("g\t"));
}

/// Four bars with every family playing: drums on the sixteenth grid.
fn band() -> Vec<u8> {
    let mut p = PianoRollPhrase::empty(PhraseShape::DEFAULT, TrackFamily::ALL.to_vec()).unwrap();
    for bar in p.bars_mut() {
        for f in TrackFamily::ALL {
            let t = f.code() as usize;
            if f.is_drums() {
                for step in (0..96).step_by(12) {
                    bar.set(step, 36 - 24, t, true);
                }
                continue;
            }
            let root = match f {
                TrackFamily::Bass => 33,
                TrackFamily::Guitar => 52,
                TrackFamily::Piano => 60,
                _ => 67,
            } - 24;
            for step in 0..24 {
                bar.set(step, root, t, true);
                bar.set(step + 48, root + 4, t, true);
            }
        }
    }
    phrases_to_midi(&[p])
}

#[test]
fn full_profile_generation_and_defined_training_row() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name);
    std::fs::create_dir_all(p("midi")).unwrap();
    std::fs::write(p("midi/band.mid"), band()).unwrap();
    let data = p("data.store");
    ok(&["ingest", s(&p("midi")), "--out", s(&data)]);
    let table = ok(&["eval", s(&data)]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("data\t"));
    assert!(!lines[1].contains("---"), "{}", lines[1]);
    assert_eq!(lines[1].split('\t').count(), 1 + 5 + 4 + 4 + 1 + 6);

    let ckpt = p("ckpt");
    ok(&["--set", "train.batch_size=2", "train", "--store", s(&data), "--out", s(&ckpt), "--steps", "0"]);
    let out = p("g.store");
    assert_eq!(ok(&["generate", "--checkpoint", s(&ckpt), "-n", "10", "--out", s(&out)]), "phrases\t10\n");
    let store = musegan_core::DatasetStore::from_bytes(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(store.len(), 10);
    assert_eq!(store.shape.dims(), [4, 96, 84, 5]);
    fail(&["--profile", "toy", "generate", "--checkpoint", s(&ckpt), "--out", s(&out)], "config");
}
