//! Checkpoint directories.
//!
//! ```text
//! params.bin      tensor file: g/*, d/*, bn/*.mean|var, adam_g|adam_d/m|v/*, state/*
//! config.txt      train.* key=value
//! rng.txt         seed and word position of the training stream
//! spec.txt        model and network descriptions
//! losses.tsv      per-step losses
//! snapshots.tsv   metric snapshots
//! ```

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::train::{TrainLog, Trainer};
use super::{TrainConfig, TrainError};
use crate::midi::DatasetStore;
use crate::models::{ModelParams, MuseGan};
use crate::tensor::{read_tensor_file, write_tensor_file, AdamState, NamedArray, ParamSet, RunningStats};

fn scalar(name: &str, v: f64) -> NamedArray {
    NamedArray {
        name: name.into(),
        shape: vec![1],
        values: vec![v],
    }
}

fn moments(prefix: &str, params: &ParamSet, adam: &AdamState) -> Vec<NamedArray> {
    let mut out = Vec::new();
    for (i, (name, t)) in params.iter().enumerate() {
        for (kind, values) in [("m", &adam.m[i]), ("v", &adam.v[i])] {
            out.push(NamedArray {
                name: format!("{prefix}/{kind}/{name}"),
                shape: t.shape().to_vec(),
                values: values.clone(),
            });
        }
    }
    out.push(scalar(&format!("state/{prefix}_step"), adam.step as f64));
    out
}

fn find<'a>(arrays: &'a [NamedArray], name: &str) -> Result<&'a NamedArray, TrainError> {
    arrays
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| TrainError::Checkpoint(format!("params.bin lacks {name}")))
}

fn restore_moments(arrays: &[NamedArray], prefix: &str, params: &ParamSet, adam: &mut AdamState) -> Result<(), TrainError> {
    for (i, (name, t)) in params.iter().enumerate() {
        for kind in ["m", "v"] {
            let a = find(arrays, &format!("{prefix}/{kind}/{name}"))?;
            if a.shape != t.shape() {
                return Err(TrainError::Checkpoint(format!("{prefix}/{kind}/{name}: shape {:?}", a.shape)));
            }
            let slot = if kind == "m" { &mut adam.m[i] } else { &mut adam.v[i] };
            slot.clone_from(&a.values);
        }
    }
    adam.step = find(arrays, &format!("state/{prefix}_step"))?.values[0] as u64;
    Ok(())
}

fn read(dir: &Path, f: &str) -> Result<String, TrainError> {
    fs::read_to_string(dir.join(f)).map_err(|e| TrainError::Checkpoint(format!("{f}: {e}")))
}

fn load(dir: &Path) -> Result<(TrainConfig, MuseGan, ModelParams, Vec<NamedArray>), TrainError> {
    let config = TrainConfig::from_key_values(&read(dir, "config.txt")?)?;
    config.validate()?;
    let model = MuseGan::build(config.model_config()?)?;
    if read(dir, "spec.txt")? != model.spec_text() {
        return Err(TrainError::Checkpoint("spec.txt does not describe the configured model".into()));
    }
    let file = fs::File::open(dir.join("params.bin")).map_err(|e| TrainError::Checkpoint(format!("params.bin: {e}")))?;
    let arrays = read_tensor_file(BufReader::new(file))?;
    let mut params = model.init(config.seed)?;
    params.generator = params.generator.load_matching(&arrays, "g/")?;
    params.discriminator = params.discriminator.load_matching(&arrays, "d/")?;
    for (key, stats) in params.bn.iter_mut() {
        let mean = find(&arrays, &format!("bn/{key}.mean"))?.values.clone();
        let var = find(&arrays, &format!("bn/{key}.var"))?.values.clone();
        if mean.len() != stats.mean.len() || var.len() != stats.var.len() {
            return Err(TrainError::Checkpoint(format!("bn/{key}: wrong length")));
        }
        *stats = RunningStats { mean, var };
    }
    Ok((config, model, params, arrays))
}

/// Config, model and trained parameters (with batch statistics) of a
/// checkpoint directory, without optimizer state.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(TrainConfig, MuseGan, ModelParams), TrainError> {
    let (config, model, params, _) = load(dir.as_ref())?;
    Ok((config, model, params))
}

impl Trainer {
    /// Writes everything needed to continue bit-exactly into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), TrainError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let p = &self.params;
        let mut arrays = p.generator.to_arrays("g/");
        arrays.extend(p.discriminator.to_arrays("d/"));
        for (key, stats) in &p.bn {
            for (kind, values) in [("mean", &stats.mean), ("var", &stats.var)] {
                arrays.push(NamedArray {
                    name: format!("bn/{key}.{kind}"),
                    shape: vec![values.len()],
                    values: values.clone(),
                });
            }
        }
        arrays.extend(moments("adam_g", &p.generator, &self.adam_g));
        arrays.extend(moments("adam_d", &p.discriminator, &self.adam_d));
        arrays.push(scalar("state/steps", self.steps_done as f64));
        let file = fs::File::create(dir.join("params.bin"))?;
        write_tensor_file(BufWriter::new(file), &arrays)?;
        fs::write(dir.join("config.txt"), self.config.to_key_values())?;
        fs::write(
            dir.join("rng.txt"),
            format!("seed={}\nword_pos={}\n", self.config.seed, self.rng.get_word_pos()),
        )?;
        fs::write(dir.join("spec.txt"), self.model.spec_text())?;
        fs::write(dir.join("losses.tsv"), self.log.losses_tsv())?;
        fs::write(dir.join("snapshots.tsv"), self.log.snapshots_tsv())?;
        Ok(())
    }

    /// Rebuilds a trainer from [`Trainer::save`] output.
    pub fn resume(dir: impl AsRef<Path>, store: &DatasetStore) -> Result<Trainer, TrainError> {
        let dir = dir.as_ref();
        let (config, _, params, arrays) = load(dir)?;
        let mut t = Trainer::new(config, store)?;
        t.params = params;
        restore_moments(&arrays, "adam_g", &t.params.generator, &mut t.adam_g)?;
        restore_moments(&arrays, "adam_d", &t.params.discriminator, &mut t.adam_d)?;
        t.steps_done = find(&arrays, "state/steps")?.values[0] as usize;

        let rng_text = read(dir, "rng.txt")?;
        let field = |k: &str| -> Result<&str, TrainError> {
            rng_text
                .lines()
                .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| TrainError::Checkpoint(format!("rng.txt lacks {k}")))
        };
        let bad = |_| TrainError::Checkpoint("rng.txt: bad number".into());
        let seed: u64 = field("seed")?.parse().map_err(bad)?;
        let pos: u128 = field("word_pos")?.parse().map_err(bad)?;
        t.rng = ChaCha8Rng::seed_from_u64(seed);
        t.rng.set_word_pos(pos);
        t.log = TrainLog::from_tsv(&read(dir, "losses.tsv")?, &read(dir, "snapshots.tsv")?)?;
        Ok(t)
    }
}
