//! The alternating critic/generator loop and its monitoring.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{critic_loss, generator_loss, Critic};
use super::{TrainConfig, TrainError};
use crate::metrics::{empty_bars, qualified_notes, used_pitch_classes, MetricsError};
use crate::midi::DatasetStore;
use crate::models::{ModelError, ModelParams, MuseGan};
use crate::pianoroll::{BarLayout, PhraseShape, PianoRollPhrase};
use crate::tensor::{backward, AdamState, BnMode, ParamSet, Tensor};

/// Which parameter set an optimizer update touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateTarget {
    Critic,
    /// Generator and, in conditional mode, the encoder.
    Generator,
}

/// Losses of one completed step, critic values averaged over its critic
/// updates.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub d_loss: f64,
    pub wasserstein: f64,
    pub gradient_penalty: f64,
    pub g_loss: f64,
}

/// Metric values of one batch of generated phrases.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    /// `(key, value)` such as `("upc.B", Some(3.1))`.
    pub values: Vec<(String, Option<f64>)>,
}

impl Snapshot {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).and_then(|(_, v)| *v)
    }

    /// Mean of the defined values whose key starts with `prefix`.
    pub fn mean_of(&self, prefix: &str) -> Option<f64> {
        let v: Vec<f64> = self.values.iter().filter(|(k, _)| k.starts_with(prefix)).filter_map(|(_, v)| *v).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl TrainLog {
    pub const LOSS_HEADER: &'static str = "step\td_loss\twasserstein\tgradient_penalty\tg_loss";
    pub const SNAPSHOT_HEADER: &'static str = "step\tkey\tvalue";

    pub fn loss_row(r: &StepRecord) -> String {
        format!("{}\t{}\t{}\t{}\t{}", r.step, r.d_loss, r.wasserstein, r.gradient_penalty, r.g_loss)
    }

    pub fn losses_tsv(&self) -> String {
        let mut s = format!("{}\n", Self::LOSS_HEADER);
        for r in &self.records {
            let _ = writeln!(s, "{}", Self::loss_row(r));
        }
        s
    }

    pub fn snapshots_tsv(&self) -> String {
        let mut s = format!("{}\n", Self::SNAPSHOT_HEADER);
        for snap in &self.snapshots {
            for (k, v) in &snap.values {
                let v = v.map_or_else(|| "---".to_string(), |x| x.to_string());
                let _ = writeln!(s, "{}\t{k}\t{v}", snap.step);
            }
        }
        s
    }

    pub fn from_tsv(losses: &str, snapshots: &str) -> Result<TrainLog, TrainError> {
        let bad = |m: String| TrainError::Checkpoint(format!("log: {m}"));
        let mut log = TrainLog::default();
        for line in losses.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(format!("'{line}'")));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(format!("'{line}'")));
            log.records.push(StepRecord {
                step: f[0].parse().map_err(|_| bad(format!("'{line}'")))?,
                d_loss: num(1)?,
                wasserstein: num(2)?,
                gradient_penalty: num(3)?,
                g_loss: num(4)?,
            });
        }
        for line in snapshots.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("'{line}'")));
            }
            let step: usize = f[0].parse().map_err(|_| bad(format!("'{line}'")))?;
            let value = match f[2] {
                "---" => None,
                v => Some(v.parse().map_err(|_| bad(format!("'{line}'")))?),
            };
            if log.snapshots.last().map(|s| s.step) != Some(step) {
                log.snapshots.push(Snapshot {
                    step,
                    values: Vec::new(),
                });
            }
            log.snapshots.last_mut().expect("pushed").values.push((f[1].to_string(), value));
        }
        Ok(log)
    }
}

pub(super) fn phrase_shape(model: &MuseGan) -> PhraseShape {
    let d = model.dims;
    PhraseShape {
        bars: d.bars,
        layout: BarLayout {
            steps: d.steps,
            pitches: d.pitches,
            lowest_pitch: d.lowest_pitch,
        },
        tracks: model.config.families.len(),
    }
}

fn undefined_as_none(r: Result<f64, MetricsError>) -> Result<Option<f64>, TrainError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::NoNotes(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Converts a generated `[batch, ...]` tensor into binarized phrases.
pub(super) fn to_phrases(model: &MuseGan, x: &Tensor) -> Result<Vec<PianoRollPhrase>, TrainError> {
    let shape = phrase_shape(model);
    let per = shape.cells();
    x.data()
        .chunks(per)
        .map(|c| Ok(PianoRollPhrase::from_values(shape, model.config.families.clone(), c)?))
        .collect()
}

/// Phrases generated per forward pass by [`sample_phrases`].
pub const SAMPLE_CHUNK: usize = 16;

/// Generates `n` binarized phrases with the running batch statistics. The
/// noise (and, in conditional mode, the condition phrases drawn from
/// `store`) comes from a stream seeded by `seed` alone.
pub fn sample_phrases(
    model: &MuseGan,
    params: &mut ModelParams,
    n: usize,
    seed: u64,
    store: Option<&DatasetStore>,
) -> Result<Vec<PianoRollPhrase>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let bars = model.dims.bars;
    let generator = params.generator.frozen();
    let mut phrases = Vec::with_capacity(n);
    while phrases.len() < n {
        let b = SAMPLE_CHUNK.min(n - phrases.len());
        let condition = match model.config.condition_track {
            Some(c) => {
                let store = store.ok_or_else(|| TrainError::Config("conditional generation needs a store".into()))?;
                let real = sample_batch(store, b, &mut rng)?;
                Some(condition_of(&real, c)?)
            }
            None => None,
        };
        let noise = model.noise.sample(b, bars, &mut rng);
        let x = model.generate(&generator, &mut params.bn, BnMode::Eval, &noise, condition.as_ref())?;
        phrases.extend(to_phrases(model, &x)?);
    }
    Ok(phrases)
}

/// Measures EB, UPC and QN per track on [`sample_phrases`] output.
pub fn snapshot_metrics(
    model: &MuseGan,
    params: &mut ModelParams,
    n_samples: usize,
    seed: u64,
    store: Option<&DatasetStore>,
) -> Result<Vec<(String, Option<f64>)>, TrainError> {
    let phrases = sample_phrases(model, params, n_samples, seed, store)?;
    let mut values = Vec::new();
    for (i, f) in model.config.families.iter().enumerate() {
        values.push((format!("eb.{}", f.letter()), Some(empty_bars(&phrases, i)?)));
        if !f.is_drums() {
            values.push((format!("upc.{}", f.letter()), Some(used_pitch_classes(&phrases, i)?)));
            values.push((format!("qn.{}", f.letter()), undefined_as_none(qualified_notes(&phrases, i))?));
        }
    }
    Ok(values)
}

fn sample_batch(store: &DatasetStore, batch: usize, rng: &mut ChaCha8Rng) -> Result<Tensor, TrainError> {
    let mut data = Vec::with_capacity(batch * store.shape.cells());
    for _ in 0..batch {
        let i = rng.gen_range(0..store.len());
        data.extend(store.phrases[i].to_signed_values());
    }
    let [t, r, s, m] = store.shape.dims();
    Ok(Tensor::new(&[batch, t, r, s, m], data)?)
}

fn condition_of(real: &Tensor, track: usize) -> Result<Tensor, TrainError> {
    let s = real.shape();
    Ok(real.slice(4, track, 1)?.reshape(&[s[0], s[1], s[2], s[3]])?.detach())
}

/// Owns the model, its parameters, both optimizers and the random stream.
pub struct Trainer {
    pub(super) config: TrainConfig,
    pub(super) model: MuseGan,
    pub(super) params: ModelParams,
    pub(super) adam_g: AdamState,
    pub(super) adam_d: AdamState,
    pub(super) rng: ChaCha8Rng,
    pub(super) steps_done: usize,
    pub(super) log: TrainLog,
    pub(super) trace: Vec<UpdateTarget>,
    pub(super) store: DatasetStore,
}

impl Trainer {
    /// Builds the model and its initial parameters. Fails before any
    /// update when the store does not match the model's phrase shape.
    pub fn new(config: TrainConfig, store: &DatasetStore) -> Result<Self, TrainError> {
        config.validate()?;
        let model = MuseGan::build(config.model_config()?)?;
        let want = phrase_shape(&model);
        if store.shape != want {
            return Err(TrainError::StoreMismatch(format!(
                "store phrases {:?} from pitch {}, model expects {:?} from pitch {}",
                store.shape.dims(),
                store.shape.layout.lowest_pitch,
                want.dims(),
                want.layout.lowest_pitch
            )));
        }
        if store.families != model.config.families {
            return Err(TrainError::StoreMismatch(format!(
                "store tracks {:?}, model tracks {:?}",
                store.families, model.config.families
            )));
        }
        if store.is_empty() {
            return Err(TrainError::StoreMismatch("store is empty".into()));
        }
        let params = model.init(config.seed)?;
        let adam_g = AdamState::new(config.adam, &params.generator);
        let adam_d = AdamState::new(config.adam, &params.discriminator);
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            model,
            params,
            adam_g,
            adam_d,
            steps_done: 0,
            log: TrainLog::default(),
            trace: Vec::new(),
            store: store.clone(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &MuseGan {
        &self.model
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// Parameter sets touched by each optimizer update so far (this
    /// session only).
    pub fn update_trace(&self) -> &[UpdateTarget] {
        &self.trace
    }

    fn non_finite(&self, what: &str, extra: String) -> TrainError {
        let mut dump = extra;
        for (name, t) in self.params.generator.iter().chain(self.params.discriminator.iter()) {
            if !t.all_finite() {
                let _ = writeln!(dump, "non-finite parameter {name} {:?}", t.shape());
            }
        }
        let _ = write!(dump, "{}", self.config.to_key_values());
        TrainError::NonFinite {
            step: self.steps_done,
            what: what.into(),
            dump,
        }
    }

    fn fake_batch(&mut self, generator: &ParamSet, real: &Tensor) -> Result<Tensor, TrainError> {
        let b = self.config.batch_size;
        let condition = match self.model.config.condition_track {
            Some(c) => Some(condition_of(real, c)?),
            None => None,
        };
        let noise = self.model.noise.sample(b, self.model.dims.bars, &mut self.rng);
        Ok(self
            .model
            .generate(generator, &mut self.params.bn, BnMode::Train, &noise, condition.as_ref())?)
    }

    fn critic_update(&mut self) -> Result<(f64, f64, f64), TrainError> {
        let b = self.config.batch_size;
        let real = sample_batch(&self.store, b, &mut self.rng)?;
        let frozen = self.params.generator.frozen();
        let fake = self.fake_batch(&frozen, &real)?.detach();
        let eps: Vec<f64> = (0..b).map(|_| self.rng.gen::<f64>()).collect();
        let d = &self.params.discriminator;
        let mut total: Option<Tensor> = None;
        let (mut w, mut gp) = (0.0, 0.0);
        for c in 0..self.model.discriminators.len() {
            let critic = |x: &Tensor| -> Result<Tensor, ModelError> { self.model.critic(c, d, x) };
            let critic: &Critic = &critic;
            let l = critic_loss(critic, &real, &fake, &eps, self.config.gp_weight)?;
            w += l.wasserstein;
            gp += l.penalty;
            total = Some(match total {
                Some(t) => t.add(&l.loss)?,
                None => l.loss,
            });
        }
        let loss = total.expect("at least one critic");
        let value = loss.item()?;
        if !value.is_finite() {
            return Err(self.non_finite("critic loss", format!("d_loss={value} wasserstein={w} penalty={gp}\n")));
        }
        let grads = backward(&loss, false)?;
        self.adam_d.step_with(&mut self.params.discriminator, &grads)?;
        self.trace.push(UpdateTarget::Critic);
        Ok((value, w, gp))
    }

    fn generator_update(&mut self) -> Result<f64, TrainError> {
        let real = match self.model.config.condition_track {
            Some(_) => sample_batch(&self.store, self.config.batch_size, &mut self.rng)?,
            None => Tensor::scalar(0.0),
        };
        let generator = self.params.generator.clone();
        let fake = self.fake_batch(&generator, &real)?;
        let d = self.params.discriminator.frozen();
        let mut total: Option<Tensor> = None;
        for c in 0..self.model.discriminators.len() {
            let critic = |x: &Tensor| -> Result<Tensor, ModelError> { self.model.critic(c, &d, x) };
            let l = generator_loss(&critic, &fake)?;
            total = Some(match total {
                Some(t) => t.add(&l)?,
                None => l,
            });
        }
        let loss = total.expect("at least one critic");
        let value = loss.item()?;
        if !value.is_finite() {
            return Err(self.non_finite("generator loss", format!("g_loss={value}\n")));
        }
        let grads = backward(&loss, false)?;
        self.adam_g.step_with(&mut self.params.generator, &grads)?;
        self.trace.push(UpdateTarget::Generator);
        Ok(value)
    }

    /// One step: `critic_updates` critic updates, then one generator update.
    pub fn step(&mut self) -> Result<&StepRecord, TrainError> {
        let n = self.config.critic_updates;
        let (mut d, mut w, mut gp) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (a, b, c) = self.critic_update()?;
            d += a;
            w += b;
            gp += c;
        }
        let g = self.generator_update()?;
        self.log.records.push(StepRecord {
            step: self.steps_done,
            d_loss: d / n as f64,
            wasserstein: w / n as f64,
            gradient_penalty: gp / n as f64,
            g_loss: g,
        });
        self.steps_done += 1;
        Ok(self.log.records.last().expect("pushed"))
    }

    /// Appends a metric snapshot of the current generator.
    pub fn snapshot(&mut self) -> Result<&Snapshot, TrainError> {
        let values = snapshot_metrics(
            &self.model,
            &mut self.params,
            self.config.snapshot_samples,
            self.config.seed,
            Some(&self.store),
        )?;
        self.log.snapshots.push(Snapshot {
            step: self.steps_done,
            values,
        });
        Ok(self.log.snapshots.last().expect("pushed"))
    }

    /// Trains until `config.steps`, snapshotting at step 0, every
    /// `snapshot_every` steps and at the end.
    pub fn run(&mut self) -> Result<(), TrainError> {
        self.run_until(self.config.steps, |_| {})
    }

    /// Like [`Trainer::run`] but stops at `steps` and calls `on_step` after
    /// every step.
    pub fn run_until(&mut self, steps: usize, mut on_step: impl FnMut(&StepRecord)) -> Result<(), TrainError> {
        let snapped = |t: &Trainer| t.log.snapshots.last().map(|s| s.step) == Some(t.steps_done);
        if self.steps_done == 0 && !snapped(self) {
            self.snapshot()?;
        }
        while self.steps_done < steps {
            on_step(self.step()?);
            if self.steps_done.is_multiple_of(self.config.snapshot_every) {
                self.snapshot()?;
            }
        }
        if !snapped(self) {
            self.snapshot()?;
        }
        Ok(())
    }
}

/// Runs a whole training session.
pub fn train(config: TrainConfig, store: &DatasetStore) -> Result<(TrainLog, ModelParams), TrainError> {
    let mut t = Trainer::new(config, store)?;
    t.run()?;
    Ok((t.log, t.params))
}
