//! Assembly of the temporal generators, bar generators, encoder and
//! critics for one model kind.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{BnStore, Network};
use super::noise::{NoiseBundle, NoiseLayout};
use super::specs::{bar_generator_spec, discriminator_spec, encoder_spec, temporal_generator_spec};
use super::{Dims, ModelConfig, ModelError, ModelKind, TemporalMode};
use crate::tensor::{BnMode, ParamSet, Tensor};

/// Trainable state of a model.
#[derive(Clone, Debug)]
pub struct ModelParams {
    /// Temporal generators, bar generators and encoder.
    pub generator: ParamSet,
    pub discriminator: ParamSet,
    pub bn: BnStore,
}

/// An audited model. All shapes are checked by [`MuseGan::build`].
#[derive(Clone, Debug)]
pub struct MuseGan {
    pub config: ModelConfig,
    pub dims: Dims,
    pub noise: NoiseLayout,
    pub temporal_shared: Option<Network>,
    pub temporal_private: Vec<Network>,
    pub bar_generators: Vec<Network>,
    pub encoder: Option<Network>,
    /// For each bar-generator layer, the encoder layer feeding its skip input.
    pub skip_map: Vec<usize>,
    pub discriminators: Vec<Network>,
    /// Track each critic looks at; `None` means the whole phrase.
    pub critic_tracks: Vec<Option<usize>>,
}

fn repeat_bars(z: &Tensor, bars: usize) -> Result<Tensor, ModelError> {
    let (b, l) = (z.shape()[0], z.shape()[1]);
    let r = z.reshape(&[b, 1, l])?;
    Ok(Tensor::concat(&vec![r; bars], 1)?)
}

impl MuseGan {
    pub fn build(config: ModelConfig) -> Result<Self, ModelError> {
        let m = config.families.len();
        if m == 0 {
            return Err(ModelError::Config("no tracks".into()));
        }
        for (i, f) in config.families.iter().enumerate() {
            if config.families[..i].contains(f) {
                return Err(ModelError::Config(format!("track {f} listed twice")));
            }
        }
        let conditional = config.temporal == TemporalMode::TrackConditional;
        match (conditional, config.condition_track) {
            (true, None) => return Err(ModelError::Condition("conditional mode needs a condition track".into())),
            (false, Some(_)) => return Err(ModelError::Condition("condition track given in from-scratch mode".into())),
            (true, Some(c)) if c >= m => return Err(ModelError::Condition(format!("track index {c} out of {m}"))),
            (true, Some(_)) if m < 2 => return Err(ModelError::Condition("nothing left to generate".into())),
            _ => {}
        }
        let p = config.profile;
        let d = p.dims();
        let bn = !config.ablate_bn;
        let outs = config.output_tracks();
        let m_out = outs.len();
        let noise = NoiseLayout::new(config.kind, config.temporal, d.noise_total, m_out);
        if noise.per_generator() != d.noise_total {
            return Err(ModelError::Audit {
                network: "noise".into(),
                layer: 0,
                detail: format!("generator noise {} != {}", noise.per_generator(), d.noise_total),
            });
        }

        let (k_temp, k_bar) = config.kind.k_values(m_out);
        let mut temporal_shared = None;
        let mut temporal_private = Vec::new();
        if !conditional {
            if noise.z_t > 0 {
                temporal_shared = Some(Network::new(temporal_generator_spec(p, "g_temp", noise.z_t, k_temp, bn))?);
            }
            if noise.z_it > 0 {
                for j in 0..m_out {
                    let spec = temporal_generator_spec(p, &format!("g_temp_{j}"), noise.z_it, 1, bn);
                    temporal_private.push(Network::new(spec)?);
                }
            }
        }

        let encoder = if conditional { Some(Network::new(encoder_spec(p, "enc", bn))?) } else { None };
        let skip_width = if conditional { d.encoder_width } else { 0 };
        let n_bar = if config.kind == ModelKind::Composer { 1 } else { m_out };
        let mut bar_generators = Vec::with_capacity(n_bar);
        for j in 0..n_bar {
            let name = if n_bar == 1 { "g_bar".to_string() } else { format!("g_bar_{j}") };
            let spec = bar_generator_spec(p, &name, noise.per_generator(), k_bar, skip_width, bn);
            bar_generators.push(Network::new(spec)?);
        }

        let mut skip_map = Vec::new();
        if let Some(enc) = &encoder {
            let g = &bar_generators[0];
            for l in 0..g.spec.layers.len() {
                let input = g.spec.layer_input(l)?;
                let spatial = &input[..input.len() - 1];
                let src = enc
                    .shapes
                    .iter()
                    .position(|s| &s[..s.len() - 1] == spatial)
                    .ok_or_else(|| ModelError::Audit {
                        network: g.name().to_string(),
                        layer: l,
                        detail: format!("no encoder layer at resolution {spatial:?}"),
                    })?;
                skip_map.push(src);
            }
        }

        let mut discriminators = Vec::new();
        let mut critic_tracks = Vec::new();
        if config.kind == ModelKind::Jamming {
            for &j in &outs {
                discriminators.push(Network::new(discriminator_spec(p, &format!("d_{j}"), 1))?);
                critic_tracks.push(Some(j));
            }
        } else {
            discriminators.push(Network::new(discriminator_spec(p, "d", m))?);
            critic_tracks.push(None);
        }

        let model = MuseGan {
            config,
            dims: d,
            noise,
            temporal_shared,
            temporal_private,
            bar_generators,
            encoder,
            skip_map,
            discriminators,
            critic_tracks,
        };
        let (kt, kb) = model.k_values();
        if (kt, kb) != (k_temp, k_bar) {
            return Err(ModelError::Audit {
                network: "model".into(),
                layer: 0,
                detail: format!("built (K_temp, K_bar) = ({kt}, {kb}), expected ({k_temp}, {k_bar})"),
            });
        }
        Ok(model)
    }

    /// `(K_temp, K_bar)` read off the built networks: bar generators fed
    /// by the shared time-dependent input, and tracks per bar generator.
    pub fn k_values(&self) -> (usize, usize) {
        let k_bar = *self.bar_generators[0].spec.target.last().expect("target has channels");
        let k_temp = match &self.temporal_shared {
            Some(t) => t.spec.target[1] / self.noise.z_t,
            None if self.noise.z_t > 0 => self.bar_generators.len(),
            None => 1,
        };
        (k_temp, k_bar)
    }

    /// Generator-side networks in parameter order.
    pub fn generator_networks(&self) -> impl Iterator<Item = &Network> {
        self.temporal_shared
            .iter()
            .chain(&self.temporal_private)
            .chain(&self.bar_generators)
            .chain(&self.encoder)
    }

    pub fn networks(&self) -> impl Iterator<Item = &Network> {
        self.generator_networks().chain(&self.discriminators)
    }

    pub fn batch_norm_layers(&self) -> usize {
        self.networks().map(|n| n.spec.batch_norm_layers()).sum()
    }

    pub fn generator_param_count(&self) -> Result<usize, ModelError> {
        self.generator_networks().map(|n| n.spec.param_count()).sum()
    }

    pub fn discriminator_param_count(&self) -> Result<usize, ModelError> {
        self.discriminators.iter().map(|n| n.spec.param_count()).sum()
    }

    /// Per-sample shape of a full phrase `[bars, steps, pitches, tracks]`.
    pub fn phrase_shape(&self) -> [usize; 4] {
        [self.dims.bars, self.dims.steps, self.dims.pitches, self.config.families.len()]
    }

    pub fn init(&self, seed: u64) -> Result<ModelParams, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams {
            generator: ParamSet::new(),
            discriminator: ParamSet::new(),
            bn: BnStore::new(),
        };
        for n in self.generator_networks() {
            n.init(&mut rng, &mut params.generator, &mut params.bn)?;
        }
        for n in &self.discriminators {
            n.init(&mut rng, &mut params.discriminator, &mut params.bn)?;
        }
        Ok(params)
    }

    fn run_bar_generators(
        &self,
        params: &ParamSet,
        bn: &mut BnStore,
        mode: BnMode,
        inputs: Vec<Vec<Tensor>>,
        skips: &[Option<Tensor>],
    ) -> Result<Tensor, ModelError> {
        let d = self.dims;
        let mut outs = Vec::with_capacity(inputs.len());
        for (g, parts) in self.bar_generators.iter().zip(inputs) {
            let x = Tensor::concat(&parts, 2)?;
            let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let y = g.forward(params, bn, mode, &x.reshape(&[b * t, 1, 1, c])?, skips)?.output;
            let k = *y.shape().last().expect("channels");
            outs.push(y.reshape(&[b, t, d.steps, d.pitches, k])?);
        }
        Ok(Tensor::concat(&outs, 4)?)
    }

    /// From-scratch generation: bar latents come from the temporal
    /// generators. Returns `[batch, bars, steps, pitches, tracks]` in
    /// (-1, 1).
    pub fn generate_from_scratch(
        &self,
        params: &ParamSet,
        bn: &mut BnStore,
        mode: BnMode,
        noise: &NoiseBundle,
    ) -> Result<Tensor, ModelError> {
        if self.config.temporal != TemporalMode::FromScratch {
            return Err(ModelError::Condition("model is track-conditional".into()));
        }
        let t = self.dims.bars;
        let batch = self.noise.check(noise, t)?;
        let run_temporal = |net: &Network, z: &Tensor, bn: &mut BnStore| -> Result<Tensor, ModelError> {
            let l = z.shape()[1];
            Ok(net.forward(params, bn, mode, &z.reshape(&[batch, 1, l])?, &[])?.output)
        };
        let shared = match (&self.temporal_shared, &noise.z_t) {
            (Some(net), Some(z_t)) => Some(run_temporal(net, z_t, bn)?),
            _ => None,
        };
        let mut inputs = Vec::with_capacity(self.bar_generators.len());
        for j in 0..self.bar_generators.len() {
            let mut parts = Vec::with_capacity(4);
            if let Some(z) = &noise.z {
                parts.push(repeat_bars(z, t)?);
            }
            if let Some(s) = &shared {
                let l = self.noise.z_t;
                parts.push(if s.shape()[2] == l { s.clone() } else { s.slice(2, j * l, l)? });
            }
            if let Some(z_i) = noise.z_i.get(j) {
                parts.push(repeat_bars(z_i, t)?);
            }
            if let (Some(net), Some(z_it)) = (self.temporal_private.get(j), noise.z_it.get(j)) {
                parts.push(run_temporal(net, z_it, bn)?);
            }
            inputs.push(parts);
        }
        self.run_bar_generators(params, bn, mode, inputs, &[])
    }

    /// Track-conditional generation. `condition` is `[batch, bars, steps,
    /// pitches]` with any number of bars; returns the generated tracks
    /// only, `[batch, bars, steps, pitches, tracks - 1]`.
    pub fn generate_conditional(
        &self,
        params: &ParamSet,
        bn: &mut BnStore,
        mode: BnMode,
        condition: &Tensor,
        noise: &NoiseBundle,
    ) -> Result<Tensor, ModelError> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| ModelError::Condition("model generates from scratch".into()))?;
        let d = self.dims;
        let s = condition.shape();
        if s.len() != 4 || s[2] != d.steps || s[3] != d.pitches {
            return Err(ModelError::Shape(format!(
                "condition {s:?}, expected [batch, bars, {}, {}]",
                d.steps, d.pitches
            )));
        }
        let (b, t) = (s[0], s[1]);
        if self.noise.check(noise, t)? != b {
            return Err(ModelError::Noise(format!("noise batch differs from condition batch {b}")));
        }
        let codes = enc.forward(params, bn, mode, &condition.reshape(&[b * t, d.steps, d.pitches, 1])?, &[])?;
        let skips: Vec<Option<Tensor>> = self.skip_map.iter().map(|&i| Some(codes.activations[i].clone())).collect();
        let mut inputs = Vec::with_capacity(self.bar_generators.len());
        for j in 0..self.bar_generators.len() {
            let mut parts = Vec::with_capacity(4);
            if let Some(z) = &noise.z {
                parts.push(repeat_bars(z, t)?);
            }
            if let Some(z_t) = &noise.z_t {
                parts.push(z_t.clone());
            }
            if let Some(z_i) = noise.z_i.get(j) {
                parts.push(repeat_bars(z_i, t)?);
            }
            if let Some(z_it) = noise.z_it.get(j) {
                parts.push(z_it.clone());
            }
            inputs.push(parts);
        }
        self.run_bar_generators(params, bn, mode, inputs, &skips)
    }

    /// Puts the condition track back among the generated ones, giving the
    /// full `[batch, bars, steps, pitches, tracks]` phrase.
    pub fn with_condition(&self, generated: &Tensor, condition: &Tensor) -> Result<Tensor, ModelError> {
        let c = self
            .config
            .condition_track
            .ok_or_else(|| ModelError::Condition("model generates from scratch".into()))?;
        let mut shape = condition.shape().to_vec();
        shape.push(1);
        let y = condition.reshape(&shape)?;
        let m_out = *generated.shape().last().expect("channels");
        let mut parts = Vec::with_capacity(3);
        if c > 0 {
            parts.push(generated.slice(4, 0, c)?);
        }
        parts.push(y);
        if c < m_out {
            parts.push(generated.slice(4, c, m_out - c)?);
        }
        Ok(Tensor::concat(&parts, 4)?)
    }

    /// Full phrases from either temporal mode.
    pub fn generate(
        &self,
        params: &ParamSet,
        bn: &mut BnStore,
        mode: BnMode,
        noise: &NoiseBundle,
        condition: Option<&Tensor>,
    ) -> Result<Tensor, ModelError> {
        match (self.config.temporal, condition) {
            (TemporalMode::FromScratch, None) => self.generate_from_scratch(params, bn, mode, noise),
            (TemporalMode::TrackConditional, Some(y)) => {
                let g = self.generate_conditional(params, bn, mode, y, noise)?;
                self.with_condition(&g, y)
            }
            (TemporalMode::FromScratch, Some(_)) => Err(ModelError::Condition("model generates from scratch".into())),
            (TemporalMode::TrackConditional, None) => Err(ModelError::Condition("missing condition track".into())),
        }
    }

    /// Score of critic `c`, `[batch, 1]`.
    pub fn critic(&self, c: usize, params: &ParamSet, x: &Tensor) -> Result<Tensor, ModelError> {
        let net = self
            .discriminators
            .get(c)
            .ok_or_else(|| ModelError::Shape(format!("no critic {c}")))?;
        let input = match self.critic_tracks[c] {
            Some(j) => x.slice(4, j, 1)?,
            None => x.clone(),
        };
        Ok(net.forward(params, &mut BnStore::new(), BnMode::Eval, &input, &[])?.output)
    }

    /// Critic scores, one `[batch, 1]` tensor per critic.
    pub fn discriminate(&self, params: &ParamSet, x: &Tensor) -> Result<Vec<Tensor>, ModelError> {
        (0..self.discriminators.len()).map(|c| self.critic(c, params, x)).collect()
    }

    /// `key=value` description of the model and every network.
    pub fn spec_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let fams: Vec<&str> = c.families.iter().map(|f| f.name()).collect();
        let _ = writeln!(s, "model.kind={}", c.kind);
        let _ = writeln!(s, "model.temporal={}", c.temporal);
        let _ = writeln!(s, "model.profile={}", c.profile);
        let _ = writeln!(s, "model.families={}", fams.join(","));
        let cond = c.condition_track.map_or("none", |i| c.families[i].name());
        let _ = writeln!(s, "model.condition={cond}");
        let _ = writeln!(s, "model.ablate_bn={}", c.ablate_bn);
        if !self.skip_map.is_empty() {
            let m: Vec<String> = self.skip_map.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "model.skip_map={}", m.join(","));
        }
        for n in self.networks() {
            s.push_str(&n.spec.to_key_values());
        }
        s
    }
}

/// Samples phrases from scratch with the running batch statistics.
pub fn generate_from_scratch(model: &MuseGan, noise: &NoiseBundle, params: &mut ModelParams) -> Result<Tensor, ModelError> {
    model.generate_from_scratch(&params.generator, &mut params.bn, BnMode::Eval, noise)
}

/// Generates the accompaniment of `condition` with the running batch
/// statistics; the result excludes the condition track.
pub fn generate_conditional(
    model: &MuseGan,
    condition: &Tensor,
    noise: &NoiseBundle,
    params: &mut ModelParams,
) -> Result<Tensor, ModelError> {
    model.generate_conditional(&params.generator, &mut params.bn, BnMode::Eval, condition, noise)
}
