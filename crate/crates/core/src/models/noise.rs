//! Random inputs of the generators.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ModelError, ModelKind, TemporalMode};
use crate::tensor::Tensor;

/// Lengths of the four noise parts; absent parts have length 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseLayout {
    /// Shared, time-independent.
    pub z: usize,
    /// Shared, time-dependent.
    pub z_t: usize,
    /// Private per generated track, time-independent.
    pub z_i: usize,
    /// Private per generated track, time-dependent.
    pub z_it: usize,
    /// Number of generated tracks holding private parts.
    pub tracks: usize,
    pub temporal: TemporalMode,
}

impl NoiseLayout {
    pub fn new(kind: ModelKind, temporal: TemporalMode, total: usize, tracks: usize) -> Self {
        let (z, z_t, z_i, z_it) = match kind {
            ModelKind::Jamming => (0, 0, total / 2, total / 2),
            ModelKind::Composer => (total / 2, total / 2, 0, 0),
            ModelKind::Hybrid => (total / 4, total / 4, total / 4, total / 4),
        };
        NoiseLayout {
            z,
            z_t,
            z_i,
            z_it,
            tracks,
            temporal,
        }
    }

    /// Length of the concatenated noise each bar generator sees.
    pub fn per_generator(&self) -> usize {
        self.z + self.z_t + self.z_i + self.z_it
    }

    fn time_shape(&self, batch: usize, bars: usize, len: usize) -> Vec<usize> {
        match self.temporal {
            TemporalMode::FromScratch => vec![batch, len],
            TemporalMode::TrackConditional => vec![batch, bars, len],
        }
    }

    /// Draws every part i.i.d. standard normal, in the order z, z_t, then
    /// z_i and z_it per track.
    pub fn sample(&self, batch: usize, bars: usize, rng: &mut ChaCha8Rng) -> NoiseBundle {
        let mut draw = |shape: Vec<usize>| {
            let n = shape.iter().product();
            let v = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            Tensor::new(&shape, v).expect("shape sized from layout")
        };
        let z = (self.z > 0).then(|| draw(vec![batch, self.z]));
        let z_t = (self.z_t > 0).then(|| draw(self.time_shape(batch, bars, self.z_t)));
        let mut z_i = Vec::new();
        let mut z_it = Vec::new();
        for _ in 0..self.tracks {
            if self.z_i > 0 {
                z_i.push(draw(vec![batch, self.z_i]));
            }
            if self.z_it > 0 {
                z_it.push(draw(self.time_shape(batch, bars, self.z_it)));
            }
        }
        NoiseBundle { z, z_t, z_i, z_it }
    }

    /// Checks a bundle against this layout, returning its batch size.
    pub fn check(&self, noise: &NoiseBundle, bars: usize) -> Result<usize, ModelError> {
        let batch = noise
            .z
            .as_ref()
            .or(noise.z_i.first())
            .map(|t| t.shape()[0])
            .ok_or_else(|| ModelError::Noise("no time-independent part".into()))?;
        let expect = |name: &str, t: Option<&Tensor>, shape: Option<Vec<usize>>| -> Result<(), ModelError> {
            let got = t.map(|t| t.shape().to_vec());
            if got != shape {
                return Err(ModelError::Noise(format!("{name}: expected {shape:?}, got {got:?}")));
            }
            Ok(())
        };
        expect("z", noise.z.as_ref(), (self.z > 0).then(|| vec![batch, self.z]))?;
        expect("z_t", noise.z_t.as_ref(), (self.z_t > 0).then(|| self.time_shape(batch, bars, self.z_t)))?;
        let private = |n: usize| if n > 0 { self.tracks } else { 0 };
        if noise.z_i.len() != private(self.z_i) || noise.z_it.len() != private(self.z_it) {
            return Err(ModelError::Noise(format!(
                "expected {} z_i and {} z_it vectors, got {} and {}",
                private(self.z_i),
                private(self.z_it),
                noise.z_i.len(),
                noise.z_it.len()
            )));
        }
        for t in &noise.z_i {
            expect("z_i", Some(t), Some(vec![batch, self.z_i]))?;
        }
        for t in &noise.z_it {
            expect("z_it", Some(t), Some(self.time_shape(batch, bars, self.z_it)))?;
        }
        Ok(batch)
    }
}

/// One batch of generator noise.
#[derive(Clone, Debug)]
pub struct NoiseBundle {
    pub z: Option<Tensor>,
    pub z_t: Option<Tensor>,
    pub z_i: Vec<Tensor>,
    pub z_it: Vec<Tensor>,
}
