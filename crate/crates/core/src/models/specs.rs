//! Layer tables of the temporal generator, bar generator, encoder and
//! discriminator for each profile.

use super::network::{LayerSpec, NetworkSpec};
use super::Profile;
use crate::tensor::Activation;

const RELU: Activation = Activation::Relu;
const LRELU: Activation = Activation::LRELU;

/// Maps a latent vector of length `latent` to `bars` latent vectors for
/// each of `variants` consumers. Output `[bars, latent * variants]`.
pub fn temporal_generator_spec(profile: Profile, name: &str, latent: usize, variants: usize, bn: bool) -> NetworkSpec {
    let d = profile.dims();
    let hidden = 1024 / d.filter_div;
    let out = latent * variants;
    let layers = match profile {
        Profile::Full => vec![
            LayerSpec::transconv(hidden, &[2], &[2], bn, RELU),
            LayerSpec::transconv(out, &[3], &[1], bn, RELU),
        ],
        Profile::Toy => vec![
            LayerSpec::transconv(hidden, &[2], &[2], bn, RELU),
            LayerSpec::transconv(out, &[1], &[1], bn, RELU),
        ],
    };
    NetworkSpec {
        name: name.into(),
        profile,
        input: vec![1, latent],
        target: vec![d.bars, out],
        layers,
    }
}

/// Grows a `[1, 1, in_channels]` code into one bar of `tracks` channels,
/// time axis first, then pitch. With `skip_width`, every layer also
/// receives that many encoder channels.
pub fn bar_generator_spec(
    profile: Profile,
    name: &str,
    in_channels: usize,
    tracks: usize,
    skip_width: usize,
    bn: bool,
) -> NetworkSpec {
    let d = profile.dims();
    let f = |n: usize| n / d.filter_div;
    let mut layers: Vec<LayerSpec> = match profile {
        Profile::Full => {
            let mut l: Vec<LayerSpec> = [1024, 256, 256, 256, 256]
                .iter()
                .map(|&n| LayerSpec::transconv(n, &[2, 1], &[2, 1], bn, RELU))
                .collect();
            l.push(LayerSpec::transconv(128, &[3, 1], &[3, 1], bn, RELU));
            l.push(LayerSpec::transconv(64, &[1, 7], &[1, 7], bn, RELU));
            l.push(LayerSpec::transconv(tracks, &[1, 12], &[1, 12], bn, Activation::Tanh));
            l
        }
        Profile::Toy => vec![
            LayerSpec::transconv(f(1024), &[2, 1], &[2, 1], bn, RELU),
            LayerSpec::transconv(f(256), &[2, 1], &[2, 1], bn, RELU),
            LayerSpec::transconv(f(256), &[2, 1], &[2, 1], bn, RELU),
            LayerSpec::transconv(f(128), &[2, 1], &[2, 1], bn, RELU),
            LayerSpec::transconv(f(64), &[1, 3], &[1, 3], bn, RELU),
            LayerSpec::transconv(tracks, &[1, 4], &[1, 4], bn, Activation::Tanh),
        ],
    };
    for l in &mut layers {
        l.skip_channels = skip_width;
    }
    NetworkSpec {
        name: name.into(),
        profile,
        input: vec![1, 1, in_channels],
        target: vec![d.steps, d.pitches, tracks],
        layers,
    }
}

/// Reduces one single-track bar to a `[1, 1, width]` feature vector,
/// pitch axis first, then time.
pub fn encoder_spec(profile: Profile, name: &str, bn: bool) -> NetworkSpec {
    let d = profile.dims();
    let w = d.encoder_width;
    let layers = match profile {
        Profile::Full => {
            let mut l = vec![
                LayerSpec::conv(w, &[1, 12], &[1, 12], bn, LRELU),
                LayerSpec::conv(w, &[1, 7], &[1, 7], bn, LRELU),
                LayerSpec::conv(w, &[3, 1], &[3, 1], bn, LRELU),
            ];
            l.extend((0..5).map(|_| LayerSpec::conv(w, &[2, 1], &[2, 1], bn, LRELU)));
            l
        }
        Profile::Toy => {
            let mut l = vec![
                LayerSpec::conv(w, &[1, 4], &[1, 4], bn, LRELU),
                LayerSpec::conv(w, &[1, 3], &[1, 3], bn, LRELU),
            ];
            l.extend((0..4).map(|_| LayerSpec::conv(w, &[2, 1], &[2, 1], bn, LRELU)));
            l
        }
    };
    NetworkSpec {
        name: name.into(),
        profile,
        input: vec![d.steps, d.pitches, 1],
        target: vec![1, 1, w],
        layers,
    }
}

/// Critic over a whole phrase `[bars, steps, pitches, tracks]`; no batch
/// normalization anywhere.
pub fn discriminator_spec(profile: Profile, name: &str, tracks: usize) -> NetworkSpec {
    let d = profile.dims();
    let f = |n: usize| n / d.filter_div;
    let conv = |n: usize, k: [usize; 3], s: [usize; 3]| LayerSpec::conv(f(n), &k, &s, false, LRELU);
    let layers = match profile {
        Profile::Full => vec![
            conv(128, [2, 1, 1], [1, 1, 1]),
            conv(128, [3, 1, 1], [1, 1, 1]),
            conv(128, [1, 1, 12], [1, 1, 12]),
            conv(128, [1, 1, 7], [1, 1, 7]),
            conv(128, [1, 2, 1], [1, 2, 1]),
            conv(128, [1, 2, 1], [1, 2, 1]),
            conv(256, [1, 4, 1], [1, 2, 1]),
            conv(512, [1, 3, 1], [1, 2, 1]),
            LayerSpec::dense(1024, LRELU),
            LayerSpec::dense(1, Activation::Identity),
        ],
        Profile::Toy => vec![
            conv(128, [2, 1, 1], [1, 1, 1]),
            conv(128, [1, 1, 1], [1, 1, 1]),
            conv(128, [1, 1, 4], [1, 1, 4]),
            conv(128, [1, 1, 3], [1, 1, 3]),
            conv(128, [1, 2, 1], [1, 2, 1]),
            conv(128, [1, 2, 1], [1, 2, 1]),
            conv(256, [1, 2, 1], [1, 2, 1]),
            conv(512, [1, 2, 1], [1, 2, 1]),
            LayerSpec::dense(f(1024), LRELU),
            LayerSpec::dense(1, Activation::Identity),
        ],
    };
    NetworkSpec {
        name: name.into(),
        profile,
        input: vec![d.bars, d.steps, d.pitches, tracks],
        target: vec![1],
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_specs_pass_audit() {
        let p = Profile::Full;
        let t = temporal_generator_spec(p, "t", 64, 1, true).audit().unwrap();
        assert_eq!(t.last().unwrap(), &vec![4, 64]);
        let g = bar_generator_spec(p, "g", 128, 5, 0, true).audit().unwrap();
        assert_eq!(g.last().unwrap(), &vec![96, 84, 5]);
        // time axis grows before pitch
        assert_eq!(g[5], vec![96, 1, 128]);
        let e = encoder_spec(p, "e", true).audit().unwrap();
        assert_eq!(e.last().unwrap(), &vec![1, 1, 16]);
        let d = discriminator_spec(p, "d", 5).audit().unwrap();
        assert_eq!(d[7], vec![1, 5, 1, 512]);
        assert_eq!(d.last().unwrap(), &vec![1]);
    }

    #[test]
    fn toy_specs_pass_audit() {
        let p = Profile::Toy;
        assert_eq!(temporal_generator_spec(p, "t", 32, 2, true).audit().unwrap()[1], vec![2, 64]);
        assert_eq!(bar_generator_spec(p, "g", 64, 2, 4, true).audit().unwrap()[5], vec![16, 12, 2]);
        assert_eq!(encoder_spec(p, "e", true).audit().unwrap()[5], vec![1, 1, 4]);
        assert_eq!(discriminator_spec(p, "d", 2).audit().unwrap()[9], vec![1]);
    }

    #[test]
    fn discriminator_has_no_batch_norm() {
        for p in [Profile::Full, Profile::Toy] {
            assert_eq!(discriminator_spec(p, "d", 5).batch_norm_layers(), 0);
        }
    }

    #[test]
    fn encoder_filters_are_uniform() {
        assert!(encoder_spec(Profile::Full, "e", true).layers.iter().all(|l| l.filters == 16));
    }
}
