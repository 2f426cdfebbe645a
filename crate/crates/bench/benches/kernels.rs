use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use musegan_core::midi::DatasetStore;
use musegan_core::tensor::{backward, Tensor};
use musegan_core::{full_report, BarLayout, PhraseShape, PianoRollPhrase, Profile, TrackFamily, TrainConfig, Trainer};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // A critic-sized layer: 16 phrases of 96 x 84 with 5 tracks, 12x12 stride 12 in pitch.
    let xs = [16, 96, 84, 5];
    let ws = [1, 12, 5, 32];
    let x = Tensor::new(&xs, random(&xs, &mut rng)).unwrap();
    let w = Tensor::param(&ws, random(&ws, &mut rng)).unwrap();
    c.bench_function("conv_forward", |b| b.iter(|| black_box(x.conv(&w, &[1, 12]).unwrap())));
    c.bench_function("conv_forward_backward", |b| {
        b.iter(|| {
            let y = x.conv(&w, &[1, 12]).unwrap().sum_all();
            black_box(backward(&y, false).unwrap())
        })
    });
    let ts = [16, 4, 4, 64];
    let tw = [2, 2, 32, 64];
    let t = Tensor::new(&ts, random(&ts, &mut rng)).unwrap();
    let k = Tensor::param(&tw, random(&tw, &mut rng)).unwrap();
    c.bench_function("transposed_conv_forward", |b| {
        b.iter(|| black_box(t.transposed_conv(&k, &[2, 2]).unwrap()))
    });
}

fn phrases(shape: PhraseShape, families: &[TrackFamily], n: usize, density: f64, seed: u64) -> Vec<PianoRollPhrase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let values: Vec<f64> = (0..shape.cells())
                .map(|_| if rng.gen_bool(density) { 1.0 } else { -1.0 })
                .collect();
            PianoRollPhrase::from_values(shape, families.to_vec(), &values).unwrap()
        })
        .collect()
}

fn metrics(c: &mut Criterion) {
    let batch = phrases(PhraseShape::DEFAULT, &TrackFamily::ALL, 64, 0.02, 1);
    c.bench_function("full_report_64_phrases", |b| b.iter(|| black_box(full_report(&batch).unwrap())));
}

fn toy_step(c: &mut Criterion) {
    let dims = Profile::Toy.dims();
    let families = Profile::Toy.default_families();
    let shape = PhraseShape {
        bars: dims.bars,
        layout: BarLayout {
            steps: dims.steps,
            pitches: dims.pitches,
            lowest_pitch: dims.lowest_pitch,
        },
        tracks: families.len(),
    };
    let toy = phrases(shape, &families, 32, 0.05, 2);
    let store = DatasetStore::from_phrases(toy).unwrap();
    let config = TrainConfig {
        profile: Profile::Toy,
        batch_size: 16,
        ..TrainConfig::default()
    };
    c.bench_function("toy_train_step", |b| {
        b.iter_batched(
            || Trainer::new(config.clone(), &store).unwrap(),
            |mut t| black_box(t.step().unwrap().d_loss),
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv, metrics, toy_step
}
criterion_main!(benches);
