mod common;

use musegan_core::midi::DatasetStore;
use musegan_core::models::{ModelKind, Profile, TemporalMode};
use musegan_core::pianoroll::{BarLayout, PhraseShape, PianoRollPhrase, TrackFamily};
use musegan_core::tensor::{ParamSet, Tensor};
use musegan_core::trainer::{train, TrainConfig, TrainError, Trainer, UpdateTarget, NORM_EPSILON};

fn toy_config(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        kind,
        profile: Profile::Toy,
        batch_size: 4,
        steps: 3,
        seed: 21,
        snapshot_every: 2,
        snapshot_samples: 4,
        ..TrainConfig::default()
    }
}

fn zeroed(params: &ParamSet) -> ParamSet {
    let mut out = ParamSet::new();
    for (name, t) in params.iter() {
        out.insert(name, Tensor::param(t.shape(), vec![0.0; t.numel()]).unwrap()).unwrap();
    }
    out
}

#[test]
fn every_window_is_five_critic_updates_then_one_generator_update() {
    let store = common::toy_store();
    for kind in ModelKind::ALL {
        let mut t = Trainer::new(toy_config(kind), &store).unwrap();
        for _ in 0..3 {
            t.step().unwrap();
        }
        let trace = t.update_trace();
        assert_eq!(trace.len(), 18);
        for window in trace.chunks(6) {
            assert!(window[..5].iter().all(|u| *u == UpdateTarget::Critic), "{kind}: {window:?}");
            assert_eq!(window[5], UpdateTarget::Generator);
        }
    }
}

#[test]
fn critic_ratio_is_configurable() {
    let mut c = toy_config(ModelKind::Composer);
    c.critic_updates = 2;
    let mut t = Trainer::new(c, &common::toy_store()).unwrap();
    t.step().unwrap();
    t.step().unwrap();
    use UpdateTarget::*;
    assert_eq!(t.update_trace(), [Critic, Critic, Generator, Critic, Critic, Generator]);
}

#[test]
fn zero_critic_gives_zero_generator_loss_and_unit_penalty() {
    let mut t = Trainer::new(toy_config(ModelKind::Composer), &common::toy_store()).unwrap();
    let d = zeroed(&t.params().discriminator);
    t.params_mut().discriminator = d;
    let r = t.step().unwrap().clone();
    assert_eq!(r.g_loss, 0.0);
    assert_eq!(r.wasserstein, 0.0);
    let unit = (NORM_EPSILON.sqrt() - 1.0).powi(2);
    assert!((r.gradient_penalty - unit).abs() < 1e-15, "{}", r.gradient_penalty);
    assert!((r.d_loss - 10.0 * unit).abs() < 1e-13, "{}", r.d_loss);
    // A zero critic has no parameter gradient, so Adam leaves it at zero.
    assert!(t.params().discriminator.iter().all(|(_, p)| p.data().iter().all(|v| *v == 0.0)));
}

#[test]
fn conditional_training_updates_the_encoder() {
    let mut c = toy_config(ModelKind::Hybrid);
    c.temporal = TemporalMode::TrackConditional;
    c.condition = Some(TrackFamily::Guitar);
    let mut t = Trainer::new(c, &common::toy_store()).unwrap();
    let before: Vec<(String, Vec<f64>)> = t
        .params()
        .generator
        .iter()
        .filter(|(n, _)| n.starts_with("enc."))
        .map(|(n, p)| (n.to_string(), p.to_vec()))
        .collect();
    assert!(!before.is_empty());
    t.step().unwrap();
    for (name, old) in before {
        let now = t.params().generator.get(&name).unwrap().to_vec();
        assert_ne!(now, old, "{name} unchanged");
    }
}

#[test]
fn mismatched_stores_fail_before_any_update() {
    let good = common::toy_store();
    let config = toy_config(ModelKind::Jamming);

    let mut shape = good.shape;
    shape.layout = BarLayout {
        lowest_pitch: 24,
        ..shape.layout
    };
    let pitch = DatasetStore::from_phrases(vec![PianoRollPhrase::empty(shape, good.families.clone()).unwrap()]).unwrap();
    let full = DatasetStore::from_phrases(vec![PianoRollPhrase::empty(PhraseShape::DEFAULT, TrackFamily::ALL.to_vec()).unwrap()]).unwrap();
    let labels = DatasetStore::from_phrases(vec![
        PianoRollPhrase::empty(good.shape, vec![TrackFamily::Bass, TrackFamily::Piano]).unwrap(),
    ])
    .unwrap();
    let empty = DatasetStore::new(good.shape, good.families.clone());
    for store in [pitch, full, labels, empty] {
        match Trainer::new(config.clone(), &store) {
            Err(TrainError::StoreMismatch(_)) => {}
            other => panic!("expected a store mismatch, got {:?}", other.map(|t| t.steps_done())),
        }
    }
}

#[test]
fn invalid_config_fails_before_any_update() {
    let mut c = toy_config(ModelKind::Composer);
    c.temporal = TemporalMode::TrackConditional;
    assert!(matches!(Trainer::new(c, &common::toy_store()), Err(TrainError::Config(_))));
}

#[test]
fn run_snapshots_at_start_cadence_and_end() {
    let (log, _) = train(toy_config(ModelKind::Composer), &common::toy_store()).unwrap();
    assert_eq!(log.records.len(), 3);
    let steps: Vec<usize> = log.snapshots.iter().map(|s| s.step).collect();
    assert_eq!(steps, [0, 2, 3]);
    for s in &log.snapshots {
        assert!(s.get("upc.B").is_some() || s.get("eb.B") == Some(1.0));
    }
    assert!(log.records.iter().all(|r| r.d_loss.is_finite() && r.g_loss.is_finite()));
}

#[test]
fn same_seed_same_losses() {
    let store = common::toy_store();
    let (a, pa) = train(toy_config(ModelKind::Hybrid), &store).unwrap();
    let (b, pb) = train(toy_config(ModelKind::Hybrid), &store).unwrap();
    assert_eq!(a, b);
    assert_eq!(pa.generator.to_arrays(""), pb.generator.to_arrays(""));
}

#[test]
fn resume_rejects_a_checkpoint_of_another_model() {
    let dir = std::env::temp_dir().join(format!("musegan-trainer-{}", std::process::id()));
    let store = common::toy_store();
    let mut t = Trainer::new(toy_config(ModelKind::Composer), &store).unwrap();
    t.step().unwrap();
    t.save(&dir).unwrap();
    let spec = std::fs::read_to_string(dir.join("spec.txt")).unwrap();
    std::fs::write(dir.join("spec.txt"), spec.replace("model.kind=composer", "model.kind=jamming")).unwrap();
    assert!(matches!(Trainer::resume(&dir, &store), Err(TrainError::Checkpoint(_))));
    std::fs::remove_dir_all(&dir).unwrap();
}
