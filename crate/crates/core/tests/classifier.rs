use augpolicy::augment::{AugmentationAction, AugmentationOp, Image};
use augpolicy::classifier::{ClassifierConfig, ClassifierModel, Detector, LabeledImage, TrainOptions};
use augpolicy::nn::{cross_entropy, softmax, Checkpoint, Layer};
use augpolicy::{rng, Error, Label};
use rand::Rng;

fn small_config() -> ClassifierConfig {
    ClassifierConfig {
        width: 16,
        height: 16,
        channels: 3,
        conv1: 4,
        conv2: 8,
        feature_dim: 16,
    }
}

/// Solid dark (real) vs. solid bright (fake) images with a little jitter.
fn toy_set(n: usize, seed: u64) -> Vec<LabeledImage> {
    let mut r = rng::rng(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
            let base: u8 = if label == Label::Real { 40 } else { 200 };
            let px = (0..16 * 16 * 3)
                .map(|_| base.saturating_add(r.random_range(0..30)))
                .collect();
            LabeledImage {
                image: Image::new(16, 16, 3, px).unwrap(),
                label,
                domain: 0,
            }
        })
        .collect()
}

fn mean_intensity(img: &Image) -> f64 {
    img.pixels().iter().map(|&p| p as f64).sum::<f64>() / img.pixels().len() as f64
}

fn opts(epochs: usize, seed: u64) -> TrainOptions {
    TrainOptions {
        epochs,
        batch_size: 16,
        seed,
        ..TrainOptions::default()
    }
}

#[test]
fn separable_toy_set_is_learned() {
    let data = toy_set(64, 1);
    // a single linear probe on mean intensity already separates the set
    let probe_ok = data
        .iter()
        .all(|d| (mean_intensity(&d.image) > 120.0) == (d.label == Label::Fake));
    assert!(probe_ok);

    let mut model = ClassifierModel::new(small_config(), 7).unwrap();
    let log = model.train(&data, &opts(10, 3)).unwrap();
    assert_eq!(log.epochs.len(), 10);
    assert!(log.epochs.last().unwrap().accuracy >= 0.95, "{:?}", log.epochs.last());
}

#[test]
fn training_loss_mostly_non_increasing_across_seeds() {
    let data = toy_set(64, 2);
    let mut good = 0;
    for seed in 0..5 {
        let mut model = ClassifierModel::new(small_config(), seed).unwrap();
        let log = model.train(&data, &opts(6, seed)).unwrap();
        let monotone = log
            .epochs
            .windows(2)
            .all(|w| w[1].mean_loss <= w[0].mean_loss + 1e-9);
        good += monotone as usize;
    }
    assert!(good >= 4, "{good}/5 seeds monotone");
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let mut model = ClassifierModel::new(small_config(), 1).unwrap();
    let before = model.network().clone();
    let log = model.train(&toy_set(8, 0), &opts(0, 0)).unwrap();
    assert!(log.epochs.is_empty());
    assert_eq!(model.network(), &before);
}

#[test]
fn training_is_deterministic() {
    let data = toy_set(32, 5);
    let run = || {
        let mut m = ClassifierModel::new(small_config(), 9).unwrap();
        let log = m.train(&data, &opts(3, 4)).unwrap();
        (log.to_csv(), m.to_checkpoint().to_bytes())
    };
    assert_eq!(run(), run());
}

#[test]
fn single_class_is_rejected() {
    let data: Vec<_> = toy_set(8, 0).into_iter().filter(|d| d.label == Label::Fake).collect();
    let mut model = ClassifierModel::new(small_config(), 1).unwrap();
    assert!(matches!(
        model.train(&data, &opts(1, 0)),
        Err(Error::SingleClass { real: 0, fake: 4 })
    ));
}

#[test]
fn zero_head_predicts_one_half_and_ln2() {
    let mut model = ClassifierModel::new(small_config(), 1).unwrap();
    let last = model.network().layers().len() - 1;
    if let Layer::Dense(d) = &mut model.network_mut().layers_mut()[last] {
        d.weight.value.fill(0.0);
        d.bias.value.fill(0.0);
    } else {
        panic!("head is not dense");
    }
    for d in toy_set(6, 3) {
        assert_eq!(model.predict_proba(&d.image).unwrap(), 0.5);
        let l = model.loss_of(&d.image, d.label).unwrap();
        assert!((l as f64 - std::f64::consts::LN_2).abs() < 1e-6);
    }
}

#[test]
fn probabilities_losses_and_features_agree_with_logits() {
    let data = toy_set(16, 4);
    let mut model = ClassifierModel::new(small_config(), 2).unwrap();
    model.train(&data, &opts(2, 0)).unwrap();
    for d in &data {
        let logits = model.logits(&d.image).unwrap();
        let p = model.predict_proba(&d.image).unwrap();
        assert_eq!(p, softmax(&logits)[1]);
        // independent two-class softmax
        let (a, b) = (logits[0] as f64, logits[1] as f64);
        let oracle = 1.0 / (1.0 + (a - b).exp());
        assert!((p as f64 - oracle).abs() < 1e-6);
        assert!((softmax(&logits).iter().sum::<f32>() - 1.0).abs() < 1e-6);

        let l = model.loss_of(&d.image, d.label).unwrap();
        assert!(l >= 0.0);
        assert_eq!(l, cross_entropy(&logits, d.label.index()).unwrap() as f32);

        let f = model.feature_map(&d.image).unwrap();
        assert_eq!(f.len(), 16);
        assert!(f.iter().all(|&v| v >= 0.0 && v.is_finite()));
        assert_eq!(f, model.feature_map(&d.image).unwrap());
        let id = AugmentationAction::default_for(AugmentationOp::Identity).apply(&d.image).unwrap();
        assert_eq!(f, model.feature_map(&id).unwrap());

        let (f2, l2) = model.observe(&d.image, d.label).unwrap();
        assert_eq!((f2, l2), (f, l));
    }
    let imgs: Vec<&Image> = data.iter().map(|d| &d.image).collect();
    let many = model.predict_many(&imgs).unwrap();
    for (d, p) in data.iter().zip(many) {
        assert_eq!(p, model.predict_proba(&d.image).unwrap());
    }
}

#[test]
fn size_mismatch_is_rejected() {
    let model = ClassifierModel::new(small_config(), 1).unwrap();
    let wrong = Image::filled(8, 8, 3, 0).unwrap();
    assert!(matches!(model.predict_proba(&wrong), Err(Error::InvalidImage(_))));
    assert!(matches!(model.feature_map(&wrong), Err(Error::InvalidImage(_))));
}

#[test]
fn checkpoint_round_trip() {
    let data = toy_set(16, 6);
    let mut model = ClassifierModel::new(small_config(), 3).unwrap();
    model.train(&data, &opts(1, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.bin");
    model.to_checkpoint().save(&path).unwrap();
    let back = ClassifierModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(back.config(), model.config());
    assert_eq!(back.optimizer_steps(), model.optimizer_steps());
    for d in &data {
        assert_eq!(back.predict_proba(&d.image).unwrap(), model.predict_proba(&d.image).unwrap());
    }
}
