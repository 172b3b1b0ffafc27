use augpolicy::augment::{apply, default_bank, AugmentationOp, Bank, Image};
use augpolicy::classifier::{Detector, FeatureMap};
use augpolicy::rl::{ActionScorer, ActionScores};
use augpolicy::rng;
use augpolicy::tta::{
    classify_batch, classify_with_actions, classify_with_tta, random_actions, select_top_k, AuditRecord, TtaConfig,
};
use augpolicy::{Label, Result};
use rand::Rng;

/// Spatially sensitive toy detector: a fixed ramp of weights over the pixels.
struct Ramp;

impl Detector for Ramp {
    fn input_dims(&self) -> (usize, usize, usize) {
        (12, 10, 3)
    }

    fn feature_map(&self, image: &Image) -> Result<FeatureMap> {
        let p = image.pixels();
        let mean = p.iter().map(|&v| v as f32).sum::<f32>() / p.len() as f32 / 255.0;
        let first = p[..p.len() / 2].iter().map(|&v| v as f32).sum::<f32>() / (p.len() / 2) as f32 / 255.0;
        Ok(vec![mean, first])
    }

    fn predict_proba(&self, image: &Image) -> Result<f32> {
        let p = image.pixels();
        let z: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 / p.len() as f64 - 0.45) * v as f64 / 255.0)
            .sum::<f64>()
            / 20.0;
        Ok((1.0 / (1.0 + (-z).exp())) as f32)
    }
}

/// Ranking that varies with the state.
struct Wavy(usize);

impl ActionScorer for Wavy {
    fn num_actions(&self) -> usize {
        self.0
    }

    fn action_scores(&self, state: &[f32]) -> Result<ActionScores> {
        ActionScores::new(
            (0..self.0)
                .map(|a| (a as f32 * (1.0 + 7.0 * state[0]) + 13.0 * state[1]).sin())
                .collect(),
        )
    }
}

/// Always prefers one action, the rest tie at zero.
struct Prefers(usize, usize);

impl ActionScorer for Prefers {
    fn num_actions(&self) -> usize {
        self.0
    }

    fn action_scores(&self, _: &[f32]) -> Result<ActionScores> {
        ActionScores::new((0..self.0).map(|a| if a == self.1 { 1.0 } else { 0.0 }).collect())
    }
}

fn random_image(seed: u64) -> Image {
    let mut r = rng::rng(seed);
    let px = (0..12 * 10 * 3).map(|_| r.random::<u8>()).collect();
    Image::new(12, 10, 3, px).unwrap()
}

/// Selection by repeated argmax scan, then independent application and an
/// f64 mean, written without the library's helpers.
fn oracle(bank: &Bank, scores: &[f32], image: &Image, k: usize, original: bool) -> (Vec<usize>, f32) {
    let mut taken = vec![false; scores.len()];
    let mut chosen = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for a in 0..scores.len() {
            if !taken[a] && best.is_none_or(|b| scores[a] > scores[b]) {
                best = Some(a);
            }
        }
        taken[best.unwrap()] = true;
        chosen.push(best.unwrap());
    }
    let mut probs: Vec<f64> = chosen
        .iter()
        .map(|&a| Ramp.predict_proba(&apply(&bank.actions()[a], image).unwrap()).unwrap() as f64)
        .collect();
    if original {
        probs.push(Ramp.predict_proba(image).unwrap() as f64);
    }
    (chosen, (probs.iter().sum::<f64>() / probs.len() as f64) as f32)
}

#[test]
fn matches_compositional_oracle() {
    let bank = default_bank();
    let agent = Wavy(bank.len());
    for seed in 0..30 {
        let img = random_image(seed);
        for k in 1..=5 {
            for include_original in [false, true] {
                let cfg = TtaConfig { k, include_original };
                let (d, scores) = classify_with_tta(&Ramp, &agent, &bank, &img, &cfg).unwrap();
                assert_eq!(scores, agent.action_scores(&Ramp.feature_map(&img).unwrap()).unwrap().values());
                let (actions, fused) = oracle(&bank, &scores, &img, k, include_original);
                assert_eq!(d.actions, actions);
                assert_eq!(d.fused, fused);
                assert_eq!(d.probabilities.len(), k);
                assert_eq!(d.original.is_some(), include_original);
            }
        }
    }
}

#[test]
fn identity_top_one_reduces_to_plain_prediction() {
    let bank = default_bank();
    let id = bank.index_of(AugmentationOp::Identity).unwrap();
    let cfg = TtaConfig { k: 1, include_original: false };
    for seed in 0..20 {
        let img = random_image(seed);
        let (d, _) = classify_with_tta(&Ramp, &Prefers(bank.len(), id), &bank, &img, &cfg).unwrap();
        assert_eq!(d.actions, vec![id]);
        assert_eq!(d.fused, Ramp.predict_proba(&img).unwrap());
    }
}

#[test]
fn ties_resolve_to_lowest_index() {
    let bank = default_bank();
    let cfg = TtaConfig { k: 3, include_original: false };
    let (d, _) = classify_with_tta(&Ramp, &Prefers(bank.len(), 9), &bank, &random_image(0), &cfg).unwrap();
    assert_eq!(d.actions, vec![9, 0, 1]);
    assert_eq!(select_top_k(&[0.0; 4], 4).unwrap(), vec![0, 1, 2, 3]);
}

#[test]
fn batch_matches_single_and_is_deterministic() {
    let bank = default_bank();
    let agent = Wavy(bank.len());
    let images: Vec<Image> = (0..16).map(random_image).collect();
    let refs: Vec<&Image> = images.iter().collect();
    let cfg = TtaConfig::default();
    let batch = classify_batch(&Ramp, &agent, &bank, &refs, &cfg).unwrap();
    assert_eq!(batch, classify_batch(&Ramp, &agent, &bank, &refs, &cfg).unwrap());
    for (img, got) in images.iter().zip(&batch) {
        assert_eq!(got, &classify_with_tta(&Ramp, &agent, &bank, img, &cfg).unwrap());
    }
}

#[test]
fn rejects_bad_k_and_mismatched_agent() {
    let bank = default_bank();
    let img = random_image(0);
    for k in [0, bank.len() + 1] {
        let cfg = TtaConfig { k, include_original: false };
        assert!(classify_with_tta(&Ramp, &Wavy(bank.len()), &bank, &img, &cfg).is_err());
    }
    assert!(classify_with_tta(&Ramp, &Wavy(3), &bank, &img, &TtaConfig::default()).is_err());
    assert!(classify_with_actions(&Ramp, &bank, &img, &[], false).is_err());
    assert!(classify_with_actions(&Ramp, &bank, &img, &[99], false).is_err());
}

#[test]
fn random_actions_are_distinct_and_reproducible() {
    for seed in 0..50 {
        let a = random_actions(14, 3, &mut rng::rng(seed)).unwrap();
        assert_eq!(a, random_actions(14, 3, &mut rng::rng(seed)).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|&i| i < 14));
        assert!(a[0] != a[1] && a[1] != a[2] && a[0] != a[2]);
    }
    let mut all = random_actions(14, 14, &mut rng::rng(1)).unwrap();
    all.sort_unstable();
    assert_eq!(all, (0..14).collect::<Vec<_>>());
    assert!(random_actions(14, 15, &mut rng::rng(1)).is_err());
}

#[test]
fn random_actions_cover_the_bank_uniformly() {
    let mut counts = [0usize; 14];
    let mut r = rng::rng(5);
    let draws = 7000;
    for _ in 0..draws {
        for a in random_actions(14, 3, &mut r).unwrap() {
            counts[a] += 1;
        }
    }
    let expected = draws as f64 * 3.0 / 14.0;
    for c in counts {
        assert!((c as f64 - expected).abs() < 0.1 * expected, "{counts:?}");
    }
}

#[test]
fn audit_record_names_actions() {
    let bank = default_bank();
    let agent = Wavy(bank.len());
    let (d, scores) = classify_with_tta(&Ramp, &agent, &bank, &random_image(3), &TtaConfig::default()).unwrap();
    let rec = AuditRecord::new("img7", Label::Fake, &bank, &d, scores.clone());
    let line = rec.to_json_line();
    assert!(line.ends_with('\n') && !line.trim_end().contains('\n'));
    let back: AuditRecord = serde_json::from_str(&line).unwrap();
    assert_eq!(back, rec);
    assert_eq!(back.actions, d.actions.iter().map(|&a| bank.names()[a].to_string()).collect::<Vec<_>>());
    assert_eq!(back.action_scores, scores);
    assert_eq!(back.label, Label::Fake);
}
