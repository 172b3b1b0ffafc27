//! Acceptance suite. Runs every criterion in sequence (wall-clock budgets are
//! part of several), prints one PASS/FAIL line each and exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use augpolicy::augment::{apply, default_bank, AugmentationAction, AugmentationOp, Bank, Image};
use augpolicy::classifier::{ClassifierConfig, ClassifierModel, Detector, FeatureMap, LabeledImage};
use augpolicy::metrics::{auc, eer, pauc_at_fpr, LabeledScore};
use augpolicy::nn::gradcheck;
use augpolicy::nn::{BatchNorm, Conv2d, Dense, Layer, Network, Tensor};
use augpolicy::rl::{
    env_step, train_agent, transition_from, ActionScorer, ActionScores, Agent, AgentConfig, AgentKind,
    AgentTrainOptions, TableBandit,
};
use augpolicy::{rng, Label};
use augpolicy_cli::commands::{cmd_ablate, cmd_eval, cmd_gen, cmd_train, cmd_train_agent, SeedPaths};
use augpolicy_cli::harness::{ablate, AblationRow, EvalRow, EvalSet, TtaMode};
use augpolicy_cli::RunConfig;
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, elapsed: Duration, o: &Outcome) -> bool {
    println!(
        "criterion {n} {name}: {} ({}; {:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    o.pass
}

// ---- 1. gradients ---------------------------------------------------------

fn rand_tensor<R: Rng>(shape: &[usize], r: &mut R, f: impl Fn(f32) -> f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| f(r.random_range(-1.0..1.0))).collect()).unwrap()
}

fn gradients() -> Outcome {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for seed in 0..20u64 {
        let mut r = rng::rng(1000 + seed);
        let id = |v: f32| v;
        let mut bn = BatchNorm::new(3);
        for v in bn.gamma.value.data_mut() {
            *v = r.random_range(0.5..1.5);
        }
        let pad = (seed % 2) as usize;
        let cases: Vec<(&str, Network, Tensor)> = vec![
            ("dense", Network::new(vec![6], vec![Layer::Dense(Dense::new(6, 4, &mut r))]).unwrap(), rand_tensor(&[3, 6], &mut r, id)),
            (
                "conv2d",
                Network::new(vec![2, 5, 5], vec![Layer::Conv2d(Conv2d::new(2, 3, 3, pad, &mut r))]).unwrap(),
                rand_tensor(&[2, 2, 5, 5], &mut r, id),
            ),
            (
                "relu",
                Network::new(vec![7], vec![Layer::Relu]).unwrap(),
                rand_tensor(&[3, 7], &mut r, |v| v.signum() * (0.1 + v.abs())),
            ),
            ("maxpool", Network::new(vec![2, 4, 4], vec![Layer::MaxPool2d { size: 2 }]).unwrap(), {
                let mut vals: Vec<f32> = (0..64).map(|i| i as f32 * 0.01 - 0.3).collect();
                vals.shuffle(&mut r);
                Tensor::new(vec![2, 2, 4, 4], vals).unwrap()
            }),
            (
                "batchnorm",
                Network::new(vec![3, 2, 2], vec![Layer::BatchNorm(bn)]).unwrap(),
                rand_tensor(&[4, 3, 2, 2], &mut r, id),
            ),
            ("softmax", Network::new(vec![5], vec![Layer::Softmax]).unwrap(), rand_tensor(&[3, 5], &mut r, id)),
        ];
        for (name, net, x) in cases {
            let rep = gradcheck::check(&net, &x, 1e-3, &mut rng::rng(seed)).unwrap();
            let e = worst.entry(name).or_insert(0.0);
            *e = e.max(rep.max_relative_error());
        }
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    Outcome {
        pass: max <= 1e-3,
        detail: format!(
            "20 seeds x {} layer kinds, worst rel err {max:.2e} ({})",
            worst.len(),
            worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

// ---- 2. augmentation examples ---------------------------------------------

fn act(op: AugmentationOp, m: f32) -> AugmentationAction {
    AugmentationAction::new(op, m).unwrap()
}

fn noise_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
    let mut r = rng::rng(seed);
    Image::new(w, h, c, (0..w * h * c).map(|_| r.random()).collect()).unwrap()
}

fn augment_examples() -> Outcome {
    use AugmentationOp::*;
    let mut failed: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };
    for seed in 0..10 {
        let img = noise_image(17, 11, 3, seed);
        check("identity", act(Identity, 0.0).apply(&img).unwrap() == img);
        for op in [Rotate, TranslateX, TranslateY, ShearX, ShearY] {
            check(op.name(), act(op, 0.0).apply(&img).unwrap() == img);
        }
        for op in [Color, Contrast, Brightness, Sharpness] {
            check(op.name(), act(op, 1.0).apply(&img).unwrap() == img);
        }
        check("solarize 256", act(Solarize, 256.0).apply(&img).unwrap() == img);
        let inv = act(Solarize, 0.0).apply(&img).unwrap();
        check("solarize 0", inv.pixels().iter().zip(img.pixels()).all(|(a, b)| *a == 255 - *b));
        for bits in 1..=8u32 {
            let out = act(Posterize, bits as f32).apply(&img).unwrap();
            let mask = !((1u16 << (8 - bits)) - 1) as u8;
            check("posterize", out.pixels().iter().zip(img.pixels()).all(|(a, b)| *a == b & mask));
        }
        let mut full = img.clone();
        for c in 0..3 {
            full.set(0, 0, c, 0);
            full.set(1, 0, c, 255);
        }
        check("autocontrast full range", act(AutoContrast, 0.0).apply(&full).unwrap() == full);
        let gray = noise_image(8, 8, 1, seed);
        check("color on gray", act(Color, 1.9).apply(&gray).unwrap() == gray);
    }
    let two = Image::new(2, 1, 1, vec![50, 150]).unwrap();
    check("autocontrast stretch", act(AutoContrast, 0.0).apply(&two).unwrap().pixels() == [0, 255]);
    for c in [1, 3] {
        let flat = Image::filled(8, 8, c, 77).unwrap();
        check("equalize constant", act(Equalize, 0.0).apply(&flat).unwrap() == flat);
    }
    let ramp = Image::new(3, 1, 1, vec![10, 100, 200]).unwrap();
    check("brightness", act(Brightness, 1.5).apply(&ramp).unwrap().pixels() == [15, 150, 255]);
    check("posterize 1 bit", act(Posterize, 1.0).apply(&Image::filled(1, 1, 1, 200).unwrap()).unwrap().pixels() == [128]);
    let mut dot = Image::filled(10, 10, 1, 0).unwrap();
    dot.set(2, 3, 0, 200);
    let moved = act(TranslateX, 0.2).apply(&dot).unwrap();
    check("translate", moved.get(4, 3, 0) == 200 && moved.get(2, 3, 0) == 0);
    for (op, m) in [(Rotate, 31.0), (Posterize, 0.0), (Solarize, 257.0), (TranslateX, 0.31), (Identity, 1.0), (Contrast, f32::NAN)] {
        check("range rejection", AugmentationAction::new(op, m).is_err());
        check("range rejection on apply", apply(&AugmentationAction { op, magnitude: m }, &two).is_err());
    }
    let bank = default_bank();
    check("bank size", bank.len() == 14);
    check(
        "bank order",
        AugmentationOp::ALL.iter().enumerate().all(|(i, op)| bank.index_of(*op) == Some(i)),
    );
    check(
        "names",
        AugmentationOp::ALL.iter().all(|op| AugmentationOp::from_name(op.name()) == Some(*op))
            && ShearX.name() == "shear_x"
            && AutoContrast.name() == "auto_contrast",
    );
    failed.dedup();
    Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            "all byte-level examples hold".into()
        } else {
            format!("failed: {}", failed.join(", "))
        },
    }
}

// ---- 3. metrics -------------------------------------------------------------

fn brute_auc(s: &[LabeledScore]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for f in s.iter().filter(|x| x.label == Label::Fake) {
        for r in s.iter().filter(|x| x.label == Label::Real) {
            pairs += 1.0;
            wins += if f.score > r.score {
                1.0
            } else if f.score == r.score {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

fn rates(s: &[LabeledScore], t: f64) -> (f64, f64) {
    let nr = s.iter().filter(|x| x.label == Label::Real).count() as f64;
    let nf = s.len() as f64 - nr;
    let fp = s.iter().filter(|x| x.label == Label::Real && x.score >= t).count() as f64;
    let tp = s.iter().filter(|x| x.label == Label::Fake && x.score >= t).count() as f64;
    (fp / nr, tp / nf)
}

fn distinct(s: &[LabeledScore]) -> Vec<f64> {
    let mut t: Vec<f64> = s.iter().map(|x| x.score).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn brute_pauc(s: &[LabeledScore], ceiling: f64) -> f64 {
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(distinct(s).iter().rev().map(|&t| rates(s, t)));
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let hi = x1.min(ceiling);
        if hi <= x0 {
            continue;
        }
        let y_hi = if x1 > x0 { y0 + (y1 - y0) * (hi - x0) / (x1 - x0) } else { y1 };
        area += (hi - x0) * (y0 + y_hi) / 2.0;
    }
    area / ceiling
}

fn brute_eer(s: &[LabeledScore]) -> (f64, f64) {
    let mut best: Option<(f64, f64, f64)> = None;
    let nf = s.iter().filter(|x| x.label == Label::Fake).count() as f64;
    for t in distinct(s) {
        let (fpr, _) = rates(s, t);
        let fnr = s.iter().filter(|x| x.label == Label::Fake && x.score < t).count() as f64 / nf;
        let gap = (fpr - fnr).abs();
        if best.is_none_or(|b| gap < b.0) {
            best = Some((gap, (fpr + fnr) / 2.0, t));
        }
    }
    let b = best.unwrap();
    (b.1, b.2)
}

fn metrics() -> Outcome {
    let mut r = rng::rng(33);
    let (mut d_auc, mut d_pauc, mut eer_mismatch) = (0.0f64, 0.0f64, 0);
    for set in 0..100 {
        let n = r.random_range(2..=200);
        let mut s: Vec<LabeledScore> = (0..n)
            .map(|_| {
                let label = if r.random_bool(0.5) { Label::Fake } else { Label::Real };
                let shift = if label == Label::Fake { 0.3 } else { 0.0 };
                let score = if set % 2 == 0 {
                    (r.random_range(0..10) as f64 + 10.0 * shift).floor() / 10.0
                } else {
                    r.random::<f64>() + shift
                };
                LabeledScore::new(score, label)
            })
            .collect();
        s[0].label = Label::Fake;
        s[1].label = Label::Real;
        d_auc = d_auc.max((auc(&s).unwrap() - brute_auc(&s)).abs());
        d_pauc = d_pauc.max((pauc_at_fpr(&s, 0.1).unwrap() - brute_pauc(&s, 0.1)).abs());
        eer_mismatch += usize::from(eer(&s).unwrap() != brute_eer(&s));
    }
    Outcome {
        pass: d_auc <= 1e-9 && d_pauc <= 1e-6 && eer_mismatch == 0,
        detail: format!("100 sets: max |auc diff| {d_auc:.1e}, max |pauc diff| {d_pauc:.1e}, eer mismatches {eer_mismatch}"),
    }
}

// ---- 4. reward contract -----------------------------------------------------

fn reward_contract() -> Outcome {
    let (state, aug) = (vec![1.0f32, 2.0], vec![3.0f32, 4.0]);
    let mut grid_bad = 0;
    for i in 0..=20 {
        for j in 0..=20 {
            let (l1, l2) = (i as f32 / 10.0, j as f32 / 10.0);
            let t = transition_from(state.clone(), 5, l1, l2, aug.clone(), true).unwrap();
            let want_next = if l2 < l1 { &aug } else { &state };
            if t.reward != l1 - l2 || &t.next_state != want_next || t.state != state || t.action != 5 || !t.done {
                grid_bad += 1;
            }
        }
    }
    let cfg = ClassifierConfig {
        width: 16,
        height: 16,
        channels: 3,
        ..Default::default()
    };
    let model = ClassifierModel::new(cfg, 4).unwrap();
    let bank = default_bank();
    let id = bank.index_of(AugmentationOp::Identity).unwrap();
    let mut identity_bad = 0;
    for seed in 0..50 {
        let sample = LabeledImage {
            image: noise_image(16, 16, 3, 500 + seed),
            label: if seed % 2 == 0 { Label::Real } else { Label::Fake },
            domain: 0,
        };
        let s = model.feature_map(&sample.image).unwrap();
        let t = env_step(&model, &sample, id, &bank[id], &s).unwrap();
        if t.reward != 0.0 || t.next_state != s {
            identity_bad += 1;
        }
    }
    Outcome {
        pass: grid_bad == 0 && identity_bad == 0,
        detail: format!("441 grid points, {grid_bad} wrong; identity reward nonzero on {identity_bad}/50 images"),
    }
}

// ---- 5. bandit ----------------------------------------------------------------

fn bandit(seed: u64) -> (TableBandit, Vec<usize>) {
    let mut r = rng::rng(seed);
    let contexts = (0..4).map(|_| (0..8).map(|_| r.random_range(0.0..2.0)).collect()).collect();
    let rewards: Vec<Vec<f32>> = (0..4)
        .map(|_| loop {
            let row: Vec<f32> = (0..14).map(|_| r.random_range(-1.0..1.0)).collect();
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted[0] - sorted[1] >= 0.1 {
                break row;
            }
        })
        .collect();
    let best = rewards
        .iter()
        .map(|row| (0..row.len()).fold(0, |b, a| if row[a] > row[b] { a } else { b }))
        .collect();
    (TableBandit::new(contexts, rewards).unwrap(), best)
}

fn bandit_convergence(kind: AgentKind) -> Outcome {
    let mut values = Vec::new();
    for seed in 0..5 {
        let (b, best) = bandit(seed);
        let mut agent = Agent::new(kind, 8, 14, &AgentConfig::default(), seed).unwrap();
        let opts = AgentTrainOptions {
            episodes: 5000,
            seed,
            ..Default::default()
        };
        train_agent(&mut agent, &b, &opts).unwrap();
        let v: f64 = b
            .contexts()
            .iter()
            .zip(&best)
            .map(|(c, &o)| {
                let s = agent.action_scores(c).unwrap();
                match kind {
                    AgentKind::Dqn => f64::from(u8::from(augpolicy::nn::argmax(s.values()) == o)),
                    AgentKind::Ppo => s.values()[o] as f64,
                }
            })
            .sum::<f64>()
            / 4.0;
        values.push(v);
    }
    let bar = if kind == AgentKind::Dqn { 0.95 } else { 0.90 };
    let passing = values.iter().filter(|&&v| v >= bar).count();
    let what = if kind == AgentKind::Dqn { "greedy-optimal rate" } else { "optimal mass" };
    Outcome {
        pass: passing >= 4,
        detail: format!(
            "{kind} {what} per seed [{}], {passing}/5 at >= {bar}",
            values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

// ---- 6. domain shift ------------------------------------------------------------

fn rows(path: &Path) -> Vec<EvalRow> {
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

fn mean_auc(cfg: &RunConfig, stem: &str, domain: &str) -> f64 {
    let v: Vec<f64> = cfg
        .seeds
        .iter()
        .map(|&s| {
            let p = SeedPaths::new(&cfg.out, s).eval(stem, "csv");
            rows(&p).into_iter().find(|r| r.eval_domain == domain).unwrap().auc
        })
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn pipeline(cfg: &RunConfig, kinds: &[AgentKind]) {
    cmd_gen(cfg, false).unwrap();
    cmd_train(cfg, false).unwrap();
    cmd_eval(cfg, TtaMode::None, false).unwrap();
    cmd_eval(cfg, TtaMode::Random, false).unwrap();
    for &kind in kinds {
        let mut c = cfg.clone();
        c.agent.kind = kind;
        cmd_train_agent(&c, false).unwrap();
        cmd_eval(&c, TtaMode::Learned, false).unwrap();
    }
}

fn domain_shift(cfg: &RunConfig) -> Outcome {
    pipeline(cfg, &[AgentKind::Ppo, AgentKind::Dqn]);
    let (a, b) = (cfg.domain_name(0), cfg.domain_name(1));
    let none_b = mean_auc(cfg, "eval-none", &b);
    let none_a = mean_auc(cfg, "eval-none", &a);
    let rand_b = mean_auc(cfg, "eval-random-k3", &b);
    let ppo_b = mean_auc(cfg, "eval-learned-ppo-k3", &b);
    let ppo_a = mean_auc(cfg, "eval-learned-ppo-k3", &a);
    let dqn_b = mean_auc(cfg, "eval-learned-dqn-k3", &b);
    let dqn_a = mean_auc(cfg, "eval-learned-dqn-k3", &a);
    let (ca, cb, cc) = (ppo_b >= none_b, ppo_b >= rand_b + 0.005, ppo_a >= none_a - 0.01);
    let shift = none_a >= 0.9 && none_a - none_b >= 0.05;
    Outcome {
        pass: ca && cb && cc,
        detail: format!(
            "{} seeds, PPO top-3: (a) B {ppo_b:.4} vs none {none_b:.4} {}; (b) vs random {rand_b:.4} + 0.005 {}; \
             (c) A {ppo_a:.4} vs none {none_a:.4} - 0.01 {}; generator shift A {none_a:.4} / B {none_b:.4} {}; \
             DQN for reference: B {dqn_b:.4}, A {dqn_a:.4}",
            cfg.seeds.len(),
            ok(ca),
            ok(cb),
            ok(cc),
            ok(shift)
        ),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISSED"
    }
}

// ---- 7. ablation ------------------------------------------------------------------

const SIDE: usize = 40;

/// Linear detector: mean of the central 8x8 window, scaled to [0, 1].
struct Window;

impl Window {
    fn mean(image: &Image) -> f32 {
        let mut s = 0.0;
        for y in 16..24 {
            for x in 16..24 {
                s += image.get(x, y, 0) as f32;
            }
        }
        s / 64.0 / 255.0
    }
}

impl Detector for Window {
    fn input_dims(&self) -> (usize, usize, usize) {
        (SIDE, SIDE, 1)
    }

    fn feature_map(&self, image: &Image) -> augpolicy::Result<FeatureMap> {
        Ok(vec![Self::mean(image)])
    }

    fn predict_proba(&self, image: &Image) -> augpolicy::Result<f32> {
        Ok(Self::mean(image))
    }
}

/// Ranks the planted bank in its listed order regardless of state.
struct Fixed(usize);

impl ActionScorer for Fixed {
    fn num_actions(&self) -> usize {
        self.0
    }

    fn action_scores(&self, _: &[f32]) -> augpolicy::Result<ActionScores> {
        ActionScores::new((0..self.0).map(|a| -(a as f32)).collect())
    }
}

/// The planted bank: identity and two translations each expose an
/// independent noisy window carrying the label offset, so averaging them
/// improves separation; inversion then cancels the identity view and a dim
/// copy of it adds a down-weighted one. Equal weights over three independent
/// views are optimal, so AUC peaks at k = 3.
fn planted_bank() -> Bank {
    use AugmentationOp::*;
    Bank::new(vec![
        act(Identity, 0.0),
        act(TranslateX, 0.3),
        act(TranslateY, 0.3),
        act(Solarize, 0.0),
        act(Brightness, 0.1),
    ])
    .unwrap()
}

fn planted_images(domain: u8, offset: i32, n: usize) -> Vec<LabeledImage> {
    let mut r = rng::rng(7000 + domain as u64);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
            let shift = if label == Label::Fake { offset } else { 0 };
            let px = (0..SIDE * SIDE).map(|_| (r.random_range(60..160) + shift) as u8).collect();
            LabeledImage {
                image: Image::new(SIDE, SIDE, 1, px).unwrap(),
                label,
                domain,
            }
        })
        .collect()
}

fn grid_ok(rows: &[AblationRow], domains: usize) -> bool {
    rows.len() == 5 * domains
        && rows.chunks(5).all(|b| {
            b.iter().all(|r| r.eval_domain == b[0].eval_domain) && b.iter().map(|r| r.k).eq(1..=5)
        })
}

fn argmax_k(block: &[AblationRow]) -> usize {
    block.iter().fold(&block[0], |b, r| if r.auc > b.auc { r } else { b }).k
}

fn ablation(cfg: &RunConfig) -> Outcome {
    let bank = planted_bank();
    let data = [planted_images(0, 4, 1600), planted_images(1, 3, 1600)];
    let sets: Vec<EvalSet<'_>> = data
        .iter()
        .enumerate()
        .map(|(d, items)| EvalSet {
            name: format!("planted{d}"),
            domain: d as u8,
            ids: (0..items.len()).map(|i| i.to_string()).collect(),
            samples: items.iter().collect(),
        })
        .collect();
    let first = ablate(&Window, &Fixed(bank.len()), &bank, &sets, 1..=5, false).unwrap();
    let again = ablate(&Window, &Fixed(bank.len()), &bank, &sets, 1..=5, false).unwrap();
    let peaks: Vec<usize> = first.chunks(5).map(argmax_k).collect();
    let planted_ok = first == again && grid_ok(&first, 2) && peaks.iter().all(|&k| k == 3);

    // The same harness through the command on the trained seed-0 pipeline.
    let mut one = cfg.clone();
    one.seeds = vec![0];
    one.agent.kind = AgentKind::Ppo;
    let path = SeedPaths::new(&one.out, 0).ablation(AgentKind::Ppo, "csv");
    let real = cmd_ablate(&one, false).unwrap();
    let bytes = fs::read(&path).unwrap();
    let real_again = cmd_ablate(&one, true).unwrap();
    let cmd_ok = real == real_again && fs::read(&path).unwrap() == bytes && grid_ok(&real, 2);

    Outcome {
        pass: planted_ok && cmd_ok,
        detail: format!(
            "planted grid {} rows, AUC by k {} peaks at k={peaks:?}; trained pipeline grid {} rows, rerun identical: {}",
            first.len(),
            first
                .chunks(5)
                .map(|b| format!("[{}]", b.iter().map(|r| format!("{:.3}", r.auc)).collect::<Vec<_>>().join(" ")))
                .collect::<Vec<_>>()
                .join(" "),
            real.len(),
            real == real_again
        ),
    }
}

// ---- 8. reproducibility --------------------------------------------------------------

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility(first: &RunConfig, scratch: &Path) -> Outcome {
    let mut again = first.clone();
    again.seeds = vec![0];
    again.out = scratch.join("rerun");
    pipeline(&again, &[AgentKind::Ppo, AgentKind::Dqn]);
    cmd_ablate(&again, false).unwrap();
    let a = files(&SeedPaths::new(&first.out, 0).dir);
    let b = files(&SeedPaths::new(&again.out, 0).dir);
    let differing: Vec<String> = b
        .iter()
        .filter(|(k, v)| a.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let kinds = ["dfta", "ckpt", "csv", "jsonl"];
    let covered = kinds
        .iter()
        .all(|ext| b.keys().any(|k| k.extension().is_some_and(|e| e == *ext)));
    Outcome {
        pass: differing.is_empty() && covered && !b.is_empty(),
        detail: format!(
            "seed 0 rerun from scratch: {} artifacts compared, {} differ{}",
            b.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(", ")) }
        ),
    }
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        seeds: vec![0, 1, 2, 3, 4],
        out: scratch.path().join("shift"),
        ..Default::default()
    };
    cfg.validate().unwrap();

    // Optional criterion numbers on the command line restrict the run.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected = |n: usize| only.is_empty() || only.contains(&n);
    if !selected(6) && (selected(7) || selected(8)) {
        cfg.seeds = vec![0];
        pipeline(&cfg, &[AgentKind::Ppo, AgentKind::Dqn]);
    }

    let mut all = true;
    let budgets: [(usize, &str, Option<Duration>); 8] = [
        (1, "gradient check", Some(Duration::from_secs(60))),
        (2, "augmentation examples", Some(Duration::from_secs(10))),
        (3, "metric oracles", Some(Duration::from_secs(30))),
        (4, "reward contract", None),
        (5, "bandit convergence", Some(Duration::from_secs(300))),
        (6, "domain shift", Some(Duration::from_secs(1800))),
        (7, "ablation harness", None),
        (8, "reproducibility", None),
    ];
    for (n, name, budget) in budgets.into_iter().filter(|b| selected(b.0)) {
        let run = |f: &mut dyn FnMut() -> Outcome| {
            let t = Instant::now();
            let mut o = f();
            let el = t.elapsed();
            if let Some(b) = budget {
                if el > b {
                    o.pass = false;
                    o.detail.push_str(&format!("; over the {} s budget", b.as_secs()));
                }
            }
            (o, el)
        };
        match n {
            5 => {
                for kind in [AgentKind::Dqn, AgentKind::Ppo] {
                    let (o, el) = run(&mut || bandit_convergence(kind));
                    all &= report(n, &format!("{name} ({kind})"), el, &o);
                }
            }
            _ => {
                let (o, el) = run(&mut || match n {
                    1 => gradients(),
                    2 => augment_examples(),
                    3 => metrics(),
                    4 => reward_contract(),
                    6 => domain_shift(&cfg),
                    7 => ablation(&cfg),
                    _ => reproducibility(&cfg, scratch.path()),
                });
                all &= report(n, name, el, &o);
            }
        }
    }
    println!("acceptance: {}", if all { "all criteria PASS" } else { "FAILURES above" });
    if !all {
        std::process::exit(1);
    }
}
