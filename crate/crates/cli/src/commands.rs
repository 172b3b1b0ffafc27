//! The six subcommands. Every artifact lives under `<out>/seed-<s>/`; only
//! `<out>/run_manifest.json` carries wall-clock timestamps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use augpolicy::augment::Bank;
use augpolicy::classifier::{ClassifierModel, LabeledImage};
use augpolicy::metrics::roc_curve;
use augpolicy::nn::Checkpoint;
use augpolicy::rl::{train_agent, Agent, AgentKind, AugmentEnv};
use augpolicy::rng::{derive_seed, streams};
use augpolicy::synthdata::{generate, Dataset, Splits};
use augpolicy::tta::TtaConfig;
use serde::Serialize;

use crate::config::{RunConfig, SplitName};
use crate::error::{CliError, Result};
use crate::harness::{ablate, ablation_table, evaluate_set, AblationRow, EvalRow, EvalSet, Evaluation, TtaMode};
use crate::plot::{line_chart, Series};

/// Where each artifact of one seed lives.
#[derive(Clone, Debug)]
pub struct SeedPaths {
    pub dir: PathBuf,
}

impl SeedPaths {
    pub fn new(out: &Path, seed: u64) -> Self {
        SeedPaths {
            dir: out.join(format!("seed-{seed}")),
        }
    }

    pub fn dataset(&self) -> PathBuf {
        self.dir.join("data").join("dataset.dfta")
    }

    pub fn data_manifest(&self) -> PathBuf {
        self.dir.join("data").join("manifest.json")
    }

    pub fn classifier(&self) -> PathBuf {
        self.dir.join("classifier.ckpt")
    }

    pub fn train_log(&self) -> PathBuf {
        self.dir.join("train_log.csv")
    }

    pub fn val_metrics(&self) -> PathBuf {
        self.dir.join("val_metrics.csv")
    }

    pub fn agent(&self, kind: AgentKind) -> PathBuf {
        self.dir.join(format!("agent-{kind}.ckpt"))
    }

    pub fn rewards(&self, kind: AgentKind) -> PathBuf {
        self.dir.join(format!("rewards-{kind}.csv"))
    }

    pub fn rewards_plot(&self, kind: AgentKind) -> PathBuf {
        self.dir.join(format!("rewards-{kind}.svg"))
    }

    /// File stem of one evaluation cell, e.g. `eval-learned-dqn-k3`.
    pub fn eval_stem(mode: TtaMode, k: usize, kind: AgentKind) -> String {
        match mode {
            TtaMode::None => "eval-none".to_string(),
            TtaMode::Random => format!("eval-random-k{k}"),
            TtaMode::Learned => format!("eval-learned-{kind}-k{k}"),
        }
    }

    pub fn eval(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}.{ext}"))
    }

    pub fn ablation(&self, kind: AgentKind, ext: &str) -> PathBuf {
        self.dir.join(format!("ablation-{kind}.{ext}"))
    }
}

fn refuse_overwrite(paths: &[PathBuf], force: bool) -> Result<()> {
    match paths.iter().find(|p| p.exists()) {
        Some(p) if !force => Err(CliError::Exists(p.clone())),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            path: path.to_path_buf(),
            what: what.to_string(),
        })
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// A dataset with per-domain stratified splits.
pub struct Prepared {
    pub dataset: Dataset,
    /// Global item indices per domain.
    pub splits: BTreeMap<u8, Splits>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Prepared {
    pub fn new(dataset: Dataset, cfg: &RunConfig, seed: u64) -> Self {
        let mut by_domain: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for (i, item) in dataset.items().iter().enumerate() {
            by_domain.entry(item.domain).or_default().push(i);
        }
        let splits = by_domain
            .into_iter()
            .map(|(d, idx)| {
                let labels: Vec<_> = idx.iter().map(|&i| dataset.items()[i].label).collect();
                let local = Splits::stratified(&labels, cfg.data.splits, derive_seed(seed, streams::SPLIT, d as u64));
                let global = |v: Vec<usize>| v.into_iter().map(|j| idx[j]).collect();
                (
                    d,
                    Splits {
                        train: global(local.train),
                        val: global(local.val),
                        test: global(local.test),
                    },
                )
            })
            .collect();
        Prepared { dataset, splits }
    }

    pub fn domains(&self) -> Vec<u8> {
        self.splits.keys().copied().collect()
    }

    pub fn indices(&self, domain: u8, part: Part) -> Result<&[usize]> {
        let s = self
            .splits
            .get(&domain)
            .ok_or_else(|| CliError::config(format!("dataset has no images from domain {domain}")))?;
        Ok(match part {
            Part::Train => &s.train,
            Part::Val => &s.val,
            Part::Test => &s.test,
        })
    }

    pub fn owned(&self, domain: u8, part: Part) -> Result<Vec<LabeledImage>> {
        Ok(self.indices(domain, part)?.iter().map(|&i| self.dataset.items()[i].clone()).collect())
    }

    pub fn eval_set(&self, cfg: &RunConfig, domain: u8, part: Part) -> Result<EvalSet<'_>> {
        let idx = self.indices(domain, part)?;
        Ok(EvalSet {
            name: cfg.domain_name(domain),
            domain,
            ids: idx.iter().map(|i| format!("{i:05}")).collect(),
            samples: idx.iter().map(|&i| &self.dataset.items()[i]).collect(),
        })
    }
}

pub fn load_dataset(cfg: &RunConfig, seed: u64) -> Result<Dataset> {
    match &cfg.data.path {
        Some(p) if p.is_dir() => Ok(Dataset::import_png_dir(p)?),
        Some(p) => Ok(Dataset::load(p)?),
        None => {
            let path = SeedPaths::new(&cfg.out, seed).dataset();
            require(&path, "dataset (run `gen` first)")?;
            Ok(Dataset::load(&path)?)
        }
    }
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    require(path, "classifier checkpoint (run `train` first)")?;
    Ok(ClassifierModel::from_checkpoint(&Checkpoint::load(path)?)?)
}

/// Loads an agent and checks it was trained against `bank`.
pub fn load_agent(path: &Path, kind: AgentKind, bank: &Bank) -> Result<Agent> {
    require(path, &format!("{kind} agent checkpoint (run `train-agent` first)"))?;
    let ck = Checkpoint::load(path)?;
    let names = bank.names().join(",");
    if ck.meta("bank") != Some(names.as_str()) {
        return Err(CliError::config(format!(
            "{} was trained with bank [{}], config has [{names}]",
            path.display(),
            ck.meta("bank").unwrap_or("?")
        )));
    }
    Ok(Agent::from_checkpoint(&ck)?)
}

#[derive(Serialize)]
struct GenManifest<'a> {
    manifest: augpolicy::synthdata::DatasetManifest,
    domains: &'a [augpolicy::synthdata::DomainSpec],
    images: usize,
}

pub fn cmd_gen(cfg: &RunConfig, force: bool) -> Result<()> {
    if cfg.data.path.is_some() {
        return Err(CliError::config("data.path is set; there is nothing to generate"));
    }
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(&cfg.out, seed);
        refuse_overwrite(&[paths.dataset(), paths.data_manifest()], force)?;
        let manifest = cfg.manifest(seed);
        let mut items = Vec::new();
        for spec in &cfg.data.domains {
            items.extend(generate(spec, &manifest, seed)?);
        }
        let ds = Dataset::new(cfg.data.width, cfg.data.height, cfg.data.channels, items)?;
        let meta = GenManifest {
            images: ds.len(),
            manifest,
            domains: &cfg.data.domains,
        };
        write_file(&paths.dataset(), ds.to_bytes())?;
        write_file(&paths.data_manifest(), serde_json::to_string_pretty(&meta).expect("manifest serializes") + "\n")?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, force: bool) -> Result<()> {
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(&cfg.out, seed);
        refuse_overwrite(&[paths.classifier(), paths.train_log(), paths.val_metrics()], force)?;
        let prep = Prepared::new(load_dataset(cfg, seed)?, cfg, seed);
        let train = prep.owned(cfg.data.train_domain, Part::Train)?;
        let mut model = ClassifierModel::new(cfg.classifier_config(prep.dataset.dims()), seed)?;
        let log = model.train(&train, &cfg.train_options(seed))?;
        let val = prep.eval_set(cfg, cfg.data.train_domain, Part::Val)?;
        let e = evaluate_set::<_, Agent>(&model, None, &cfg.bank()?, &val, TtaMode::None, &TtaConfig::default(), seed)?;
        write_file(&paths.classifier(), model.to_checkpoint().with_meta("seed", seed).to_bytes())?;
        write_file(&paths.train_log(), log.to_csv())?;
        let row = eval_row(cfg, TtaMode::None, 0, "-", &val, &e);
        write_file(&paths.val_metrics(), to_csv(&[row])?)?;
    }
    Ok(())
}

pub fn cmd_train_agent(cfg: &RunConfig, force: bool) -> Result<()> {
    let kind = cfg.agent.kind;
    let bank = cfg.bank()?;
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(&cfg.out, seed);
        refuse_overwrite(&[paths.agent(kind), paths.rewards(kind), paths.rewards_plot(kind)], force)?;
        let model = load_classifier(&paths.classifier())?;
        let prep = Prepared::new(load_dataset(cfg, seed)?, cfg, seed);
        let part = match cfg.agent.split {
            SplitName::Train => Part::Train,
            SplitName::Val => Part::Val,
        };
        let samples = prep.owned(cfg.data.train_domain, part)?;
        let env = AugmentEnv::new(&model, &bank, &samples, cfg.agent.horizon)?;
        let mut agent = Agent::new(kind, model.feature_dim(), bank.len(), &cfg.agent_config(), seed)?;
        let log = train_agent(&mut agent, &env, &cfg.agent_options(seed))?;
        let ck = agent.to_checkpoint().with_meta("bank", bank.names().join(","));
        write_file(&paths.agent(kind), ck.to_bytes())?;
        write_file(&paths.rewards(kind), log.to_csv())?;
        let curve = Series {
            name: format!("{kind} moving mean"),
            points: log.points.iter().map(|p| (p.episode as f64, p.mean_reward)).collect(),
        };
        write_file(
            &paths.rewards_plot(kind),
            line_chart(&format!("{kind} reward"), "episode", "mean reward", &[curve], None),
        )?;
    }
    Ok(())
}

fn eval_row(cfg: &RunConfig, mode: TtaMode, k: usize, agent: &str, set: &EvalSet<'_>, e: &Evaluation) -> EvalRow {
    EvalRow {
        mode,
        k,
        agent: agent.to_string(),
        train_domain: cfg.domain_name(cfg.data.train_domain),
        eval_domain: set.name.clone(),
        auc: e.report.auc,
        pauc: e.report.pauc,
        eer: e.report.eer,
        eer_threshold: e.report.eer_threshold,
        n_real: e.report.n_real,
        n_fake: e.report.n_fake,
    }
}

/// Evaluates every domain's test split under `mode`; returns the rows of
/// the last seed.
pub fn cmd_eval(cfg: &RunConfig, mode: TtaMode, force: bool) -> Result<Vec<EvalRow>> {
    let kind = cfg.agent.kind;
    let bank = cfg.bank()?;
    let k = if mode == TtaMode::None { 0 } else { cfg.tta.k };
    let stem = SeedPaths::eval_stem(mode, k, kind);
    let mut last = Vec::new();
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(&cfg.out, seed);
        let outputs = [paths.eval(&stem, "csv"), paths.eval(&stem, "jsonl"), paths.eval(&stem, "svg")];
        refuse_overwrite(&outputs, force)?;
        let model = load_classifier(&paths.classifier())?;
        let agent = match mode {
            TtaMode::Learned => Some(load_agent(&paths.agent(kind), kind, &bank)?),
            _ => None,
        };
        let prep = Prepared::new(load_dataset(cfg, seed)?, cfg, seed);
        let agent_name = if mode == TtaMode::Learned { kind.name() } else { "-" };
        let mut rows = Vec::new();
        let mut audit = String::new();
        let mut curves = Vec::new();
        for d in prep.domains() {
            let set = prep.eval_set(cfg, d, Part::Test)?;
            let e = evaluate_set(&model, agent.as_ref(), &bank, &set, mode, &cfg.tta, seed)?;
            for r in &e.audit {
                audit.push_str(&r.to_json_line());
            }
            curves.push(Series {
                name: format!("{} AUC {:.3}", set.name, e.report.auc),
                points: roc_curve(&e.scores)?,
            });
            rows.push(eval_row(cfg, mode, k, agent_name, &set, &e));
        }
        write_file(&outputs[0], to_csv(&rows)?)?;
        write_file(&outputs[1], audit)?;
        write_file(&outputs[2], line_chart(&format!("ROC, {stem}"), "FPR", "TPR", &curves, Some((0.0, 1.0, 0.0, 1.0))))?;
        last = rows;
    }
    Ok(last)
}

pub fn cmd_ablate(cfg: &RunConfig, force: bool) -> Result<Vec<AblationRow>> {
    let kind = cfg.agent.kind;
    let bank = cfg.bank()?;
    let mut last = Vec::new();
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(&cfg.out, seed);
        let outputs = [paths.ablation(kind, "csv"), paths.ablation(kind, "txt"), paths.ablation(kind, "svg")];
        refuse_overwrite(&outputs, force)?;
        let model = load_classifier(&paths.classifier())?;
        let agent = load_agent(&paths.agent(kind), kind, &bank)?;
        let prep = Prepared::new(load_dataset(cfg, seed)?, cfg, seed);
        let sets = prep
            .domains()
            .into_iter()
            .map(|d| prep.eval_set(cfg, d, Part::Test))
            .collect::<Result<Vec<_>>>()?;
        let rows = ablate(
            &model,
            &agent,
            &bank,
            &sets,
            cfg.ablate.k_min..=cfg.ablate.k_max,
            cfg.tta.include_original,
        )?;
        let series: Vec<Series> = sets
            .iter()
            .map(|s| Series {
                name: s.name.clone(),
                points: rows.iter().filter(|r| r.eval_domain == s.name).map(|r| (r.k as f64, r.auc)).collect(),
            })
            .collect();
        write_file(&outputs[0], to_csv(&rows)?)?;
        write_file(&outputs[1], ablation_table(&rows))?;
        write_file(&outputs[2], line_chart(&format!("{kind} top-k ablation"), "k", "AUC", &series, None))?;
        last = rows;
    }
    Ok(last)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub table: String,
    pub mode: String,
    pub k: usize,
    pub agent: String,
    pub eval_domain: String,
    pub seeds: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub pauc_mean: f64,
    pub eer_mean: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::config(format!("{}: {e}", path.display()))))
        .collect()
}

/// Aggregates every seed's eval and ablation CSVs into `report.csv` and
/// `report.md` (mean and sample std over seeds).
pub fn cmd_report(cfg: &RunConfig, force: bool) -> Result<Vec<SummaryRow>> {
    let csv_path = cfg.out.join("report.csv");
    let md_path = cfg.out.join("report.md");
    refuse_overwrite(&[csv_path.clone(), md_path.clone()], force)?;
    type Key = (String, String, usize, String, String);
    let mut cells: BTreeMap<Key, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for &seed in &cfg.seeds {
        let dir = SeedPaths::new(&cfg.out, seed).dir;
        require(&dir, "seed output directory")?;
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| CliError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for f in files {
            let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if name.starts_with("eval-") {
                for r in read_rows::<EvalRow>(&f)? {
                    cells
                        .entry(("eval".into(), r.mode.name().into(), r.k, r.agent, r.eval_domain))
                        .or_default()
                        .push((r.auc, r.pauc, r.eer));
                }
            } else if let Some(kind) = name.strip_prefix("ablation-").and_then(|s| s.strip_suffix(".csv")) {
                for r in read_rows::<AblationRow>(&f)? {
                    cells
                        .entry(("ablation".into(), "learned".into(), r.k, kind.to_string(), r.eval_domain))
                        .or_default()
                        .push((r.auc, r.pauc, r.eer));
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Missing {
            path: cfg.out.clone(),
            what: "evaluation results (run `eval` or `ablate` first)".into(),
        });
    }
    let rows: Vec<SummaryRow> = cells
        .into_iter()
        .map(|((table, mode, k, agent, eval_domain), v)| {
            let auc: Vec<f64> = v.iter().map(|x| x.0).collect();
            let (auc_mean, auc_std) = mean_std(&auc);
            SummaryRow {
                table,
                mode,
                k,
                agent,
                eval_domain,
                seeds: v.len(),
                auc_mean,
                auc_std,
                pauc_mean: mean_std(&v.iter().map(|x| x.1).collect::<Vec<_>>()).0,
                eer_mean: mean_std(&v.iter().map(|x| x.2).collect::<Vec<_>>()).0,
            }
        })
        .collect();
    let mut md = format!(
        "# Results\n\nTrained on `{}`; mean over seeds {:?}.\n\n| table | mode | k | agent | domain | seeds | AUC | ± | pAUC | EER |\n|---|---|---|---|---|---|---|---|---|---|\n",
        cfg.domain_name(cfg.data.train_domain),
        cfg.seeds
    );
    for r in &rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            r.table, r.mode, r.k, r.agent, r.eval_domain, r.seeds, r.auc_mean, r.auc_std, r.pauc_mean, r.eer_mean
        ));
    }
    write_file(&csv_path, to_csv(&rows)?)?;
    write_file(&md_path, md)?;
    Ok(rows)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    seeds: &'a [u64],
    started_unix: u64,
    finished_unix: u64,
    exit_code: i32,
    config: String,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Runs `f` and records the invocation in `<out>/run_manifest.json`.
pub fn with_manifest<T>(cfg: &RunConfig, command: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let started_unix = unix_now();
    let out = f();
    let m = RunManifest {
        command,
        seeds: &cfg.seeds,
        started_unix,
        finished_unix: unix_now(),
        exit_code: out.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
        config: cfg.to_toml(),
    };
    if cfg.out.exists() {
        let path = cfg.out.join("run_manifest.json");
        write_file(&path, serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n")?;
    }
    out
}
