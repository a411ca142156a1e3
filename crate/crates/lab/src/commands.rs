use crate::config::ExperimentConfig;
use crate::LabError;
use judgelab_core::bilevel::{
    dispersion_csv, loss_csv, pairwise_accuracy, train_judge, train_manifest, BilevelCheckpoint,
    LossRecord, RunManifest, TrainConfig, TrainOutcome,
};
use judgelab_core::judge::{JudgeParams, Objective};
use judgelab_core::minilang::{gen_corpus, Corpus, Pool};
use judgelab_core::reweight::{dispersion, trajectory_csv, StrategyKind, TrajectoryRow};
use judgelab_core::rng::{content_hash, derive_seed};
use judgelab_core::selector::{evaluate, Method, SelectionReport};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const POOL_FILES: [&str; 3] = ["lower.json", "meta.json", "test.json"];

/// A run directory, named by the first 16 hex digits of its manifest id.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Creates the directory and writes `manifest.json` into it. Called
    /// before any long-running work so an interrupted run stays auditable.
    fn open(out: &Path, mut manifest: RunManifest) -> Result<Self, LabError> {
        let id = manifest.id();
        let path = out.join(&id[..16]);
        fs::create_dir_all(&path).map_err(|source| LabError::Io {
            path: path.clone(),
            source,
        })?;
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        manifest.created_at = Some(now.to_string());
        write(&path.join("manifest.json"), &manifest.to_json())?;
        Ok(Self { path, manifest })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), LabError> {
        write(&self.path.join(name), contents)
    }
}

fn write(path: &Path, contents: &str) -> Result<(), LabError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| LabError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> Result<String, LabError> {
    fs::read_to_string(path).map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn bad_file(path: &Path, message: impl ToString) -> LabError {
    LabError::BadFile {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

fn csv_of<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn load_corpus(dir: &Path) -> Result<Corpus, LabError> {
    let pool = |name: &str| -> Result<Pool, LabError> {
        let path = dir.join(name);
        Pool::from_json(&read(&path)?).map_err(|e| bad_file(&path, e))
    };
    Ok(Corpus {
        lower: pool(POOL_FILES[0])?,
        meta: pool(POOL_FILES[1])?,
        test: pool(POOL_FILES[2])?,
    })
}

/// The corpus in `dir`, or the one the config describes.
fn corpus_for(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<Corpus, LabError> {
    match dir {
        Some(d) => load_corpus(d),
        None => Ok(gen_corpus(&cfg.corpus, cfg.seed)?),
    }
}

fn corpus_hashes(corpus: &Corpus) -> BTreeMap<String, String> {
    corpus
        .pools()
        .iter()
        .map(|p| (p.name.clone(), p.content_hash()))
        .collect()
}

/// Generates the three pools into `lower.json`, `meta.json`, `test.json`.
pub fn gen(cfg: &ExperimentConfig) -> Result<RunDir, LabError> {
    let mut manifest =
        RunManifest::new("gen", cfg.seed, serde_json::json!({ "corpus": cfg.corpus }));
    manifest.seeds.insert("corpus".into(), cfg.seed);
    let run = RunDir::open(&cfg.out, manifest)?;
    let corpus = gen_corpus(&cfg.corpus, cfg.seed)?;
    for (file, pool) in POOL_FILES.iter().zip(corpus.pools()) {
        run.write(file, &pool.to_json())?;
    }
    run.write("hashes.json", &to_json(&corpus_hashes(&corpus)))?;
    Ok(run)
}

#[derive(Serialize)]
struct TrainSummary {
    manifest_id: String,
    objective: Objective,
    strategy: StrategyKind,
    iterations: usize,
    converged: bool,
    train_samples: usize,
    final_train_loss: Option<f64>,
    final_meta_loss: Option<f64>,
    meta_accuracy: f64,
}

fn train_summary(out: &TrainOutcome, config: &TrainConfig) -> TrainSummary {
    let last = out.state.history.last();
    TrainSummary {
        manifest_id: out.manifest.id(),
        objective: config.objective,
        strategy: config.strategy,
        iterations: out.state.iteration,
        converged: out.state.converged,
        train_samples: out.train_samples,
        final_train_loss: last.map(|r| r.train_loss),
        final_meta_loss: out.state.history.iter().rev().find_map(|r| r.meta_loss),
        meta_accuracy: pairwise_accuracy(&out.judge, &out.meta_prompts),
    }
}

/// One column per weight key, one row per logged iteration, iterations
/// ascending. Keys keep their first-seen order.
pub fn weights_wide_csv(rows: &[TrajectoryRow]) -> String {
    let mut keys: Vec<&str> = Vec::new();
    let mut by_iter: BTreeMap<usize, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows {
        if !keys.contains(&r.key.as_str()) {
            keys.push(&r.key);
        }
        by_iter
            .entry(r.iteration)
            .or_default()
            .insert(&r.key, r.effective_weight);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("iteration")
        .chain(keys.iter().copied())
        .collect();
    w.write_record(&header).expect("in-memory write");
    for (it, weights) in &by_iter {
        let mut record = vec![it.to_string()];
        record.extend(
            keys.iter()
                .map(|k| weights.get(k).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn write_training(dir: &Path, out: &TrainOutcome, config: &TrainConfig) -> Result<(), LabError> {
    let files = [
        ("checkpoint.json", out.checkpoint().to_json()),
        ("losses.csv", loss_csv(&out.state.history)),
        ("trajectory.csv", trajectory_csv(&out.state.trajectory)),
        ("dispersion.csv", dispersion_csv(&out.state.dispersion)),
        ("weights.csv", weights_wide_csv(&out.state.trajectory)),
        ("summary.json", to_json(&train_summary(out, config))),
    ];
    for (name, contents) in files {
        write(&dir.join(name), &contents)?;
    }
    Ok(())
}

/// Trains a judge on the lower pool with weights driven by the meta pool.
pub fn train(cfg: &ExperimentConfig, corpus_dir: Option<&Path>) -> Result<RunDir, LabError> {
    let corpus = corpus_for(cfg, corpus_dir)?;
    let run = RunDir::open(&cfg.out, train_manifest(&cfg.train, &cfg.loss, &corpus))?;
    let out = train_judge(&cfg.train, cfg.loss, &corpus)?;
    write_training(&run.path, &out, &cfg.train)?;
    Ok(run)
}

/// Slice rows (overall, easy, medium, hard) by method columns.
pub fn pass_at_1_csv(report: &SelectionReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("slice")
        .chain(report.summaries.iter().map(|s| s.method.name()))
        .collect();
    w.write_record(&header).expect("in-memory write");
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let slices: [(
        &str,
        fn(&judgelab_core::selector::MethodSummary) -> Option<f64>,
    ); 4] = [
        ("overall", |s| Some(s.pass_at_1)),
        ("easy", |s| s.easy),
        ("medium", |s| s.medium),
        ("hard", |s| s.hard),
    ];
    for (name, get) in slices {
        let mut record = vec![name.to_string()];
        record.extend(report.summaries.iter().map(|s| fmt(get(s))));
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn load_checkpoint(path: &Path) -> Result<(JudgeParams, String), LabError> {
    let file = if path.is_dir() {
        path.join("checkpoint.json")
    } else {
        path.to_path_buf()
    };
    if !file.is_file() {
        return Err(LabError::MissingCheckpoint(file));
    }
    let text = read(&file)?;
    let ck = BilevelCheckpoint::from_json(&text).map_err(|e| bad_file(&file, e))?;
    let judge = ck.judge.judge().map_err(|e| bad_file(&file, e))?;
    Ok((judge, content_hash(text.as_bytes())))
}

/// Best-of-N selection on the configured pool with the configured methods.
pub fn select(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    corpus_dir: Option<&Path>,
) -> Result<RunDir, LabError> {
    let judge = match checkpoint {
        Some(p) => Some(load_checkpoint(p)?),
        None if cfg.select.methods.contains(&Method::Judge) => {
            return Err(LabError::Usage(
                "the judge method needs a trained judge: pass --checkpoint FILE_OR_RUN_DIR, or drop `judge` from select.methods".into(),
            ))
        }
        None => None,
    };
    let corpus = corpus_for(cfg, corpus_dir)?;
    let pool = cfg.select.pool.of(&corpus);
    let seed = derive_seed(cfg.seed, "select");
    let mut manifest = RunManifest::new(
        "select",
        cfg.seed,
        serde_json::json!({
            "select": cfg.select,
            "checkpoint": judge.as_ref().map(|(_, h)| h),
        }),
    );
    manifest.seeds.insert("select".into(), seed);
    manifest
        .corpus_hashes
        .insert(pool.name.clone(), pool.content_hash());
    let run = RunDir::open(&cfg.out, manifest)?;
    let report = evaluate(
        &cfg.select.methods,
        pool,
        judge.as_ref().map(|(j, _)| j),
        &cfg.select.select_config(),
        seed,
    )?;
    run.write("selection.csv", &report.to_csv())?;
    run.write("summary.json", &report.summary_json())?;
    run.write("pass_at_1.csv", &pass_at_1_csv(&report))?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub objective: Objective,
    pub strategy: StrategyKind,
    pub pass_at_1: f64,
    pub easy: Option<f64>,
    pub medium: Option<f64>,
    pub hard: Option<f64>,
    pub meta_accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Serialize)]
struct BaselineRow {
    method: Method,
    pass_at_1: f64,
    easy: Option<f64>,
    medium: Option<f64>,
    hard: Option<f64>,
}

/// Trains every objective × strategy cell on one shared corpus and scores
/// each judge on the selection pool. Cells run in parallel and write to
/// disjoint `cells/<objective>-<strategy>/` directories.
pub fn ablate(cfg: &ExperimentConfig, corpus_dir: Option<&Path>) -> Result<RunDir, LabError> {
    if cfg.ablate.objectives.is_empty() || cfg.ablate.strategies.is_empty() {
        return Err(LabError::Usage("the ablation grid is empty".into()));
    }
    let corpus = corpus_for(cfg, corpus_dir)?;
    let pool = cfg.select.pool.of(&corpus);
    let seed = derive_seed(cfg.seed, "select");
    let mut manifest = RunManifest::new(
        "ablate",
        cfg.seed,
        serde_json::json!({
            "train": cfg.train,
            "loss": cfg.loss,
            "select": cfg.select,
            "ablate": cfg.ablate,
        }),
    );
    manifest.seeds.insert("select".into(), seed);
    manifest.corpus_hashes = corpus_hashes(&corpus);
    let run = RunDir::open(&cfg.out, manifest)?;

    let select = cfg.select.select_config();
    let baselines = evaluate(&[Method::Random, Method::Oracle], pool, None, &select, seed)?;
    let cells: Vec<(Objective, StrategyKind)> = cfg
        .ablate
        .objectives
        .iter()
        .flat_map(|&o| cfg.ablate.strategies.iter().map(move |&s| (o, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(objective, strategy)| -> Result<GridRow, LabError> {
            let config = TrainConfig {
                objective,
                strategy,
                ..cfg.train.clone()
            };
            let out = train_judge(&config, cfg.loss, &corpus)?;
            let report = evaluate(&[Method::Judge], pool, Some(&out.judge), &select, seed)?;
            let dir = run
                .path
                .join("cells")
                .join(format!("{objective}-{strategy}"));
            write_training(&dir, &out, &config)?;
            write(&dir.join("selection.csv"), &report.to_csv())?;
            let s = &report.summaries[0];
            Ok(GridRow {
                objective,
                strategy,
                pass_at_1: s.pass_at_1,
                easy: s.easy,
                medium: s.medium,
                hard: s.hard,
                meta_accuracy: pairwise_accuracy(&out.judge, &out.meta_prompts),
                iterations: out.state.iteration,
                converged: out.state.converged,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    run.write("grid.csv", &csv_of(&rows))?;
    let base: Vec<BaselineRow> = baselines
        .summaries
        .iter()
        .map(|s| BaselineRow {
            method: s.method,
            pass_at_1: s.pass_at_1,
            easy: s.easy,
            medium: s.medium,
            hard: s.hard,
        })
        .collect();
    run.write("baselines.csv", &csv_of(&base))?;
    Ok(run)
}

#[derive(Serialize)]
struct DispersionPoint {
    iteration: usize,
    strategy: StrategyKind,
    dispersion: f64,
}

#[derive(Serialize)]
struct LossPoint {
    iteration: usize,
    series: &'static str,
    value: f64,
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, LabError> {
    let text = read(path)?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| bad_file(path, e))
}

fn report_one(dir: &Path) -> Result<PathBuf, LabError> {
    let rows: Vec<TrajectoryRow> = read_csv(&dir.join("trajectory.csv"))?;
    let out = dir.join("report");
    write(&out.join("weights_wide.csv"), &weights_wide_csv(&rows))?;

    let mut by_iter: BTreeMap<usize, (StrategyKind, Vec<f64>)> = BTreeMap::new();
    for r in &rows {
        by_iter
            .entry(r.iteration)
            .or_insert_with(|| (r.strategy, Vec::new()))
            .1
            .push(r.effective_weight);
    }
    let points: Vec<DispersionPoint> = by_iter
        .into_iter()
        .map(|(iteration, (strategy, w))| DispersionPoint {
            iteration,
            strategy,
            // A single weight (strategy none) has nothing to spread.
            dispersion: dispersion(&w).unwrap_or(0.0),
        })
        .collect();
    write(&out.join("dispersion.csv"), &csv_of(&points))?;

    let losses = dir.join("losses.csv");
    if losses.is_file() {
        let records: Vec<LossRecord> = read_csv(&losses)?;
        let mut long = Vec::with_capacity(records.len() * 3);
        for r in records {
            long.push(LossPoint {
                iteration: r.iteration,
                series: "train_loss",
                value: r.train_loss,
            });
            long.push(LossPoint {
                iteration: r.iteration,
                series: "weighted_train_loss",
                value: r.weighted_train_loss,
            });
            if let Some(m) = r.meta_loss {
                long.push(LossPoint {
                    iteration: r.iteration,
                    series: "meta_loss",
                    value: m,
                });
            }
        }
        write(&out.join("losses_long.csv"), &csv_of(&long))?;
    }
    Ok(out)
}

/// Plot-ready tidy CSVs for a train run or every cell of an ablation run.
/// Returns the report directories written.
pub fn report(run_dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    let mut dirs = Vec::new();
    if run_dir.join("trajectory.csv").is_file() {
        dirs.push(run_dir.to_path_buf());
    }
    let cells = run_dir.join("cells");
    if cells.is_dir() {
        let entries = fs::read_dir(&cells).map_err(|source| LabError::Io {
            path: cells.clone(),
            source,
        })?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("trajectory.csv").is_file())
            .collect();
        found.sort();
        dirs.extend(found);
    }
    if dirs.is_empty() {
        return Err(LabError::EmptyRun {
            dir: run_dir.to_path_buf(),
            expected: "trajectory.csv (with optional losses.csv) from `train`, or cells/<objective>-<strategy>/trajectory.csv from `ablate`".into(),
        });
    }
    dirs.iter().map(|d| report_one(d)).collect()
}
