//! End-to-end commands: synthetic fixtures, feature extraction, tuning,
//! training, prediction and evaluation. Each command reads a [`RunConfig`]
//! and writes its artifacts atomically into the output directory.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Dataset, DEFAULT_POSITIVE_RATES, ID_COLUMN};
use crate::embed_io::{self, FeatureAssembly, SEMANTIC_DIM, STYLE_DIM};
use crate::ensemble::{self, ArrayEncoding, FittedPipeline, Recipe, SolverSettings};
use crate::error::{Error, Result};
use crate::features::{self, NumericFeatureVector, StopwordSet};
use crate::metrics;
use crate::rng;
use crate::tuning::{self, SearchRanges, Strategy, TrialLogs, TuneSettings, TuningOutcome};
use crate::Subtask;

pub const DATASET_FILE: &str = "dataset.csv";
pub const SEMANTIC_FILE: &str = "semantic_embeddings.csv";
pub const STYLE_FILE: &str = "style_embeddings.csv";
pub const FEATURES_FILE: &str = "numeric_features.csv";
pub const FEATURES_LOG_FILE: &str = "numeric_features_log.csv";
pub const BEST_PARAMS_FILE: &str = "best_params.json";
pub const TRIAL_LOG_FILE: &str = "trial_logs.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const RELIABILITY_FILE: &str = "reliability.csv";
pub const KDE_FILE: &str = "kde.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const KDE_GRID_STEP: f64 = 0.005;

pub fn pipeline_file(task: Subtask) -> String {
    format!("pipeline_{}.json", task.name())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub dataset: Option<PathBuf>,
    pub semantic: Option<PathBuf>,
    pub style: Option<PathBuf>,
    pub spelling: Option<PathBuf>,
    pub sentiment: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// Precomputed numeric feature table; computed from the text when absent.
    pub numeric_features: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Defaults to the output directory.
    pub pipelines_dir: Option<PathBuf>,
    /// Defaults to `<output_dir>/best_params.json`.
    pub best_params: Option<PathBuf>,
    /// Defaults to `<output_dir>/predictions.csv`.
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub positive_rates: [f64; 3],
    pub class_separation: f64,
    pub semantic_dim: usize,
    pub style_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 700,
            positive_rates: DEFAULT_POSITIVE_RATES,
            class_separation: 5.0,
            semantic_dim: SEMANTIC_DIM,
            style_dim: STYLE_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; mandatory.
    pub seed: Option<u64>,
    pub paths: PathConfig,
    pub folds: usize,
    pub recipe: Recipe,
    pub trials: usize,
    pub strategy: Strategy,
    pub bins: usize,
    pub kde_bandwidth: f64,
    pub search: SearchRanges,
    pub solver: SolverSettings,
    pub array_encoding: ArrayEncoding,
    /// Use the log variant of the count features when computing them inline.
    pub log_features: bool,
    /// Require 768-d semantic and 100-d style tables.
    pub strict_dims: bool,
    /// Worker threads; all cores when unset.
    pub threads: Option<usize>,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            paths: PathConfig::default(),
            folds: tuning::DEFAULT_FOLDS,
            recipe: Recipe::Submission1,
            trials: tuning::DEFAULT_TRIALS,
            strategy: Strategy::default(),
            bins: metrics::DEFAULT_BINS,
            kde_bandwidth: metrics::DEFAULT_KDE_BANDWIDTH,
            search: SearchRanges::default(),
            solver: SolverSettings::default(),
            array_encoding: ArrayEncoding::default(),
            log_features: true,
            strict_dims: true,
            threads: None,
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(f)?)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::invalid("a master seed is required (set `seed` or pass --seed)"))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn pipelines_dir(&self) -> PathBuf {
        self.paths.pipelines_dir.clone().unwrap_or_else(|| self.output_dir())
    }

    fn best_params_path(&self) -> PathBuf {
        self.paths
            .best_params
            .clone()
            .unwrap_or_else(|| self.output_dir().join(BEST_PARAMS_FILE))
    }

    fn predictions_path(&self) -> PathBuf {
        self.paths
            .predictions
            .clone()
            .unwrap_or_else(|| self.output_dir().join(PREDICTIONS_FILE))
    }

    fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.bins == 0 {
            return Err(Error::invalid("bins must be at least 1"));
        }
        if !(self.kde_bandwidth > 0.0 && self.kde_bandwidth.is_finite()) {
            return Err(Error::invalid("kde_bandwidth must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        let p = &self.paths;
        for path in [
            &p.dataset,
            &p.semantic,
            &p.style,
            &p.spelling,
            &p.sentiment,
            &p.stopwords,
            &p.numeric_features,
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(Error::invalid(format!("configured path {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    fn required(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        path.clone()
            .ok_or_else(|| Error::invalid(format!("config needs `paths.{key}` for this command")))
    }
}

/// Files written and warnings raised by a command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Report {
    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

/// Outputs are written to hidden partial files and renamed into place only
/// once every file of the command is complete. Dropping without commit
/// removes the partial files.
struct Staging {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl Staging {
    fn new() -> Self {
        Self { staged: Vec::new() }
    }

    fn create(&mut self, target: PathBuf) -> Result<BufWriter<File>> {
        if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("output");
        let tmp = target.with_file_name(format!(".{name}.partial"));
        let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        self.staged.push((tmp, target));
        Ok(BufWriter::new(f))
    }

    fn write_with(&mut self, target: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = self.create(target.clone())?;
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(&target, e))
    }

    fn commit(mut self, report: &mut Report) -> Result<()> {
        let staged = std::mem::take(&mut self.staged);
        for (i, (tmp, target)) in staged.iter().enumerate() {
            if let Err(e) = std::fs::rename(tmp, target) {
                for (t, _) in &staged[i..] {
                    let _ = std::fs::remove_file(t);
                }
                for (_, done) in &staged[..i] {
                    let _ = std::fs::remove_file(done);
                }
                return Err(Error::io(target, e));
            }
            report.outputs.push(target.clone());
        }
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

fn write_json<T: Serialize>(w: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io("<json>", e))
}

/// Runs `f` on a pool sized by `threads`, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?
            .install(f),
    }
}

// ---- synth ----

pub fn cmd_synth(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let s = &cfg.synth;
    let dataset = corpus::synth_dataset(rng::derive_seed(seed, "synth"), s.n, s.positive_rates)?;
    let semantic = embed_io::synth_embeddings(
        rng::derive_seed(seed, "synth-semantic"),
        &dataset,
        s.semantic_dim,
        s.class_separation,
    )?;
    let style = embed_io::synth_embeddings(
        rng::derive_seed(seed, "synth-style"),
        &dataset,
        s.style_dim,
        s.class_separation,
    )?;
    let out = cfg.output_dir();
    let mut staging = Staging::new();
    staging.write_with(out.join(DATASET_FILE), |w| corpus::write_dataset_to(&dataset, w))?;
    staging.write_with(out.join(SEMANTIC_FILE), |w| embed_io::write_embeddings(&semantic, w))?;
    staging.write_with(out.join(STYLE_FILE), |w| embed_io::write_embeddings(&style, w))?;
    let mut report = Report::default();
    staging.commit(&mut report)?;
    Ok(report)
}

// ---- features ----

/// Raw and log-variant numeric features per comment, in dataset order.
fn extract_all(
    cfg: &RunConfig,
    dataset: &Dataset,
    report: &mut Report,
) -> Result<Vec<(NumericFeatureVector, NumericFeatureVector)>> {
    let stopwords = match &cfg.paths.stopwords {
        Some(p) => StopwordSet::from_file(p)?,
        None => StopwordSet::default(),
    };
    let spelling = cfg.paths.spelling.as_ref().map(features::load_spelling_table).transpose()?;
    let sentiment = cfg.paths.sentiment.as_ref().map(features::load_sentiment_table).transpose()?;

    let mut missing_spelling = 0;
    let mut missing_sentiment = 0;
    let rows = dataset
        .comments()
        .iter()
        .map(|c| {
            let sp = spelling.as_ref().and_then(|t| t.get(&c.id));
            let se = sentiment.as_ref().and_then(|t| t.get(&c.id));
            missing_spelling += usize::from(sp.is_none());
            missing_sentiment += usize::from(se.is_none());
            let raw = features::extract_numeric(&c.text, &stopwords, sp, se);
            let logged = features::log_transform(&raw);
            (raw, logged)
        })
        .collect();
    if missing_spelling > 0 {
        report.warn(format!(
            "spelling counts missing for {missing_spelling} of {} comments; SpellingMistakes_* columns default to 0",
            dataset.len()
        ));
    }
    if missing_sentiment > 0 {
        report.warn(format!(
            "sentiment missing for {missing_sentiment} of {} comments; SentimentBERT_* columns default to uniform 1/3",
            dataset.len()
        ));
    }
    Ok(rows)
}

pub fn cmd_features(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let dataset = corpus::load_dataset(cfg.required(&cfg.paths.dataset, "dataset")?)?;
    let mut report = Report::default();
    let rows = extract_all(cfg, &dataset, &mut report)?;
    let out = cfg.output_dir();
    let mut staging = Staging::new();
    staging.write_with(out.join(FEATURES_FILE), |w| {
        features::write_feature_table(w, dataset.ids().zip(rows.iter().map(|r| &r.0)))
    })?;
    staging.write_with(out.join(FEATURES_LOG_FILE), |w| {
        features::write_feature_table(w, dataset.ids().zip(rows.iter().map(|r| &r.1)))
    })?;
    staging.commit(&mut report)?;
    Ok(report)
}

fn numeric_table(
    cfg: &RunConfig,
    dataset: &Dataset,
    report: &mut Report,
) -> Result<HashMap<String, NumericFeatureVector>> {
    if let Some(path) = &cfg.paths.numeric_features {
        return Ok(features::load_feature_table(path)?.into_iter().collect());
    }
    let rows = extract_all(cfg, dataset, report)?;
    Ok(dataset
        .ids()
        .zip(rows)
        .map(|(id, (raw, logged))| (id.to_string(), if cfg.log_features { logged } else { raw }))
        .collect())
}

fn load_assembly(cfg: &RunConfig, dataset: &Dataset, report: &mut Report) -> Result<FeatureAssembly> {
    let (sem_dim, sty_dim) = if cfg.strict_dims {
        (Some(SEMANTIC_DIM), Some(STYLE_DIM))
    } else {
        (None, None)
    };
    let semantic = embed_io::load_embeddings(cfg.required(&cfg.paths.semantic, "semantic")?, sem_dim)?;
    let style = embed_io::load_embeddings(cfg.required(&cfg.paths.style, "style")?, sty_dim)?;
    let numeric = numeric_table(cfg, dataset, report)?;
    if cfg.strict_dims {
        embed_io::assemble(dataset, &semantic, &style, &numeric)
    } else {
        embed_io::assemble_any_width(dataset, &semantic, &style, &numeric)
    }
}

fn labeled_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let ds = corpus::load_dataset(cfg.required(&cfg.paths.dataset, "dataset")?)?;
    if !ds.is_labeled() {
        return Err(Error::invalid("this command needs a labeled dataset"));
    }
    Ok(ds)
}

fn fold_plan(cfg: &RunConfig, dataset: &Dataset) -> Result<tuning::FoldPlan> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::invalid("fold plans need labels"))?;
    tuning::stratified_kfold(&labels, cfg.folds, rng::derive_seed(cfg.seed()?, "fold-plan"))
}

// ---- tune ----

/// Contents of `best_params.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestParams {
    pub seed: u64,
    pub folds: usize,
    #[serde(flatten)]
    pub outcome: TuningOutcome,
}

pub fn cmd_tune(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let dataset = labeled_dataset(cfg)?;
    let mut report = Report::default();
    let assembly = load_assembly(cfg, &dataset, &mut report)?;
    let plan = fold_plan(cfg, &dataset)?;
    let settings = TuneSettings {
        trials: cfg.trials,
        strategy: cfg.strategy,
        solver: cfg.solver,
        ranges: cfg.search.clone(),
    };
    let (outcome, logs): (TuningOutcome, TrialLogs) =
        tuning::tune(&assembly, &plan, cfg.recipe, &settings, seed)?;
    let best = BestParams {
        seed,
        folds: cfg.folds,
        outcome,
    };
    let out = cfg.output_dir();
    let mut staging = Staging::new();
    staging.write_with(cfg.best_params_path(), |w| write_json(w, &best))?;
    staging.write_with(out.join(TRIAL_LOG_FILE), |w| write_json(w, &logs))?;
    staging.commit(&mut report)?;
    Ok(report)
}

pub fn load_best_params(path: impl AsRef<Path>) -> Result<BestParams> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(f)?)
}

// ---- train ----

pub fn cmd_train(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let best = load_best_params(cfg.best_params_path())?;
    if best.seed != seed || best.folds != cfg.folds || best.outcome.recipe != cfg.recipe {
        return Err(Error::invalid(format!(
            "best parameters were tuned with seed {}, {} folds, {:?}; config asks for seed {seed}, {} folds, {:?}",
            best.seed, best.folds, best.outcome.recipe, cfg.folds, cfg.recipe
        )));
    }
    let dataset = labeled_dataset(cfg)?;
    let mut report = Report::default();
    let assembly = load_assembly(cfg, &dataset, &mut report)?;
    let plan = fold_plan(cfg, &dataset)?;
    let pipelines = ensemble::train_recipe(&assembly, cfg.recipe, &plan, &best.outcome, &cfg.solver, seed)?;
    for p in &pipelines {
        let unconverged = p.members.iter().filter(|m| !m.model.converged()).count();
        if unconverged > 0 {
            report.warn(format!(
                "{unconverged} of {} {} members stopped at the iteration limit",
                p.members.len(),
                p.subtask
            ));
        }
    }
    let dir = cfg.pipelines_dir();
    let mut staging = Staging::new();
    for p in &pipelines {
        staging.write_with(dir.join(pipeline_file(p.subtask)), |w| {
            ensemble::save_pipeline(p, w, cfg.array_encoding)
        })?;
    }
    staging.commit(&mut report)?;
    Ok(report)
}

pub fn load_pipelines(dir: impl AsRef<Path>) -> Result<[FittedPipeline; 3]> {
    let load = |task: Subtask| -> Result<FittedPipeline> {
        let path = dir.as_ref().join(pipeline_file(task));
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let p = ensemble::load_pipeline(std::io::BufReader::new(f))?;
        if p.subtask != task {
            return Err(Error::invalid(format!(
                "{} holds a {} pipeline",
                path.display(),
                p.subtask
            )));
        }
        Ok(p)
    };
    Ok([
        load(Subtask::Toxic)?,
        load(Subtask::Engaging)?,
        load(Subtask::FactClaiming)?,
    ])
}

// ---- predict ----

/// One row of `predictions.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub labels: [u8; 3],
    pub vote_fractions: [f64; 3],
    /// Mean member probability of the positive class; absent for SVM ensembles.
    pub probabilities: Option<[f64; 3]>,
}

fn prediction_header(with_probs: bool) -> Vec<String> {
    let mut h = vec![ID_COLUMN.to_string()];
    h.extend(Subtask::ALL.iter().map(|t| format!("{}_label", t.name())));
    h.extend(Subtask::ALL.iter().map(|t| format!("{}_vote_fraction", t.name())));
    if with_probs {
        h.extend(Subtask::ALL.iter().map(|t| format!("{}_probability", t.name())));
    }
    h
}

pub fn write_predictions(rows: &[Prediction], writer: impl Write) -> Result<()> {
    let with_probs = rows.first().is_some_and(|r| r.probabilities.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(prediction_header(with_probs)).map_err(wrap)?;
    for r in rows {
        let mut rec = vec![r.id.clone()];
        rec.extend(r.labels.iter().map(|l| l.to_string()));
        rec.extend(r.vote_fractions.iter().map(|v| v.to_string()));
        if let Some(p) = r.probabilities {
            rec.extend(p.iter().map(|v| v.to_string()));
        }
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| corpus::csv_error(path, 0, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let with_probs = if headers == prediction_header(true) {
        true
    } else if headers == prediction_header(false) {
        false
    } else {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            row: 0,
            message: format!("unexpected predictions header {headers:?}"),
        });
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| corpus::csv_error(path, row, e))?;
        let num = |k: usize| -> Result<f64> {
            let raw = rec.get(k).unwrap_or_default();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Csv {
                    path: path.to_path_buf(),
                    row,
                    message: format!("`{raw}` in column {} is not a finite number", headers[k]),
                })
        };
        let mut labels = [0u8; 3];
        for (t, l) in labels.iter_mut().enumerate() {
            *l = match rec.get(1 + t) {
                Some("0") => 0,
                Some("1") => 1,
                other => {
                    return Err(Error::InvalidLabel {
                        row,
                        column: headers[1 + t].clone(),
                        value: other.unwrap_or_default().to_string(),
                    })
                }
            };
        }
        let triple = |start: usize| -> Result<[f64; 3]> { Ok([num(start)?, num(start + 1)?, num(start + 2)?]) };
        out.push(Prediction {
            id: rec.get(0).unwrap_or_default().to_string(),
            labels,
            vote_fractions: triple(4)?,
            probabilities: if with_probs { Some(triple(7)?) } else { None },
        });
    }
    Ok(out)
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let dataset = corpus::load_dataset(cfg.required(&cfg.paths.dataset, "dataset")?)?;
    let pipelines = load_pipelines(cfg.pipelines_dir())?;
    let recipe = pipelines[0].recipe;
    if pipelines.iter().any(|p| p.recipe != recipe) {
        return Err(Error::invalid("pipelines come from different recipes"));
    }
    let mut report = Report::default();
    let assembly = load_assembly(cfg, &dataset, &mut report)?;
    let votes = pipelines
        .iter()
        .map(|p| ensemble::predict_majority(p, &assembly))
        .collect::<Result<Vec<_>>>()?;
    let probs = if recipe.has_probabilities() {
        Some(
            pipelines
                .iter()
                .map(|p| ensemble::predict_confidence(p, &assembly))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let rows: Vec<Prediction> = assembly
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| Prediction {
            id: id.clone(),
            labels: [votes[0][i].label, votes[1][i].label, votes[2][i].label],
            vote_fractions: [
                votes[0][i].positive_fraction,
                votes[1][i].positive_fraction,
                votes[2][i].positive_fraction,
            ],
            probabilities: probs.as_ref().map(|p| [p[0][i], p[1][i], p[2][i]]),
        })
        .collect();
    let mut staging = Staging::new();
    staging.write_with(cfg.predictions_path(), |w| write_predictions(&rows, w))?;
    staging.commit(&mut report)?;
    Ok(report)
}

// ---- evaluate ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    /// Mean member probability.
    Probability,
    /// Fraction of members voting positive.
    VoteFraction,
}

/// Per-subtask scores, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskMetrics {
    pub subtask: Subtask,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ece: f64,
    pub mce: f64,
    pub confusion: metrics::ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub bins: usize,
    pub kde_bandwidth: f64,
    pub score_source: ScoreSource,
    pub subtasks: Vec<SubtaskMetrics>,
    pub mean_f1: f64,
}

pub fn evaluate(dataset: &Dataset, predictions: &[Prediction], bins: usize, bandwidth: f64) -> Result<(MetricsReport, Vec<metrics::CalibrationReport>, Vec<[Vec<f64>; 3]>)> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::invalid("evaluation needs a labeled dataset"))?;
    let by_id: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    if by_id.len() != predictions.len() {
        return Err(Error::invalid("predictions contain duplicate ids"));
    }
    let missing: Vec<&str> = dataset.ids().filter(|id| !by_id.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds {
            source_name: "predictions".into(),
            count: missing.len(),
            first: missing.iter().take(10).map(|s| s.to_string()).collect(),
        });
    }
    if predictions.len() != dataset.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labeled comments",
            predictions.len(),
            dataset.len()
        )));
    }
    let aligned: Vec<&Prediction> = dataset.ids().map(|id| by_id[id]).collect();
    let source = if aligned.iter().all(|p| p.probabilities.is_some()) {
        ScoreSource::Probability
    } else {
        ScoreSource::VoteFraction
    };
    let queries = metrics::grid(0.0, 1.0, KDE_GRID_STEP);

    let mut subtasks = Vec::new();
    let mut calibrations = Vec::new();
    let mut densities = Vec::new();
    for task in Subtask::ALL {
        let t = task.index();
        let y: Vec<u8> = labels.iter().map(|l| l.get(task)).collect();
        let pred: Vec<u8> = aligned.iter().map(|p| p.labels[t]).collect();
        let scores: Vec<f64> = aligned
            .iter()
            .map(|p| match (source, p.probabilities) {
                (ScoreSource::Probability, Some(pr)) => pr[t],
                _ => p.vote_fractions[t],
            })
            .collect();
        let prf = metrics::prf_macro(&y, &pred)?;
        let cal = metrics::calibration(&scores, &y, bins)?;
        let class_scores = |c: u8| -> Vec<f64> {
            scores.iter().zip(&y).filter(|(_, &l)| l == c).map(|(s, _)| *s).collect()
        };
        let kde = |s: &[f64]| -> Result<Vec<f64>> {
            if s.is_empty() {
                Ok(Vec::new())
            } else {
                metrics::kde_gaussian(s, bandwidth, &queries)
            }
        };
        densities.push([kde(&scores)?, kde(&class_scores(0))?, kde(&class_scores(1))?]);
        subtasks.push(SubtaskMetrics {
            subtask: task,
            precision: 100.0 * prf.precision,
            recall: 100.0 * prf.recall,
            f1: 100.0 * prf.f1,
            ece: 100.0 * cal.ece,
            mce: 100.0 * cal.mce,
            confusion: metrics::confusion(&y, &pred)?,
        });
        calibrations.push(cal);
    }
    let mean_f1 = subtasks.iter().map(|s| s.f1).sum::<f64>() / 3.0;
    Ok((
        MetricsReport {
            n: dataset.len(),
            bins,
            kde_bandwidth: bandwidth,
            score_source: source,
            subtasks,
            mean_f1,
        },
        calibrations,
        densities,
    ))
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let dataset = labeled_dataset(cfg)?;
    let predictions = read_predictions(cfg.predictions_path())?;
    let (metrics_report, calibrations, densities) = evaluate(&dataset, &predictions, cfg.bins, cfg.kde_bandwidth)?;
    let queries = metrics::grid(0.0, 1.0, KDE_GRID_STEP);
    let out = cfg.output_dir();
    let wrap = |e: csv::Error| Error::invalid(e.to_string());

    let mut staging = Staging::new();
    staging.write_with(out.join(METRICS_FILE), |w| write_json(w, &metrics_report))?;
    staging.write_with(out.join(RELIABILITY_FILE), |w| {
        let mut cw = csv::Writer::from_writer(w);
        for (i, (task, cal)) in Subtask::ALL.iter().zip(&calibrations).enumerate() {
            metrics::reliability_export(cal, Some(task.name()), &mut cw, i == 0)?;
        }
        cw.flush().map_err(|e| Error::invalid(e.to_string()))
    })?;
    staging.write_with(out.join(KDE_FILE), |w| {
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["subtask", "x", "density", "density_label0", "density_label1"])
            .map_err(wrap)?;
        for (task, [all, neg, pos]) in Subtask::ALL.iter().zip(&densities) {
            let cell = |v: &[f64], i: usize| v.get(i).map(|d| d.to_string()).unwrap_or_default();
            for (i, q) in queries.iter().enumerate() {
                cw.write_record([
                    task.name().to_string(),
                    q.to_string(),
                    cell(all, i),
                    cell(neg, i),
                    cell(pos, i),
                ])
                .map_err(wrap)?;
            }
        }
        cw.flush().map_err(|e| Error::invalid(e.to_string()))
    })?;
    staging.write_with(out.join(CONFUSION_FILE), |w| {
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["subtask", "tp", "fp", "fn", "tn"]).map_err(wrap)?;
        for s in &metrics_report.subtasks {
            let c = s.confusion;
            cw.write_record([
                s.subtask.name().to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
            ])
            .map_err(wrap)?;
        }
        cw.flush().map_err(|e| Error::invalid(e.to_string()))
    })?;
    let mut report = Report::default();
    staging.commit(&mut report)?;
    Ok(report)
}
