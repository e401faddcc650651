//! Stratified fold plans and hyperparameter search.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Labels;
use crate::embed_io::FeatureAssembly;
use crate::ensemble::{effective_rank, svd_seed, MemberModel, ModelSpec, Preprocessor, Recipe, SolverSettings};
use crate::error::{Error, Result};
use crate::metrics;
use crate::rng;
use crate::svm::{ClassWeight, KernelKind};
use crate::Subtask;

pub const DEFAULT_FOLDS: usize = 7;
pub const DEFAULT_TRIALS: usize = 100;
pub const SVD_K_CHOICES: [usize; 5] = [32, 64, 128, 256, 512];

// ---- folds ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of every instance.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratifies on the joint 3-bit label combination. Each combination group is
/// shuffled and dealt round-robin, continuing the deal pointer across groups,
/// so fold sizes differ by at most one and every group is spread evenly.
pub fn stratified_kfold(labels: &[Labels], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::invalid(format!(
            "cannot split {} instances into {k} folds",
            labels.len()
        )));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 8];
    for (i, l) in labels.iter().enumerate() {
        groups[l.combination() as usize].push(i);
    }
    let mut r = rng::stream(seed, "folds");
    let mut assignment = vec![0; labels.len()];
    let mut next = 0usize;
    for group in &mut groups {
        group.shuffle(&mut r);
        for &i in group.iter() {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { k, assignment, seed })
}

// ---- search space ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Num(v) => Some(*v),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            ParamValue::Num(_) => None,
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamSpec {
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    Categorical { choices: Vec<ParamValue> },
}

impl ParamSpec {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            ParamSpec::LogUniform { lo, hi } => *lo > 0.0 && lo < hi && hi.is_finite(),
            ParamSpec::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
            ParamSpec::Categorical { choices } => !choices.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad range for parameter `{name}`")))
        }
    }

    /// Bounds in the internal (possibly log) coordinate.
    fn internal_bounds(&self) -> Option<(f64, f64)> {
        match self {
            ParamSpec::LogUniform { lo, hi } => Some((lo.ln(), hi.ln())),
            ParamSpec::Uniform { lo, hi } => Some((*lo, *hi)),
            ParamSpec::Categorical { .. } => None,
        }
    }

    fn to_internal(&self, v: &ParamValue) -> Option<f64> {
        let x = v.as_f64()?;
        match self {
            ParamSpec::LogUniform { .. } => Some(x.ln()),
            _ => Some(x),
        }
    }

    fn from_internal(&self, u: f64) -> ParamValue {
        match self {
            ParamSpec::LogUniform { lo, hi } => ParamValue::Num(u.exp().clamp(*lo, *hi)),
            ParamSpec::Uniform { lo, hi } => ParamValue::Num(u.clamp(*lo, *hi)),
            ParamSpec::Categorical { .. } => unreachable!("categorical has no internal coordinate"),
        }
    }

    fn sample_prior(&self, r: &mut rng::Rng) -> ParamValue {
        match self {
            ParamSpec::Categorical { choices } => choices[r.random_range(0..choices.len())].clone(),
            _ => {
                let (a, b) = self.internal_bounds().unwrap_or((0.0, 1.0));
                self.from_internal(r.random_range(a..b))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<(String, ParamSpec)>,
}

impl SearchSpace {
    pub fn with(mut self, name: &str, spec: ParamSpec) -> Self {
        self.params.push((name.to_string(), spec));
        self
    }

    fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::invalid("empty search space"));
        }
        for (name, spec) in &self.params {
            spec.validate(name)?;
        }
        Ok(())
    }

    fn sample_prior(&self, r: &mut rng::Rng) -> Params {
        self.params
            .iter()
            .map(|(n, s)| (n.clone(), s.sample_prior(r)))
            .collect()
    }

    /// C and SVD rank, searched per fold.
    pub fn fold_wise(ranges: &SearchRanges) -> Self {
        SearchSpace::default()
            .with(
                "C",
                ParamSpec::LogUniform {
                    lo: ranges.c[0],
                    hi: ranges.c[1],
                },
            )
            .with(
                "svd_k",
                ParamSpec::Categorical {
                    choices: ranges.svd_k.iter().map(|&k| ParamValue::Num(k as f64)).collect(),
                },
            )
    }

    /// SVM settings, searched per subtask.
    pub fn task_wise(ranges: &SearchRanges) -> Self {
        SearchSpace::default()
            .with(
                "kernel",
                ParamSpec::Categorical {
                    choices: vec![ParamValue::Text("linear".into()), ParamValue::Text("rbf".into())],
                },
            )
            .with(
                "C",
                ParamSpec::LogUniform {
                    lo: ranges.c[0],
                    hi: ranges.c[1],
                },
            )
            .with(
                "class_weight",
                ParamSpec::Categorical {
                    choices: vec![ParamValue::Text("none".into()), ParamValue::Text("balanced".into())],
                },
            )
            .with(
                "gamma",
                ParamSpec::LogUniform {
                    lo: ranges.gamma[0],
                    hi: ranges.gamma[1],
                },
            )
    }
}

/// Configurable bounds of the model search spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchRanges {
    /// Log-uniform bounds of the regularization strength.
    #[serde(rename = "C")]
    pub c: [f64; 2],
    pub svd_k: Vec<usize>,
    pub gamma: [f64; 2],
}

impl Default for SearchRanges {
    fn default() -> Self {
        Self {
            c: [1e-3, 1e3],
            svd_k: SVD_K_CHOICES.to_vec(),
            gamma: [1e-4, 10.0],
        }
    }
}

// ---- search ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    #[default]
    TpeLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub params: Params,
    pub objective: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: TrialResult,
    pub trials: Vec<TrialResult>,
}

const TPE_WARMUP: usize = 10;
const TPE_GAMMA: f64 = 0.25;
const TPE_CANDIDATES: usize = 24;

fn run_trial<F: Fn(&Params) -> f64>(objective: &F, trial: usize, params: Params) -> TrialResult {
    let value = objective(&params);
    if value.is_finite() {
        TrialResult {
            trial,
            params,
            objective: Some(value),
            status: TrialStatus::Ok,
        }
    } else {
        TrialResult {
            trial,
            params,
            objective: None,
            status: TrialStatus::Failed,
        }
    }
}

/// Maximizes `objective` over `space`. The best trial is the highest finite
/// objective; ties go to the earliest trial.
pub fn search<F>(objective: F, space: &SearchSpace, trials: usize, seed: u64, strategy: Strategy) -> Result<SearchOutcome>
where
    F: Fn(&Params) -> f64 + Sync,
{
    space.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trial budget must be positive"));
    }
    let trial_rng = |t: usize| rng::rng_from_seed(rng::child_seed(seed, t as u64));

    let results: Vec<TrialResult> = match strategy {
        Strategy::Random => (0..trials)
            .into_par_iter()
            .map(|t| run_trial(&objective, t, space.sample_prior(&mut trial_rng(t))))
            .collect(),
        Strategy::TpeLike => {
            let mut done: Vec<TrialResult> = Vec::with_capacity(trials);
            let warmup = TPE_WARMUP.min(trials);
            done.extend(
                (0..warmup)
                    .into_par_iter()
                    .map(|t| run_trial(&objective, t, space.sample_prior(&mut trial_rng(t))))
                    .collect::<Vec<_>>(),
            );
            for t in warmup..trials {
                let params = tpe_propose(space, &done, &mut trial_rng(t));
                done.push(run_trial(&objective, t, params));
            }
            done
        }
    };

    let best = best_trial(&results)
        .ok_or_else(|| Error::invalid("every trial failed; no finite objective"))?
        .clone();
    Ok(SearchOutcome { best, trials: results })
}

pub fn best_trial(results: &[TrialResult]) -> Option<&TrialResult> {
    let mut best: Option<&TrialResult> = None;
    for r in results {
        if let Some(v) = r.objective {
            if best.is_none_or(|b| v > b.objective.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(r);
            }
        }
    }
    best
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Parzen mixture over `points` plus a flat prior component on `[a, b]`.
struct Parzen {
    points: Vec<f64>,
    sigma: f64,
    a: f64,
    b: f64,
}

impl Parzen {
    fn new(points: Vec<f64>, a: f64, b: f64) -> Self {
        let n = points.len().max(1) as f64;
        let sigma = ((b - a) * n.powf(-0.2)).max((b - a) * 1e-3);
        Self { points, sigma, a, b }
    }

    fn density(&self, x: f64) -> f64 {
        let w = 1.0 / (self.points.len() + 1) as f64;
        let prior = w / (self.b - self.a);
        prior + self.points.iter().map(|&p| w * normal_pdf(x, p, self.sigma)).sum::<f64>()
    }

    fn sample(&self, r: &mut rng::Rng) -> f64 {
        let pick = r.random_range(0..=self.points.len());
        if pick == self.points.len() {
            return r.random_range(self.a..self.b);
        }
        let z: f64 = StandardNormal.sample(r);
        (self.points[pick] + self.sigma * z).clamp(self.a, self.b)
    }
}

/// Univariate tree-structured Parzen step: each parameter independently picks
/// the candidate (drawn from the good-trial density) maximizing l(x)/g(x).
fn tpe_propose(space: &SearchSpace, history: &[TrialResult], r: &mut rng::Rng) -> Params {
    let mut ok: Vec<&TrialResult> = history.iter().filter(|t| t.objective.is_some()).collect();
    if ok.len() < 2 {
        return space.sample_prior(r);
    }
    ok.sort_by(|x, y| {
        y.objective
            .partial_cmp(&x.objective)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.trial.cmp(&y.trial))
    });
    let n_good = ((TPE_GAMMA * ok.len() as f64).ceil() as usize).clamp(1, ok.len() - 1);
    let (good, bad) = ok.split_at(n_good);

    let mut out = Params::new();
    for (name, spec) in &space.params {
        let value = match spec {
            ParamSpec::Categorical { choices } => {
                let weights = |set: &[&TrialResult]| -> Vec<f64> {
                    let mut w = vec![1.0; choices.len()];
                    for t in set {
                        if let Some(i) = t.params.get(name).and_then(|v| choices.iter().position(|c| c == v)) {
                            w[i] += 1.0;
                        }
                    }
                    let s: f64 = w.iter().sum();
                    w.iter().map(|x| x / s).collect()
                };
                let l = weights(good);
                let g = weights(bad);
                let mut best = (f64::NEG_INFINITY, 0usize);
                for _ in 0..TPE_CANDIDATES {
                    let u: f64 = r.random();
                    let mut acc = 0.0;
                    let mut idx = choices.len() - 1;
                    for (i, p) in l.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            idx = i;
                            break;
                        }
                    }
                    let score = (l[idx] / g[idx]).ln();
                    if score > best.0 {
                        best = (score, idx);
                    }
                }
                choices[best.1].clone()
            }
            _ => {
                let (a, b) = spec.internal_bounds().unwrap_or((0.0, 1.0));
                let pts = |set: &[&TrialResult]| -> Vec<f64> {
                    set.iter()
                        .filter_map(|t| t.params.get(name).and_then(|v| spec.to_internal(v)))
                        .collect()
                };
                let l = Parzen::new(pts(good), a, b);
                let g = Parzen::new(pts(bad), a, b);
                let mut best = (f64::NEG_INFINITY, a);
                for _ in 0..TPE_CANDIDATES {
                    let x = l.sample(r);
                    let score = l.density(x).ln() - g.density(x).ln();
                    if score > best.0 {
                        best = (score, x);
                    }
                }
                spec.from_internal(best.1)
            }
        };
        out.insert(name.clone(), value);
    }
    out
}

// ---- model tuning ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldParams {
    #[serde(rename = "C")]
    pub c: f64,
    /// Effective rank after capping at the training split's maximum.
    pub svd_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub kernel: KernelKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub class_weight: ClassWeight,
    /// Ignored by the linear kernel.
    pub gamma: f64,
}

impl TaskParams {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec::Svm {
            c: self.c,
            kernel: self.kernel,
            gamma: Some(self.gamma),
            class_weight: self.class_weight,
        }
    }

    fn from_params(p: &Params) -> Result<Self> {
        let text = |k: &str| p.get(k).and_then(ParamValue::as_str).ok_or_else(|| missing(k));
        let num = |k: &str| p.get(k).and_then(ParamValue::as_f64).ok_or_else(|| missing(k));
        let kernel = match text("kernel")? {
            "linear" => KernelKind::Linear,
            "rbf" => KernelKind::Rbf,
            other => return Err(Error::invalid(format!("unknown kernel `{other}`"))),
        };
        let class_weight = match text("class_weight")? {
            "none" => ClassWeight::None,
            "balanced" => ClassWeight::Balanced,
            other => return Err(Error::invalid(format!("unknown class weight `{other}`"))),
        };
        Ok(Self {
            kernel,
            c: num("C")?,
            class_weight,
            gamma: num("gamma")?,
        })
    }
}

fn missing(key: &str) -> Error {
    Error::invalid(format!("trial parameters lack `{key}`"))
}

fn fold_params_from(p: &Params, n_train: usize, joint_dim: usize) -> Result<FoldParams> {
    let c = p.get("C").and_then(ParamValue::as_f64).ok_or_else(|| missing("C"))?;
    let k = p.get("svd_k").and_then(ParamValue::as_f64).ok_or_else(|| missing("svd_k"))?;
    Ok(FoldParams {
        c,
        svd_k: effective_rank(k as usize, n_train, joint_dim),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldBest {
    pub fold: usize,
    pub params: FoldParams,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBest {
    pub subtask: Subtask,
    pub params: TaskParams,
    pub objective: f64,
}

/// Everything training needs from the tuning stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub recipe: Recipe,
    pub fold_wise: Vec<FoldBest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_wise: Option<Vec<TaskBest>>,
}

/// Full trial history of a tuning run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialLogs {
    pub fold_wise: Vec<Vec<TrialResult>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub task_wise: Vec<Vec<TrialResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub trials: usize,
    pub strategy: Strategy,
    pub solver: SolverSettings,
    pub ranges: SearchRanges,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            strategy: Strategy::default(),
            solver: SolverSettings::default(),
            ranges: SearchRanges::default(),
        }
    }
}

/// Preprocessed train/validation matrices of one fold at one SVD rank.
struct Prepared {
    x_train: DMatrix<f64>,
    x_val: DMatrix<f64>,
}

/// Per-fold cache of preprocessing keyed by rank, shared across trials.
struct FoldData {
    train: FeatureAssembly,
    val: FeatureAssembly,
    svd_seed: u64,
    cache: Mutex<HashMap<usize, Arc<OnceLock<std::result::Result<Prepared, String>>>>>,
}

impl FoldData {
    fn new(assembly: &FeatureAssembly, plan: &FoldPlan, fold: usize, svd_seed: u64) -> Self {
        Self {
            train: assembly.subset(&plan.train_indices(fold)),
            val: assembly.subset(&plan.validation_indices(fold)),
            svd_seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn prepared(&self, k: usize, settings: &SolverSettings) -> Result<Arc<OnceLock<std::result::Result<Prepared, String>>>> {
        let cell = {
            let mut cache = self.cache.lock().map_err(|_| Error::invalid("tuning cache poisoned"))?;
            cache.entry(k).or_default().clone()
        };
        cell.get_or_init(|| {
            let run = || -> Result<Prepared> {
                let (pre, x_train) = Preprocessor::fit(&self.train, k, settings.svd, self.svd_seed)?;
                let x_val = pre.transform(&self.val)?;
                Ok(Prepared { x_train, x_val })
            };
            run().map_err(|e| e.to_string())
        });
        Ok(cell)
    }

    /// Validation macro-F1 (0..1) for one subtask and model.
    fn score(&self, k: usize, task: Subtask, spec: ModelSpec, settings: &SolverSettings) -> Result<f64> {
        let cell = self.prepared(k, settings)?;
        let prep = match cell.get() {
            Some(Ok(p)) => p,
            Some(Err(msg)) => return Err(Error::invalid(msg.clone())),
            None => return Err(Error::invalid("preprocessing cache not initialised")),
        };
        let y_train = self.train.task_labels(task)?;
        let y_val = self.val.task_labels(task)?;
        let model = MemberModel::fit(&prep.x_train, &y_train, spec, settings)?;
        let pred = model.predict(&prep.x_val)?;
        Ok(metrics::prf_macro(&y_val, &pred)?.f1)
    }
}

fn fold_spec(recipe: Recipe, c: f64) -> ModelSpec {
    if recipe.uses_svm() {
        ModelSpec::Svm {
            c,
            kernel: KernelKind::Rbf,
            gamma: None,
            class_weight: ClassWeight::None,
        }
    } else {
        ModelSpec::LogReg { c }
    }
}

fn tuning_seed(master: u64, recipe: Recipe, stage: &str, index: usize) -> u64 {
    rng::child_seed(
        rng::derive_seed(master, &format!("tune-{stage}-{}", recipe.stream_name())),
        index as u64,
    )
}

/// Validation objective of one fold-wise trial: mean macro-F1 over subtasks.
/// Returns NaN when any fit fails, which marks the trial failed.
pub fn fold_objective(
    assembly: &FeatureAssembly,
    plan: &FoldPlan,
    fold: usize,
    recipe: Recipe,
    params: FoldParams,
    solver: &SolverSettings,
    master_seed: u64,
) -> Result<f64> {
    let data = FoldData::new(assembly, plan, fold, svd_seed(master_seed, recipe, fold));
    let k = effective_rank(params.svd_k, data.train.len(), data.train.joint_dim());
    let mut total = 0.0;
    for task in Subtask::ALL {
        total += data.score(k, task, fold_spec(recipe, params.c), solver)?;
    }
    Ok(total / 3.0)
}

/// Fold-wise search, then (for the SVM recipe) task-wise search.
pub fn tune(
    assembly: &FeatureAssembly,
    plan: &FoldPlan,
    recipe: Recipe,
    settings: &TuneSettings,
    master_seed: u64,
) -> Result<(TuningOutcome, TrialLogs)> {
    if assembly.labels.is_none() {
        return Err(Error::invalid("tuning needs a labeled assembly"));
    }
    if plan.assignment.len() != assembly.len() {
        return Err(Error::DimensionMismatch {
            expected: assembly.len(),
            found: plan.assignment.len(),
        });
    }
    let folds: Vec<FoldData> = (0..plan.k)
        .map(|f| FoldData::new(assembly, plan, f, svd_seed(master_seed, recipe, f)))
        .collect();
    let solver = settings.solver;

    let mut fold_wise = Vec::with_capacity(plan.k);
    let mut logs = TrialLogs::default();
    for (f, data) in folds.iter().enumerate() {
        let n_train = data.train.len();
        let joint_dim = data.train.joint_dim();
        let objective = |p: &Params| -> f64 {
            let run = || -> Result<f64> {
                let fp = fold_params_from(p, n_train, joint_dim)?;
                let mut total = 0.0;
                for task in Subtask::ALL {
                    total += data.score(fp.svd_k, task, fold_spec(recipe, fp.c), &solver)?;
                }
                Ok(total / 3.0)
            };
            run().unwrap_or_else(|e| {
                log::warn!("fold {f} trial failed: {e}");
                f64::NAN
            })
        };
        let outcome = search(
            objective,
            &SearchSpace::fold_wise(&settings.ranges),
            settings.trials,
            tuning_seed(master_seed, recipe, "fold", f),
            settings.strategy,
        )?;
        fold_wise.push(FoldBest {
            fold: f,
            params: fold_params_from(&outcome.best.params, n_train, joint_dim)?,
            objective: outcome.best.objective.unwrap_or(f64::NAN),
        });
        logs.fold_wise.push(outcome.trials);
    }

    let task_wise = if recipe.uses_svm() {
        let mut best = Vec::with_capacity(3);
        for task in Subtask::ALL {
            let objective = |p: &Params| -> f64 {
                let run = || -> Result<f64> {
                    let spec = TaskParams::from_params(p)?.spec();
                    let mut total = 0.0;
                    for (f, data) in folds.iter().enumerate() {
                        total += data.score(fold_wise[f].params.svd_k, task, spec, &solver)?;
                    }
                    Ok(total / folds.len() as f64)
                };
                run().unwrap_or_else(|e| {
                    log::warn!("task {task} trial failed: {e}");
                    f64::NAN
                })
            };
            let outcome = search(
                objective,
                &SearchSpace::task_wise(&settings.ranges),
                settings.trials,
                tuning_seed(master_seed, recipe, "task", task.index()),
                settings.strategy,
            )?;
            best.push(TaskBest {
                subtask: task,
                params: TaskParams::from_params(&outcome.best.params)?,
                objective: outcome.best.objective.unwrap_or(f64::NAN),
            });
            logs.task_wise.push(outcome.trials);
        }
        Some(best)
    } else {
        None
    };

    Ok((
        TuningOutcome {
            recipe,
            fold_wise,
            task_wise,
        },
        logs,
    ))
}
