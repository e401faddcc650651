//! Per-subtask voting ensembles.
//!
//! Every member owns the preprocessing fit on its own training fold: a
//! truncated SVD of the joint (semantic + style) embedding, concatenation with
//! the numeric features, then column standardization. Ensembles predict by
//! hard majority vote; an exact tie yields label 0.

use std::io::{Read, Write};

use base64::Engine as _;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimred::{self, StandardizerStats, SvdFactors, SvdParams};
use crate::embed_io::{hstack, FeatureAssembly};
use crate::error::{Error, Result};
use crate::linclf::{self, LogRegModel};
use crate::rng;
use crate::svm::{self, ClassWeight, KernelKind, SvmModel, SvmParams};
use crate::tuning::{FoldPlan, TuningOutcome};
use crate::Subtask;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// Seven fold-wise tuned logistic regression members.
    Submission1,
    /// Same recipe as `Submission1`, drawn from independent seed streams.
    Submission2,
    /// Seven fold-wise tuned RBF SVMs plus seven task-wise tuned SVMs.
    Submission3,
}

impl Recipe {
    pub fn uses_svm(self) -> bool {
        matches!(self, Recipe::Submission3)
    }

    pub fn has_probabilities(self) -> bool {
        !self.uses_svm()
    }

    /// Seed stream namespace; keeps the two logistic recipes independent.
    pub fn stream_name(self) -> &'static str {
        match self {
            Recipe::Submission1 | Recipe::Submission3 => "primary",
            Recipe::Submission2 => "replicate",
        }
    }

    /// Expected member count for `folds` folds.
    pub fn member_count(self, folds: usize) -> usize {
        if self.uses_svm() {
            2 * folds
        } else {
            folds
        }
    }
}

impl std::str::FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "submission1" => Ok(Recipe::Submission1),
            "submission2" => Ok(Recipe::Submission2),
            "submission3" => Ok(Recipe::Submission3),
            other => Err(Error::invalid(format!("unknown recipe `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningScope {
    FoldWise,
    TaskWise,
}

/// Classifier and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    LogReg {
        c: f64,
    },
    Svm {
        c: f64,
        kernel: KernelKind,
        gamma: Option<f64>,
        class_weight: ClassWeight,
    },
}

/// Solver settings shared by every member fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub svd: SvdParams,
    pub logreg_tol: f64,
    pub logreg_max_iter: usize,
    pub svm_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            svd: SvdParams::default(),
            logreg_tol: linclf::DEFAULT_TOL,
            logreg_max_iter: linclf::DEFAULT_MAX_ITER,
            svm_tol: svm::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemberModel {
    LogReg(LogRegModel),
    Svm(SvmModel),
}

impl MemberModel {
    pub fn fit(x: &DMatrix<f64>, y: &[u8], spec: ModelSpec, settings: &SolverSettings) -> Result<Self> {
        match spec {
            ModelSpec::LogReg { c } => Ok(MemberModel::LogReg(linclf::fit_logreg(
                x,
                y,
                c,
                settings.logreg_tol,
                settings.logreg_max_iter,
            )?)),
            ModelSpec::Svm {
                c,
                kernel,
                gamma,
                class_weight,
            } => {
                let params = SvmParams {
                    gamma,
                    class_weight,
                    tol: settings.svm_tol,
                    ..SvmParams::new(c, kernel)
                };
                Ok(MemberModel::Svm(svm::fit_svm(x, y, &params)?))
            }
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<u8>> {
        match self {
            MemberModel::LogReg(m) => m.predict(x),
            MemberModel::Svm(m) => m.predict(x),
        }
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            MemberModel::LogReg(m) => m.predict_proba(x),
            MemberModel::Svm(_) => Err(Error::Unsupported(
                "svm members produce hard votes only, no probabilities".into(),
            )),
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            MemberModel::LogReg(m) => m.converged,
            MemberModel::Svm(m) => m.converged,
        }
    }
}

/// Preprocessing fit on one training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub svd: SvdFactors,
    pub standardizer: StandardizerStats,
}

impl Preprocessor {
    /// Fits SVD and standardizer on `train`; returns the standardized
    /// training matrix alongside.
    pub fn fit(train: &FeatureAssembly, k: usize, params: SvdParams, seed: u64) -> Result<(Self, DMatrix<f64>)> {
        let svd = dimred::fit_truncated_svd(&train.joint_embedding(), k, params, seed)?;
        let reduced = dimred::svd_transform(&svd, &train.joint_embedding())?;
        let raw = hstack(&reduced, &train.numeric);
        let standardizer = dimred::fit_standardizer(&raw)?;
        let x = dimred::standardize(&standardizer, &raw)?;
        Ok((Self { svd, standardizer }, x))
    }

    pub fn transform(&self, blocks: &FeatureAssembly) -> Result<DMatrix<f64>> {
        let reduced = dimred::svd_transform(&self.svd, &blocks.joint_embedding())?;
        if blocks.numeric.ncols() + reduced.ncols() != self.standardizer.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.standardizer.means.len(),
                found: blocks.numeric.ncols() + reduced.ncols(),
            });
        }
        dimred::standardize(&self.standardizer, &hstack(&reduced, &blocks.numeric))
    }
}

/// SVD rank actually usable on a training split.
pub fn effective_rank(requested: usize, n_train: usize, joint_dim: usize) -> usize {
    requested.clamp(1, n_train.min(joint_dim).max(1))
}

/// Seed of the SVD sketch for a fold; independent of rank and subtask.
pub fn svd_seed(master: u64, recipe: Recipe, fold: usize) -> u64 {
    rng::child_seed(rng::derive_seed(master, &format!("svd-{}", recipe.stream_name())), fold as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub model: MemberModel,
    pub fold_index: usize,
    pub tuning_scope: TuningScope,
    pub preprocessor: Preprocessor,
}

impl EnsembleMember {
    pub fn votes(&self, blocks: &FeatureAssembly) -> Result<Vec<u8>> {
        self.model.predict(&self.preprocessor.transform(blocks)?)
    }

    pub fn probabilities(&self, blocks: &FeatureAssembly) -> Result<Vec<f64>> {
        self.model.predict_proba(&self.preprocessor.transform(blocks)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub subtask: Subtask,
    pub recipe: Recipe,
    pub members: Vec<EnsembleMember>,
    pub schema_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub label: u8,
    pub positive_fraction: f64,
}

/// Label 1 iff strictly more than half of the votes are 1.
pub fn majority(votes: &[u8]) -> Vote {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    Vote {
        label: u8::from(2 * ones > votes.len()),
        positive_fraction: ones as f64 / votes.len() as f64,
    }
}

pub fn predict_majority(pipeline: &FittedPipeline, blocks: &FeatureAssembly) -> Result<Vec<Vote>> {
    if pipeline.members.is_empty() {
        return Err(Error::invalid("pipeline has no members"));
    }
    let per_member: Vec<Vec<u8>> = pipeline
        .members
        .par_iter()
        .map(|m| m.votes(blocks))
        .collect::<Result<_>>()?;
    Ok((0..blocks.len())
        .map(|i| majority(&per_member.iter().map(|v| v[i]).collect::<Vec<_>>()))
        .collect())
}

/// Mean member probability per comment. Confidence is `max(p, 1 − p)`.
pub fn predict_confidence(pipeline: &FittedPipeline, blocks: &FeatureAssembly) -> Result<Vec<f64>> {
    if !pipeline.recipe.has_probabilities() {
        return Err(Error::Unsupported(format!(
            "{:?} ensembles vote with svm members and expose no probabilities",
            pipeline.recipe
        )));
    }
    if pipeline.members.is_empty() {
        return Err(Error::invalid("pipeline has no members"));
    }
    let per_member: Vec<Vec<f64>> = pipeline
        .members
        .par_iter()
        .map(|m| m.probabilities(blocks))
        .collect::<Result<_>>()?;
    let k = per_member.len() as f64;
    Ok((0..blocks.len())
        .map(|i| per_member.iter().map(|p| p[i]).sum::<f64>() / k)
        .collect())
}

fn require_both_classes(y: &[u8], task: Subtask, fold: usize) -> Result<()> {
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass {
            context: format!("subtask {task}, fold {fold}"),
        });
    }
    Ok(())
}

/// Trains the three subtask pipelines of `recipe` from tuned hyperparameters.
pub fn train_recipe(
    assembly: &FeatureAssembly,
    recipe: Recipe,
    plan: &FoldPlan,
    tuned: &TuningOutcome,
    settings: &SolverSettings,
    master_seed: u64,
) -> Result<[FittedPipeline; 3]> {
    if assembly.labels.is_none() {
        return Err(Error::invalid("training needs a labeled assembly"));
    }
    if plan.assignment.len() != assembly.len() {
        return Err(Error::DimensionMismatch {
            expected: assembly.len(),
            found: plan.assignment.len(),
        });
    }
    if tuned.fold_wise.len() != plan.k {
        return Err(Error::invalid(format!(
            "tuning covers {} folds, plan has {}",
            tuned.fold_wise.len(),
            plan.k
        )));
    }
    if recipe.uses_svm() && tuned.task_wise.is_none() {
        return Err(Error::invalid("submission3 needs task-wise tuned svm parameters"));
    }

    // (fold, subtask) -> members, trained in parallel
    let per_fold: Vec<Vec<Vec<EnsembleMember>>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| -> Result<Vec<Vec<EnsembleMember>>> {
            let train = assembly.subset(&plan.train_indices(fold));
            let fw = &tuned.fold_wise[fold].params;
            let k = effective_rank(fw.svd_k, train.len(), train.joint_dim());
            let (pre, x) = Preprocessor::fit(&train, k, settings.svd, svd_seed(master_seed, recipe, fold))?;
            Subtask::ALL
                .iter()
                .map(|&task| {
                    let y = train.task_labels(task)?;
                    require_both_classes(&y, task, fold)?;
                    let fold_spec = if recipe.uses_svm() {
                        ModelSpec::Svm {
                            c: fw.c,
                            kernel: KernelKind::Rbf,
                            gamma: None,
                            class_weight: ClassWeight::None,
                        }
                    } else {
                        ModelSpec::LogReg { c: fw.c }
                    };
                    let mut members = vec![EnsembleMember {
                        model: MemberModel::fit(&x, &y, fold_spec, settings)?,
                        fold_index: fold,
                        tuning_scope: TuningScope::FoldWise,
                        preprocessor: pre.clone(),
                    }];
                    if let Some(task_wise) = tuned.task_wise.as_ref().filter(|_| recipe.uses_svm()) {
                        let spec = task_wise[task.index()].params.spec();
                        members.push(EnsembleMember {
                            model: MemberModel::fit(&x, &y, spec, settings)?,
                            fold_index: fold,
                            tuning_scope: TuningScope::TaskWise,
                            preprocessor: pre.clone(),
                        });
                    }
                    Ok(members)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let build = |task: Subtask| {
        let mut fold_wise = Vec::new();
        let mut task_wise = Vec::new();
        for fold_members in &per_fold {
            for m in &fold_members[task.index()] {
                match m.tuning_scope {
                    TuningScope::FoldWise => fold_wise.push(m.clone()),
                    TuningScope::TaskWise => task_wise.push(m.clone()),
                }
            }
        }
        fold_wise.extend(task_wise);
        FittedPipeline {
            subtask: task,
            recipe,
            members: fold_wise,
            schema_version: SCHEMA_VERSION,
        }
    };
    Ok([
        build(Subtask::Toxic),
        build(Subtask::Engaging),
        build(Subtask::FactClaiming),
    ])
}

// ---- persistence ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayEncoding {
    #[default]
    Decimal,
    /// IEEE-754 little-endian bytes, base64 (standard alphabet, padded).
    Base64,
}

/// A float array as written on disk: a JSON number list or a base64 string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Floats {
    Decimal(Vec<f64>),
    Base64(String),
}

impl Floats {
    fn encode(values: &[f64], enc: ArrayEncoding) -> Self {
        match enc {
            ArrayEncoding::Decimal => Floats::Decimal(values.to_vec()),
            ArrayEncoding::Base64 => {
                let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
                Floats::Base64(base64::engine::general_purpose::STANDARD.encode(bytes))
            }
        }
    }

    fn decode(&self) -> Result<Vec<f64>> {
        match self {
            Floats::Decimal(v) => Ok(v.clone()),
            Floats::Base64(s) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(s)
                    .map_err(|e| Error::invalid(format!("bad base64 array: {e}")))?;
                if bytes.len() % 8 != 0 {
                    return Err(Error::invalid("base64 array length is not a multiple of 8 bytes"));
                }
                Ok(bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap_or([0; 8])))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixDto {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Floats,
}

impl MatrixDto {
    fn encode(m: &DMatrix<f64>, enc: ArrayEncoding) -> Self {
        let row_major: Vec<f64> = m.transpose().iter().copied().collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: Floats::encode(&row_major, enc),
        }
    }

    fn decode(&self) -> Result<DMatrix<f64>> {
        let data = self.data.decode()?;
        if data.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: data.len(),
            });
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ModelDto {
    LogReg {
        weights: Floats,
        intercept: f64,
        c: f64,
        converged: bool,
        final_grad_norm: f64,
        iterations: usize,
    },
    Svm {
        support_vectors: MatrixDto,
        alphas: Floats,
        labels: Floats,
        bias: f64,
        kernel: KernelKind,
        gamma: f64,
        c: f64,
        class_weight: ClassWeight,
        converged: bool,
        max_violation: f64,
        iterations: usize,
        dual_objective: f64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct MemberDto {
    fold_index: usize,
    tuning_scope: TuningScope,
    svd_components: MatrixDto,
    svd_singular_values: Floats,
    svd_train_mean: Floats,
    standardizer_means: Floats,
    standardizer_stds: Floats,
    model: ModelDto,
}

#[derive(Debug, Serialize, Deserialize)]
struct PipelineDto {
    schema_version: u32,
    subtask: Subtask,
    recipe: Recipe,
    members: Vec<MemberDto>,
}

fn to_dto(p: &FittedPipeline, enc: ArrayEncoding) -> PipelineDto {
    let f = |v: &[f64]| Floats::encode(v, enc);
    PipelineDto {
        schema_version: p.schema_version,
        subtask: p.subtask,
        recipe: p.recipe,
        members: p
            .members
            .iter()
            .map(|m| MemberDto {
                fold_index: m.fold_index,
                tuning_scope: m.tuning_scope,
                svd_components: MatrixDto::encode(&m.preprocessor.svd.components, enc),
                svd_singular_values: f(&m.preprocessor.svd.singular_values),
                svd_train_mean: f(&m.preprocessor.svd.train_mean),
                standardizer_means: f(&m.preprocessor.standardizer.means),
                standardizer_stds: f(&m.preprocessor.standardizer.stds),
                model: match &m.model {
                    MemberModel::LogReg(l) => ModelDto::LogReg {
                        weights: f(&l.weights),
                        intercept: l.intercept,
                        c: l.c,
                        converged: l.converged,
                        final_grad_norm: l.final_grad_norm,
                        iterations: l.iterations,
                    },
                    MemberModel::Svm(s) => ModelDto::Svm {
                        support_vectors: MatrixDto::encode(&s.support_vectors, enc),
                        alphas: f(&s.alphas),
                        labels: f(&s.labels),
                        bias: s.bias,
                        kernel: s.kernel,
                        gamma: s.gamma,
                        c: s.c,
                        class_weight: s.class_weight,
                        converged: s.converged,
                        max_violation: s.max_violation,
                        iterations: s.iterations,
                        dual_objective: s.dual_objective,
                    },
                },
            })
            .collect(),
    }
}

fn from_dto(dto: PipelineDto) -> Result<FittedPipeline> {
    if dto.schema_version != SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "unsupported pipeline schema version {} (expected {SCHEMA_VERSION})",
            dto.schema_version
        )));
    }
    let members = dto
        .members
        .into_iter()
        .map(|m| -> Result<EnsembleMember> {
            let model = match m.model {
                ModelDto::LogReg {
                    weights,
                    intercept,
                    c,
                    converged,
                    final_grad_norm,
                    iterations,
                } => MemberModel::LogReg(LogRegModel {
                    weights: weights.decode()?,
                    intercept,
                    c,
                    converged,
                    final_grad_norm,
                    iterations,
                }),
                ModelDto::Svm {
                    support_vectors,
                    alphas,
                    labels,
                    bias,
                    kernel,
                    gamma,
                    c,
                    class_weight,
                    converged,
                    max_violation,
                    iterations,
                    dual_objective,
                } => MemberModel::Svm(SvmModel {
                    support_vectors: support_vectors.decode()?,
                    alphas: alphas.decode()?,
                    labels: labels.decode()?,
                    bias,
                    kernel,
                    gamma,
                    c,
                    class_weight,
                    converged,
                    max_violation,
                    iterations,
                    dual_objective,
                }),
            };
            Ok(EnsembleMember {
                model,
                fold_index: m.fold_index,
                tuning_scope: m.tuning_scope,
                preprocessor: Preprocessor {
                    svd: SvdFactors {
                        components: m.svd_components.decode()?,
                        singular_values: m.svd_singular_values.decode()?,
                        train_mean: m.svd_train_mean.decode()?,
                    },
                    standardizer: StandardizerStats {
                        means: m.standardizer_means.decode()?,
                        stds: m.standardizer_stds.decode()?,
                    },
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(FittedPipeline {
        subtask: dto.subtask,
        recipe: dto.recipe,
        members,
        schema_version: dto.schema_version,
    })
}

pub fn save_pipeline(p: &FittedPipeline, writer: impl Write, enc: ArrayEncoding) -> Result<()> {
    let mut w = writer;
    serde_json::to_writer_pretty(&mut w, &to_dto(p, enc))?;
    w.write_all(b"\n").map_err(|e| Error::io("<pipeline>", e))?;
    Ok(())
}

/// Reads either array encoding.
pub fn load_pipeline(reader: impl Read) -> Result<FittedPipeline> {
    from_dto(serde_json::from_reader(reader)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linclf::LogRegModel;

    fn lr(w: f64, b: f64) -> MemberModel {
        MemberModel::LogReg(LogRegModel {
            weights: vec![w],
            intercept: b,
            c: 1.0,
            converged: true,
            final_grad_norm: 0.0,
            iterations: 0,
        })
    }

    /// Identity-like preprocessing on a 1-column joint embedding with no
    /// numeric features.
    fn passthrough() -> Preprocessor {
        Preprocessor {
            svd: SvdFactors {
                components: DMatrix::from_element(1, 1, 1.0),
                singular_values: vec![1.0],
                train_mean: vec![0.0],
            },
            standardizer: StandardizerStats {
                means: vec![0.0],
                stds: vec![1.0],
            },
        }
    }

    fn blocks(xs: &[f64]) -> FeatureAssembly {
        FeatureAssembly {
            ids: (0..xs.len()).map(|i| i.to_string()).collect(),
            semantic: DMatrix::from_column_slice(xs.len(), 1, xs),
            style: DMatrix::zeros(xs.len(), 0),
            numeric: DMatrix::zeros(xs.len(), 0),
            labels: None,
        }
    }

    fn pipeline(models: Vec<MemberModel>, recipe: Recipe) -> FittedPipeline {
        FittedPipeline {
            subtask: Subtask::Toxic,
            recipe,
            members: models
                .into_iter()
                .enumerate()
                .map(|(i, model)| EnsembleMember {
                    model,
                    fold_index: i,
                    tuning_scope: TuningScope::FoldWise,
                    preprocessor: passthrough(),
                })
                .collect(),
            schema_version: SCHEMA_VERSION,
        }
    }

    #[test]
    fn majority_rules() {
        let v = majority(&[1, 1, 0]);
        assert_eq!(v.label, 1);
        assert!((v.positive_fraction - 2.0 / 3.0).abs() < 1e-15);
        let v = majority(&[1, 0, 1, 0]);
        assert_eq!(v.label, 0);
        assert_eq!(v.positive_fraction, 0.5);
        // adding a split pair never flips a strict majority
        assert_eq!(majority(&[1, 1, 0, 1, 0]).label, 1);
    }

    #[test]
    fn identical_members_match_single_model() {
        let x = blocks(&[-2.0, -0.1, 0.3, 4.0]);
        let single = pipeline(vec![lr(1.5, -0.2)], Recipe::Submission1);
        let triple = pipeline(vec![lr(1.5, -0.2), lr(1.5, -0.2), lr(1.5, -0.2)], Recipe::Submission1);
        let a: Vec<u8> = predict_majority(&single, &x).unwrap().iter().map(|v| v.label).collect();
        let b: Vec<u8> = predict_majority(&triple, &x).unwrap().iter().map(|v| v.label).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn member_order_does_not_matter() {
        let x = blocks(&[-2.0, -0.5, 0.0, 0.4, 3.0]);
        let models = vec![lr(1.0, 0.0), lr(2.0, -1.0), lr(-1.0, 0.2), lr(0.5, 0.3)];
        let mut rev = models.clone();
        rev.reverse();
        let a = predict_majority(&pipeline(models, Recipe::Submission1), &x).unwrap();
        let b = predict_majority(&pipeline(rev, Recipe::Submission1), &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn confidence_is_mean_probability() {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let x = blocks(&[0.0]);
        let p = pipeline(
            vec![lr(0.0, logit(0.6)), lr(0.0, logit(0.8)), lr(0.0, logit(0.7))],
            Recipe::Submission1,
        );
        let probs = predict_confidence(&p, &x).unwrap();
        assert!((probs[0] - 0.7).abs() < 1e-12);
        assert!((crate::metrics::to_confidence(0.2).unwrap() - 0.8).abs() < 1e-15);

        let svm_pipeline = pipeline(vec![lr(0.0, 0.0)], Recipe::Submission3);
        assert!(matches!(predict_confidence(&svm_pipeline, &x), Err(Error::Unsupported(_))));
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let p = pipeline(vec![lr(1.0, 0.0)], Recipe::Submission1);
        let wide = FeatureAssembly {
            numeric: DMatrix::zeros(2, 3),
            ..blocks(&[1.0, 2.0])
        };
        assert!(predict_majority(&p, &wide).is_err());
    }

    #[test]
    fn persistence_round_trips_both_encodings() {
        let svm_model = MemberModel::Svm(SvmModel {
            support_vectors: DMatrix::from_row_slice(2, 1, &[0.1, -0.7]),
            alphas: vec![0.25, 0.25],
            labels: vec![1.0, -1.0],
            bias: 0.1 + 0.2,
            kernel: KernelKind::Rbf,
            gamma: 1.0 / 3.0,
            c: 10.0,
            class_weight: ClassWeight::Balanced,
            converged: true,
            max_violation: 1e-4,
            iterations: 7,
            dual_objective: 0.5,
        });
        let p = pipeline(vec![lr(std::f64::consts::PI, -1e-300), svm_model], Recipe::Submission3);
        for enc in [ArrayEncoding::Decimal, ArrayEncoding::Base64] {
            let mut buf = Vec::new();
            save_pipeline(&p, &mut buf, enc).unwrap();
            let back = load_pipeline(buf.as_slice()).unwrap();
            assert_eq!(back, p);
        }
        let mut buf = Vec::new();
        save_pipeline(&p, &mut buf, ArrayEncoding::Base64).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(load_pipeline(text.as_bytes()).is_err());
    }
}
