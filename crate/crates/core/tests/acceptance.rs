//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Run with `cargo test -p commentclf-core --test acceptance`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use commentclf::corpus::{self, DEFAULT_POSITIVE_RATES};
use commentclf::dimred::{self, SvdParams};
use commentclf::embed_io::FeatureAssembly;
use commentclf::ensemble::{self, Recipe, SolverSettings, TuningScope};
use commentclf::linclf::{self, LogRegProblem};
use commentclf::metrics;
use commentclf::svm::{self, ClassWeight, KernelKind, SvmParams};
use commentclf::tuning::{self, FoldBest, FoldParams, TaskBest, TaskParams, TuningOutcome};
use commentclf::workflow::{self, MetricsReport, PathConfig, RunConfig, SynthConfig};
use commentclf::Subtask;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gaussian_matrix(r: &mut ChaCha20Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| r.sample(StandardNormal))
}

// ---- calibration ----

/// Brute force: every sample scans all bins for the one containing it.
fn calibration_oracle(probs: &[f64], y: &[u8], m: usize) -> (f64, f64) {
    let edge = |k: usize| if k == m { 1.0 } else { 0.5 + 0.5 * k as f64 / m as f64 };
    let mut members: Vec<Vec<(f64, bool)>> = vec![Vec::new(); m];
    for (&p, &label) in probs.iter().zip(y) {
        let conf = if p >= 0.5 { p } else { 1.0 - p };
        let predicted = if p >= 0.5 { 1 } else { 0 };
        for k in 0..m {
            let inside = edge(k) <= conf && (conf < edge(k + 1) || (k == m - 1 && conf <= 1.0));
            if inside {
                members[k].push((conf, predicted == label));
                break;
            }
        }
    }
    let n = probs.len() as f64;
    let mut ece = 0.0;
    let mut mce = 0.0f64;
    for bin in members.iter().filter(|b| !b.is_empty()) {
        let size = bin.len() as f64;
        let acc = bin.iter().filter(|(_, ok)| *ok).count() as f64 / size;
        let conf = bin.iter().map(|(c, _)| c).sum::<f64>() / size;
        ece += size / n * (acc - conf).abs();
        mce = mce.max((acc - conf).abs());
    }
    (ece, mce)
}

fn calibration_instances() -> Vec<(Vec<f64>, Vec<u8>, usize)> {
    let mut r = rng(101);
    (0..1000)
        .map(|_| {
            let m = r.random_range(1..=20usize);
            let n = r.random_range(1..=150usize);
            let probs = (0..n)
                .map(|_| match r.random_range(0..10) {
                    // land exactly on a bin edge, from either side of 0.5
                    0 => {
                        let e = 0.5 + 0.5 * r.random_range(0..=m) as f64 / m as f64;
                        if r.random_bool(0.5) {
                            e
                        } else {
                            1.0 - e
                        }
                    }
                    1 => [0.0, 0.5, 1.0][r.random_range(0..3)],
                    _ => r.random::<f64>(),
                })
                .collect();
            let y = (0..n).map(|_| u8::from(r.random_bool(0.5))).collect();
            (probs, y, m)
        })
        .collect()
}

fn crit_calibration_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for (probs, y, m) in calibration_instances() {
        let report = metrics::calibration(&probs, &y, m).expect("calibration");
        let (ece, mce) = calibration_oracle(&probs, &y, m);
        worst = worst.max((report.ece - ece).abs()).max((report.mce - mce).abs());
    }
    let hand = metrics::calibration(&[0.6, 0.7, 0.9, 0.8], &[1, 0, 1, 1], 2).expect("hand case");
    // 0.15 has no exact binary representation; allow a few ulps
    let hand_ok = (hand.ece - 0.15).abs() <= 1e-15 && (hand.mce - 0.15).abs() <= 1e-15;
    outcome(
        worst <= 1e-12 && hand_ok,
        format!(
            "1000 instances, max deviation from brute-force oracle {worst:.2e} (tol 1e-12); hand case ECE={} MCE={}",
            hand.ece, hand.mce
        ),
    )
}

fn crit_ece_below_mce() -> Outcome {
    let mut violations = 0;
    for (probs, y, m) in calibration_instances() {
        let report = metrics::calibration(&probs, &y, m).expect("calibration");
        if report.ece > report.mce {
            violations += 1;
        }
    }
    let mut out_of_range = 0;
    for i in 0..=10_000 {
        let c = metrics::to_confidence(i as f64 / 10_000.0).expect("confidence");
        if !(0.5..=1.0).contains(&c) {
            out_of_range += 1;
        }
    }
    outcome(
        violations == 0 && out_of_range == 0,
        format!("ECE > MCE on {violations}/1000 instances; {out_of_range}/10001 grid confidences outside [0.5, 1]"),
    )
}

// ---- logistic regression ----

fn crit_logreg_gradient() -> Outcome {
    let mut r = rng(202);
    let x = gaussian_matrix(&mut r, 30, 10);
    let y: Vec<u8> = (0..30).map(|i| u8::from(i % 3 == 0 || r.random_bool(0.3))).collect();
    let c = 0.7;
    let problem = LogRegProblem::new(&x, &y, c).expect("problem");
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let w: Vec<f64> = (0..10).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
        let b: f64 = r.sample(StandardNormal);
        let analytic = problem.gradient(&w, b);
        let mut numeric = Vec::with_capacity(11);
        for j in 0..=10 {
            let shifted = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < 10 {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                problem.objective(&w2, b2)
            };
            numeric.push((shifted(h) - shifted(-h)) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }

    let model = linclf::fit_logreg(&x, &y, c, linclf::DEFAULT_TOL, linclf::DEFAULT_MAX_ITER).expect("fit");
    let best = problem.objective(&model.weights, model.intercept);
    let mut beaten = 0;
    for i in 0..100 {
        let scale = [1e-4, 1e-2, 1.0, 10.0][i % 4];
        let w: Vec<f64> = model
            .weights
            .iter()
            .map(|wi| wi + scale * r.sample::<f64, _>(StandardNormal))
            .collect();
        let b = model.intercept + scale * r.sample::<f64, _>(StandardNormal);
        if problem.objective(&w, b) < best {
            beaten += 1;
        }
    }
    outcome(
        worst < 1e-6 && beaten == 0 && model.converged,
        format!("max relative gradient error {worst:.2e} (tol 1e-6) over 20 points; {beaten}/100 probes below the fitted objective"),
    )
}

// ---- svm ----

fn sign_labels(y: &[u8]) -> Vec<f64> {
    y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect()
}

fn random_svm_instance(r: &mut ChaCha20Rng, n: usize) -> (DMatrix<f64>, Vec<u8>) {
    let d = r.random_range(2..=5usize);
    let x = gaussian_matrix(r, n, d);
    let mut y: Vec<u8> = (0..n).map(|i| u8::from(x[(i, 0)] + 0.8 * r.sample::<f64, _>(StandardNormal) > 0.0)).collect();
    y[0] = 1;
    y[1] = 0;
    (x, y)
}

/// KKT gap recomputed from scratch: max over I_up of −y_i∇_i minus min over
/// I_low of −y_i∇_i.
fn kkt_gap(gram: &DMatrix<f64>, y: &[f64], bounds: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for i in 0..n {
        let grad: f64 = (0..n).map(|j| y[i] * y[j] * gram[(i, j)] * alpha[j]).sum::<f64>() - 1.0;
        let v = -y[i] * grad;
        let at_zero = alpha[i] <= 0.0;
        let at_cap = alpha[i] >= bounds[i];
        if (y[i] > 0.0 && !at_cap) || (y[i] < 0.0 && !at_zero) {
            up = up.max(v);
        }
        if (y[i] > 0.0 && !at_zero) || (y[i] < 0.0 && !at_cap) {
            low = low.min(v);
        }
    }
    up - low
}

fn dual_objective(gram: &DMatrix<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * gram[(i, j)];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto {0 ≤ a ≤ C, yᵀa = 0} by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: &[f64]) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .zip(c)
            .map(|((vi, yi), ci)| (vi - lambda * yi).clamp(0.0, *ci))
            .collect()
    };
    let balance = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // balance is non-increasing in lambda
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

fn qp_oracle(gram: &DMatrix<f64>, y: &[f64], c: &[f64]) -> f64 {
    let n = y.len();
    let lipschitz = (0..n)
        .map(|i| (0..n).map(|j| gram[(i, j)].abs()).sum::<f64>())
        .fold(1e-12, f64::max);
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; n];
    let mut prev = a.clone();
    // accelerated projected gradient ascent on the concave dual
    for k in 0..200_000 {
        let momentum = k as f64 / (k as f64 + 3.0);
        let z: Vec<f64> = a.iter().zip(&prev).map(|(ai, pi)| ai + momentum * (ai - pi)).collect();
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| y[i] * y[j] * gram[(i, j)] * z[j]).sum::<f64>())
            .collect();
        let v: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi + step * gi).collect();
        prev = std::mem::replace(&mut a, project(&v, y, c));
    }
    dual_objective(gram, y, &a)
}

fn crit_svm() -> Outcome {
    let mut r = rng(303);
    let mut kkt_fail = 0;
    let mut worst_gap = 0.0f64;
    for inst in 0..50 {
        let n = r.random_range(4..=40usize);
        let (x, y) = random_svm_instance(&mut r, n);
        let kernel = if inst % 2 == 0 { KernelKind::Linear } else { KernelKind::Rbf };
        let c = 10f64.powf(r.random_range(-1.0..2.0));
        let gamma = svm::scale_gamma(&x);
        let signs = sign_labels(&y);
        let gram = svm::gram_matrix(&x, kernel, gamma);
        let bounds = svm::class_bounds(&y, c, ClassWeight::None);
        let sol = svm::solve_dual(&gram, &signs, &bounds, svm::DEFAULT_TOL, 10_000_000).expect("dual");
        let gap = kkt_gap(&gram, &signs, &bounds, &sol.alphas);
        let feasible = sol
            .alphas
            .iter()
            .zip(&bounds)
            .all(|(a, cap)| *a >= 0.0 && *a <= *cap)
            && sol.alphas.iter().zip(&signs).map(|(a, s)| a * s).sum::<f64>().abs() < 1e-9;
        let model = svm::fit_svm(&x, &y, &SvmParams { gamma: Some(gamma), ..SvmParams::new(c, kernel) }).expect("fit");
        worst_gap = worst_gap.max(gap);
        if gap > svm::DEFAULT_TOL || !feasible || !model.converged || model.max_violation > svm::DEFAULT_TOL {
            kkt_fail += 1;
        }
    }

    let mut worst_dual = 0.0f64;
    for _ in 0..20 {
        let n = r.random_range(2..=6usize);
        let (x, y) = random_svm_instance(&mut r, n);
        let kernel = if r.random_bool(0.5) { KernelKind::Linear } else { KernelKind::Rbf };
        let c = 10f64.powf(r.random_range(-1.0..1.0));
        let gamma = svm::scale_gamma(&x);
        let model = svm::fit_svm(&x, &y, &SvmParams { gamma: Some(gamma), ..SvmParams::new(c, kernel) }).expect("fit");
        let gram = svm::gram_matrix(&x, kernel, gamma);
        let signs = sign_labels(&y);
        let oracle = qp_oracle(&gram, &signs, &svm::class_bounds(&y, c, ClassWeight::None));
        worst_dual = worst_dual.max((model.dual_objective - oracle).abs());
    }

    let xor = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0]);
    let xor_y = [0u8, 0, 1, 1];
    let xor_model = svm::fit_svm(&xor, &xor_y, &SvmParams::new(10.0, KernelKind::Rbf)).expect("xor");
    let xor_acc = xor_model
        .predict(&xor)
        .expect("predict")
        .iter()
        .zip(&xor_y)
        .filter(|(p, t)| p == t)
        .count() as f64
        / 4.0;

    outcome(
        kkt_fail == 0 && worst_dual <= 1e-4 && xor_acc == 1.0,
        format!(
            "KKT failures {kkt_fail}/50 (worst gap {worst_gap:.2e}, tol {}); worst dual gap to QP oracle {worst_dual:.2e} (tol 1e-4); XOR accuracy {xor_acc}",
            svm::DEFAULT_TOL
        ),
    )
}

// ---- truncated svd ----

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn crit_svd() -> Outcome {
    let mut r = rng(404);
    let mut worst = 0.0f64;
    let mut shapes = vec![(50, 30), (30, 50), (2, 2), (50, 1), (1, 30)];
    for _ in 0..15 {
        shapes.push((r.random_range(2..=50), r.random_range(2..=30)));
    }
    for &(n, d) in &shapes {
        let x = gaussian_matrix(&mut r, n, d) * 3.0;
        let k = n.min(d);
        let f = dimred::fit_truncated_svd(&x, k, SvdParams::default(), 9).expect("svd");
        let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
        let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let ev = jacobi_eigenvalues(xc.transpose() * &xc);
        for (s, e) in f.singular_values.iter().zip(&ev) {
            worst = worst.max((s - e.max(0.0).sqrt()).abs());
        }
    }

    let mut monotone_fail = 0;
    for trial in 0..10 {
        let (n, d) = (20 + trial * 3, 12 + trial);
        let low_rank = gaussian_matrix(&mut r, n, 4) * gaussian_matrix(&mut r, 4, d);
        let x = low_rank + gaussian_matrix(&mut r, n, d) * 0.3;
        let mut prev = f64::INFINITY;
        for k in 1..=n.min(d) {
            let f = dimred::fit_truncated_svd(&x, k, SvdParams::default(), 17).expect("svd");
            let err = dimred::reconstruction_error(&f, &x).expect("error");
            if err > prev {
                monotone_fail += 1;
            }
            prev = err;
        }
    }
    outcome(
        worst <= 1e-6 && monotone_fail == 0,
        format!(
            "max singular value deviation from Jacobi oracle {worst:.2e} over {} matrices (tol 1e-6); {monotone_fail} increases of reconstruction error in k",
            shapes.len()
        ),
    )
}

// ---- stratification ----

fn crit_stratification() -> Outcome {
    let k = 7;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let ds = corpus::synth_dataset(seed, 3244, DEFAULT_POSITIVE_RATES).expect("synth");
        let labels = ds.labels().expect("labels");
        let plan = tuning::stratified_kfold(&labels, k, seed).expect("plan");
        let mut counts = [[0usize; 7]; 8];
        for (l, &f) in labels.iter().zip(&plan.assignment) {
            counts[l.combination()][f] += 1;
        }
        for row in &counts {
            let total: usize = row.iter().sum();
            for &c in row {
                worst = worst.max((c as f64 - total as f64 / k as f64).abs());
            }
        }
    }
    outcome(
        worst <= 1.0,
        format!("100 plans, n=3244, K=7: worst per-fold deviation from proportional count {worst:.3} (tol 1)"),
    )
}

// ---- end to end ----

struct E2eRun {
    elapsed: Duration,
    metrics: MetricsReport,
    root: PathBuf,
}

fn config(seed: u64, out: &Path, threads: usize, separation: f64, rates: [f64; 3]) -> RunConfig {
    RunConfig {
        seed: Some(seed),
        paths: PathConfig {
            output_dir: Some(out.to_path_buf()),
            ..Default::default()
        },
        folds: 7,
        recipe: Recipe::Submission1,
        trials: 10,
        threads: Some(threads),
        synth: SynthConfig {
            n: 700,
            positive_rates: rates,
            class_separation: separation,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn run_e2e(root: &Path, threads: usize, separation: f64, rates: [f64; 3]) -> E2eRun {
    let seed = 20_240_517;
    let train = root.join("train");
    let test = root.join("test");
    let run = root.join("run");
    let start = Instant::now();
    let step = |cfg: &RunConfig, f: fn(&RunConfig) -> commentclf::Result<workflow::Report>| {
        workflow::with_threads(cfg.threads, || f(cfg)).expect("workflow step");
    };

    step(&config(seed, &train, threads, separation, rates), workflow::cmd_synth);
    step(&config(seed + 1, &test, threads, separation, rates), workflow::cmd_synth);
    for dir in [&train, &test] {
        let mut cfg = config(seed, dir, threads, separation, rates);
        cfg.paths.dataset = Some(dir.join(workflow::DATASET_FILE));
        step(&cfg, workflow::cmd_features);
    }
    let with_inputs = |dir: &Path| {
        let mut cfg = config(seed, &run, threads, separation, rates);
        cfg.paths.dataset = Some(dir.join(workflow::DATASET_FILE));
        cfg.paths.semantic = Some(dir.join(workflow::SEMANTIC_FILE));
        cfg.paths.style = Some(dir.join(workflow::STYLE_FILE));
        cfg.paths.numeric_features = Some(dir.join(workflow::FEATURES_LOG_FILE));
        cfg
    };
    step(&with_inputs(&train), workflow::cmd_tune);
    step(&with_inputs(&train), workflow::cmd_train);
    step(&with_inputs(&test), workflow::cmd_predict);
    step(&with_inputs(&test), workflow::cmd_evaluate);
    let elapsed = start.elapsed();

    let text = std::fs::read_to_string(run.join(workflow::METRICS_FILE)).expect("metrics");
    E2eRun {
        elapsed,
        metrics: serde_json::from_str(&text).expect("metrics json"),
        root: root.to_path_buf(),
    }
}

fn f1s(m: &MetricsReport) -> Vec<f64> {
    m.subtasks.iter().map(|s| s.f1 / 100.0).collect()
}

fn crit_e2e(separable: &E2eRun, noise: &E2eRun) -> Outcome {
    let sep = f1s(&separable.metrics);
    let none = f1s(&noise.metrics);
    let pass = sep.iter().all(|&f| f >= 0.95)
        && separable.elapsed < Duration::from_secs(120)
        && none.iter().all(|&f| (0.40..=0.60).contains(&f));
    outcome(
        pass,
        format!(
            "separation 5: macro-F1 {:.4?} in {:.1}s (need >= 0.95, < 120s); separation 0: macro-F1 {:.4?} (need [0.40, 0.60])",
            sep,
            separable.elapsed.as_secs_f64(),
            none
        ),
    )
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("read dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("prefix").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("read"));
            }
        }
    }
    out
}

fn crit_determinism(a: &E2eRun, b: &E2eRun) -> Outcome {
    let ta = read_tree(&a.root);
    let tb = read_tree(&b.root);
    let differing: Vec<String> = ta
        .keys()
        .chain(tb.keys())
        .filter(|k| ta.get(*k) != tb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && ta.len() >= 15,
        format!(
            "{} artifacts compared between 1-thread and 4-thread runs; differing: {:?}",
            ta.len(),
            differing
        ),
    )
}

// ---- recipes ----

fn small_assembly(n: usize, seed: u64) -> FeatureAssembly {
    let ds = corpus::synth_dataset(seed, n, [0.4, 0.4, 0.4]).expect("synth");
    let sem = commentclf::embed_io::synth_embeddings(seed, &ds, 24, 4.0).expect("semantic");
    let sty = commentclf::embed_io::synth_embeddings(seed + 1, &ds, 6, 4.0).expect("style");
    let stop = commentclf::features::StopwordSet::default();
    let numeric = ds
        .comments()
        .iter()
        .map(|c| (c.id.clone(), commentclf::features::extract_numeric(&c.text, &stop, None, None)))
        .collect();
    commentclf::embed_io::assemble_any_width(&ds, &sem, &sty, &numeric).expect("assemble")
}

fn crit_recipes() -> Outcome {
    let a = small_assembly(280, 5);
    let plan = tuning::stratified_kfold(a.labels.as_deref().expect("labels"), 7, 3).expect("plan");
    let fold_wise: Vec<FoldBest> = (0..7)
        .map(|fold| FoldBest {
            fold,
            params: FoldParams { c: 1.0, svd_k: 12 },
            objective: 1.0,
        })
        .collect();
    let task_wise: Vec<TaskBest> = Subtask::ALL
        .iter()
        .map(|&subtask| TaskBest {
            subtask,
            params: TaskParams {
                kernel: KernelKind::Rbf,
                c: 1.0,
                class_weight: ClassWeight::Balanced,
                gamma: 0.05,
            },
            objective: 1.0,
        })
        .collect();
    let mut counts = Vec::new();
    let mut pass = true;
    for recipe in [Recipe::Submission1, Recipe::Submission2, Recipe::Submission3] {
        let tuned = TuningOutcome {
            recipe,
            fold_wise: fold_wise.clone(),
            task_wise: recipe.uses_svm().then(|| task_wise.clone()),
        };
        let pipelines = ensemble::train_recipe(&a, recipe, &plan, &tuned, &SolverSettings::default(), 11).expect("train");
        let want = if recipe.uses_svm() { 14 } else { 7 };
        for p in &pipelines {
            let task_scoped = p.members.iter().filter(|m| m.tuning_scope == TuningScope::TaskWise).count();
            pass &= p.members.len() == want && task_scoped == if recipe.uses_svm() { 7 } else { 0 };
            counts.push(format!("{:?}/{}={}", recipe, p.subtask, p.members.len()));
        }
    }
    outcome(pass, counts.join(" "))
}

// ---- kde ----

fn crit_kde() -> Outcome {
    let mut r = rng(505);
    let samples: Vec<f64> = (0..400).map(|_| r.random::<f64>()).collect();
    let h = metrics::DEFAULT_KDE_BANDWIDTH;
    let queries: Vec<f64> = (0..1000).map(|_| r.random_range(-0.5..1.5)).collect();
    let got = metrics::kde_gaussian(&samples, h, &queries).expect("kde");
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let worst = queries
        .iter()
        .zip(&got)
        .map(|(q, g)| {
            let oracle = samples.iter().rev().map(|s| pdf((q - s) / h) / h).sum::<f64>() / samples.len() as f64;
            (g - oracle).abs()
        })
        .fold(0.0f64, f64::max);

    let (lo, hi) = (-1.0, 2.0);
    let steps = 30_000;
    let grid: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let dens = metrics::kde_gaussian(&samples, h, &grid).expect("kde");
    let dx = (hi - lo) / steps as f64;
    let integral: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
    outcome(
        worst <= 1e-12 && (integral - 1.0).abs() <= 1e-3,
        format!("max deviation from closed form {worst:.2e} at 1000 points (tol 1e-12); trapezoid integral {integral:.6}"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("calibration matches brute-force oracle", crit_calibration_oracle()),
        ("ECE <= MCE and confidence range", crit_ece_below_mce()),
        ("logistic gradient and optimality", crit_logreg_gradient()),
        ("svm KKT, dual optimum and XOR", crit_svm()),
        ("truncated svd spectrum and monotone error", crit_svd()),
        ("joint-label stratification", crit_stratification()),
        ("recipe member counts", crit_recipes()),
        ("gaussian kde closed form and mass", crit_kde()),
    ];

    let base = tempfile::tempdir().expect("tempdir");
    let separable = run_e2e(&base.path().join("sep5_t1"), 1, 5.0, DEFAULT_POSITIVE_RATES);
    let repeat = run_e2e(&base.path().join("sep5_t4"), 4, 5.0, DEFAULT_POSITIVE_RATES);
    let noise = run_e2e(&base.path().join("sep0"), 4, 0.0, DEFAULT_POSITIVE_RATES);
    results.push(("end-to-end synthetic workflow", crit_e2e(&separable, &noise)));
    results.push(("byte-identical artifacts across thread counts", crit_determinism(&separable, &repeat)));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
