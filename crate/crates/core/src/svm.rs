//! Binary soft-margin SVM trained with SMO.
//!
//! The dual is solved in the usual form `min ½αᵀQα − eᵀα` subject to
//! `0 ≤ α_i ≤ C_i` and `yᵀα = 0`, with `Q_ij = y_i y_j K(x_i, x_j)`. Each
//! step updates the maximal violating pair (first-order selection, ties to the
//! lowest index), so training is fully deterministic. Training stops once the
//! KKT gap `m(α) − M(α)` is at most `tol`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    None,
    Balanced,
}

pub fn kernel_eval(kernel: KernelKind, gamma: f64, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.len(),
        });
    }
    Ok(kernel_unchecked(kernel, gamma, x, z))
}

fn kernel_unchecked(kernel: KernelKind, gamma: f64, x: &[f64], z: &[f64]) -> f64 {
    match kernel {
        KernelKind::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
        KernelKind::Rbf => {
            let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            (-gamma * d2).exp()
        }
    }
}

/// `1 / (d · var(X))` over all entries; 1 when the input has no variance.
pub fn scale_gamma(x: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.ncols() as f64 * var)
    } else {
        1.0
    }
}

/// Per-sample upper bounds `C_i`; balanced weighting uses `C·n / (2·n_class)`.
pub fn class_bounds(y: &[u8], c: f64, weight: ClassWeight) -> Vec<f64> {
    match weight {
        ClassWeight::None => vec![c; y.len()],
        ClassWeight::Balanced => {
            let n = y.len() as f64;
            let pos = y.iter().filter(|&&v| v == 1).count() as f64;
            let neg = n - pos;
            y.iter()
                .map(|&v| c * n / (2.0 * if v == 1 { pos } else { neg }))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelKind,
    /// `None` selects [`scale_gamma`] of the training data.
    pub gamma: Option<f64>,
    pub class_weight: ClassWeight,
    pub tol: f64,
    /// Budget in sweeps of `n` pair updates; `None` means `10·n` sweeps.
    pub max_passes: Option<usize>,
}

impl SvmParams {
    pub fn new(c: f64, kernel: KernelKind) -> Self {
        Self {
            c,
            kernel,
            gamma: None,
            class_weight: ClassWeight::None,
            tol: DEFAULT_TOL,
            max_passes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: DMatrix<f64>,
    pub alphas: Vec<f64>,
    /// ±1 per support vector.
    pub labels: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelKind,
    pub gamma: f64,
    pub c: f64,
    pub class_weight: ClassWeight,
    pub converged: bool,
    /// KKT gap `m(α) − M(α)` at termination.
    pub max_violation: f64,
    pub iterations: usize,
    pub dual_objective: f64,
}

/// Solution of the dual on a precomputed kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// One multiplier per training point.
    pub alphas: Vec<f64>,
    /// Offset; the decision function is `Σ α_i y_i K(x_i, x) − rho`.
    pub rho: f64,
    pub violation: f64,
    pub iterations: usize,
    pub dual_objective: f64,
}

/// Dual objective in maximization form, `Σα − ½αᵀQα`, from the gradient.
fn dual_value(alphas: &[f64], grad: &[f64]) -> f64 {
    alphas
        .iter()
        .zip(grad)
        .map(|(a, g)| a - 0.5 * a * (g + 1.0))
        .sum()
}

/// Core SMO loop on a precomputed kernel matrix. `observe` sees the dual
/// objective after every accepted pair update.
pub(crate) fn smo_solve(
    gram: &DMatrix<f64>,
    y: &[f64],
    bounds: &[f64],
    tol: f64,
    max_iter: usize,
    mut observe: Option<&mut dyn FnMut(f64)>,
) -> DualSolution {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * gram[(i, j)];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64, ci: f64| (yi > 0.0 && a < ci) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64, ci: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < ci);

    let mut iterations = 0;
    let mut violation;
    loop {
        let mut i = usize::MAX;
        let mut m_up = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t], bounds[t]) && v > m_up {
                m_up = v;
                i = t;
            }
            if in_low(alpha[t], y[t], bounds[t]) && v < m_low {
                m_low = v;
                j = t;
            }
        }
        violation = if i == usize::MAX || j == usize::MAX {
            0.0
        } else {
            m_up - m_low
        };
        if violation <= tol || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (ci, cj) = (bounds[i], bounds[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
        if let Some(f) = observe.as_deref_mut() {
            f(dual_value(&alpha, &grad));
        }
    }

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= bounds[t];
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };

    DualSolution {
        dual_objective: dual_value(&alpha, &grad),
        alphas: alpha,
        rho,
        violation,
        iterations,
    }
}

/// Solves the dual for labels `y` in {-1, +1} and per-sample bounds.
/// `max_iter` counts pair updates.
pub fn solve_dual(gram: &DMatrix<f64>, y: &[f64], bounds: &[f64], tol: f64, max_iter: usize) -> Result<DualSolution> {
    let n = y.len();
    if gram.nrows() != n || gram.ncols() != n || bounds.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if gram.nrows() != n { gram.nrows() } else { bounds.len() },
        });
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid("dual labels must be -1 or +1"));
    }
    if bounds.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::invalid("box bounds must be positive and finite"));
    }
    Ok(smo_solve(gram, y, bounds, tol, max_iter, None))
}

pub fn gram_matrix(x: &DMatrix<f64>, kernel: KernelKind, gamma: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let dots = x * x.transpose();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let k = match kernel {
                KernelKind::Linear => dots[(i, j)],
                KernelKind::Rbf if i == j => 1.0,
                KernelKind::Rbf => {
                    let sq = (dots[(i, i)] + dots[(j, j)] - 2.0 * dots[(i, j)]).max(0.0);
                    (-gamma * sq).exp()
                }
            };
            g[(i, j)] = k;
            g[(j, i)] = k;
        }
    }
    g
}

pub fn fit_svm(x: &DMatrix<f64>, y: &[u8], params: &SvmParams) -> Result<SvmModel> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive and finite, got {}", params.c)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("svm input contains non-finite values"));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass {
            context: "svm".into(),
        });
    }
    let gamma = match params.gamma {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => return Err(Error::invalid(format!("gamma must be positive, got {g}"))),
        None => scale_gamma(x),
    };

    let signs: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let bounds = class_bounds(y, params.c, params.class_weight);
    let gram = gram_matrix(x, params.kernel, gamma);
    let sweeps = params.max_passes.unwrap_or(10 * n);
    let out = smo_solve(&gram, &signs, &bounds, params.tol, sweeps.saturating_mul(n), None);

    let support: Vec<usize> = (0..n).filter(|&i| out.alphas[i] > 0.0).collect();
    Ok(SvmModel {
        support_vectors: x.select_rows(&support),
        alphas: support.iter().map(|&i| out.alphas[i]).collect(),
        labels: support.iter().map(|&i| signs[i]).collect(),
        bias: -out.rho,
        kernel: params.kernel,
        gamma,
        c: params.c,
        class_weight: params.class_weight,
        converged: out.violation <= params.tol,
        max_violation: out.violation,
        iterations: out.iterations,
        dual_objective: out.dual_objective,
    })
}

impl SvmModel {
    /// `f(x) = Σ α_i y_i K(x_i, x) + bias`, summed in support-vector order.
    pub fn decision(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let d = self.support_vectors.ncols();
        if x.ncols() != d && !self.alphas.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.ncols(),
            });
        }
        let svs: Vec<Vec<f64>> = self
            .support_vectors
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Ok(x
            .row_iter()
            .map(|r| {
                let row: Vec<f64> = r.iter().copied().collect();
                svs.iter()
                    .zip(self.alphas.iter().zip(&self.labels))
                    .map(|(sv, (a, yl))| a * yl * kernel_unchecked(self.kernel, self.gamma, sv, &row))
                    .sum::<f64>()
                    + self.bias
            })
            .collect())
    }

    /// Label 1 iff the decision value is non-negative.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<u8>> {
        Ok(self.decision(x)?.into_iter().map(|f| u8::from(f >= 0.0)).collect())
    }
}
