//! L2-regularized binary logistic regression.
//!
//! Minimizes `½‖w‖² + C·Σ ln(1 + exp(−s_i (w·x_i + b)))` with `s_i ∈ {−1, +1}`
//! and an unregularized intercept. The solver is full-batch damped Newton
//! with Armijo backtracking, started from `w = 0, b = 0`; it stops once the
//! sup-norm of the gradient drops to `tol`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub c: f64,
    pub converged: bool,
    pub final_grad_norm: f64,
    pub iterations: usize,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(−m))` without overflow.
fn log_loss(margin: f64) -> f64 {
    if margin > 0.0 {
        (-margin).exp().ln_1p()
    } else {
        -margin + margin.exp().ln_1p()
    }
}

/// Training data and regularization strength of one fit.
pub struct LogRegProblem<'a> {
    x: &'a DMatrix<f64>,
    signs: Vec<f64>,
    c: f64,
}

impl<'a> LogRegProblem<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &[u8], c: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::invalid("logistic regression needs at least one sample"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive and finite, got {c}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("logistic regression input contains non-finite values"));
        }
        let positives = y.iter().filter(|&&v| v == 1).count();
        if positives == 0 || positives == y.len() {
            return Err(Error::SingleClass {
                context: "logistic regression".into(),
            });
        }
        Ok(Self {
            x,
            signs: y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect(),
            c,
        })
    }

    fn scores(&self, w: &[f64], b: f64) -> DVector<f64> {
        let mut z = self.x * DVector::from_column_slice(w);
        z.add_scalar_mut(b);
        z
    }

    pub fn objective(&self, w: &[f64], b: f64) -> f64 {
        let z = self.scores(w, b);
        let loss: f64 = z.iter().zip(&self.signs).map(|(zi, s)| log_loss(s * zi)).sum();
        0.5 * w.iter().map(|v| v * v).sum::<f64>() + self.c * loss
    }

    /// Gradient with respect to `(w, b)`; the last entry is the intercept.
    pub fn gradient(&self, w: &[f64], b: f64) -> Vec<f64> {
        let z = self.scores(w, b);
        self.gradient_from_scores(w, &z)
    }

    fn gradient_from_scores(&self, w: &[f64], z: &DVector<f64>) -> Vec<f64> {
        // d/dz_i of C·ln(1+exp(−s z)) is −C·s·σ(−s z)
        let r = DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(&self.signs)
                .map(|(zi, s)| -self.c * s * sigmoid(-s * zi)),
        );
        let gw = self.x.tr_mul(&r);
        let mut g: Vec<f64> = w.iter().zip(gw.iter()).map(|(wi, gi)| wi + gi).collect();
        g.push(r.sum());
        g
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (n, d) = self.x.shape();
        let mut scaled = DMatrix::zeros(n, d + 1);
        for i in 0..n {
            let p = sigmoid(z[i]);
            let root = (self.c * p * (1.0 - p)).sqrt();
            for j in 0..d {
                scaled[(i, j)] = root * self.x[(i, j)];
            }
            scaled[(i, d)] = root;
        }
        let mut h = scaled.transpose() * &scaled;
        for j in 0..d {
            h[(j, j)] += 1.0;
        }
        h
    }

    fn newton_direction(&self, z: &DVector<f64>, g: &[f64]) -> Option<DVector<f64>> {
        let h = self.hessian(z);
        let rhs = -DVector::from_column_slice(g);
        let mut ridge = 0.0;
        for _ in 0..12 {
            let mut hr = h.clone();
            if ridge > 0.0 {
                for j in 0..hr.nrows() {
                    hr[(j, j)] += ridge;
                }
            }
            if let Some(ch) = hr.cholesky() {
                return Some(ch.solve(&rhs));
            }
            ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
        }
        None
    }
}

pub fn fit_logreg(x: &DMatrix<f64>, y: &[u8], c: f64, tol: f64, max_iter: usize) -> Result<LogRegModel> {
    let problem = LogRegProblem::new(x, y, c)?;
    let d = x.ncols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut z = problem.scores(&w, b);
    let mut f = problem.objective(&w, b);
    let mut g = problem.gradient_from_scores(&w, &z);
    let sup = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut iterations = 0;

    while sup(&g) > tol && iterations < max_iter {
        iterations += 1;
        let mut dir = match problem.newton_direction(&z, &g) {
            Some(p) => p,
            None => DVector::from_iterator(g.len(), g.iter().map(|v| -v)),
        };
        let mut slope: f64 = dir.iter().zip(&g).map(|(p, gi)| p * gi).sum();
        if slope >= 0.0 {
            dir = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_new: Vec<f64> = w.iter().zip(dir.iter()).map(|(wi, p)| wi + step * p).collect();
            let b_new = b + step * dir[d];
            let f_new = problem.objective(&w_new, b_new);
            if f_new <= f + 1e-4 * step * slope {
                w = w_new;
                b = b_new;
                f = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        z = problem.scores(&w, b);
        g = problem.gradient_from_scores(&w, &z);
        if !accepted {
            // no representable decrease left along the search direction
            break;
        }
    }

    let final_grad_norm = sup(&g);
    Ok(LogRegModel {
        weights: w,
        intercept: b,
        c,
        converged: final_grad_norm <= tol,
        final_grad_norm,
        iterations,
    })
}

impl LogRegModel {
    pub fn decision(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.ncols(),
            });
        }
        Ok(x
            .row_iter()
            .map(|r| r.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
            .collect())
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(self.decision(x)?.into_iter().map(sigmoid).collect())
    }

    /// Label 1 iff the probability is at least 0.5.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<u8>> {
        Ok(self
            .decision(x)?
            .into_iter()
            .map(|z| u8::from(z >= 0.0))
            .collect())
    }
}
