//! Randomized truncated SVD and column standardization.
//!
//! The SVD uses a Gaussian range finder with oversampling and subspace (power)
//! iterations, then an exact SVD of the small projected matrix. The random
//! test matrix is filled column by column, so the sketch for rank `k` is a
//! prefix of the sketch for rank `k + 1` under the same seed.
//!
//! All products go through nalgebra's single-threaded kernels; results are
//! bitwise reproducible for a given input, seed and build.

use nalgebra::{DMatrix, SVD};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_OVERSAMPLE: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvdParams {
    pub oversample: usize,
    pub power_iters: usize,
}

impl Default for SvdParams {
    fn default() -> Self {
        Self {
            oversample: DEFAULT_OVERSAMPLE,
            power_iters: DEFAULT_POWER_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `k × d`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    pub train_mean: Vec<f64>,
}

impl SvdFactors {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }
}

fn check_finite(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % x.nrows(), pos / x.nrows());
        return Err(Error::invalid(format!(
            "{what}: non-finite entry at row {r}, column {c}"
        )));
    }
    Ok(())
}

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.iter().sum::<f64>() / n).collect()
}

fn centered(x: &DMatrix<f64>, mean: &[f64]) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

pub fn fit_truncated_svd(x: &DMatrix<f64>, k: usize, params: SvdParams, seed: u64) -> Result<SvdFactors> {
    let (n, d) = x.shape();
    let max_rank = n.min(d);
    if k == 0 || k > max_rank {
        return Err(Error::invalid(format!(
            "svd rank {k} outside 1..={max_rank} for a {n}x{d} matrix"
        )));
    }
    check_finite(x, "svd input")?;

    let mean = column_means(x);
    let xc = centered(x, &mean);
    let sketch = (k + params.oversample).min(max_rank);

    let mut rng = rng::rng_from_seed(seed);
    let mut omega = DMatrix::<f64>::zeros(d, sketch);
    for j in 0..sketch {
        for i in 0..d {
            omega[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }

    let mut q = orthonormal_basis(&xc * &omega);
    for _ in 0..params.power_iters {
        let z = orthonormal_basis(xc.transpose() * &q);
        q = orthonormal_basis(&xc * &z);
    }
    let b = q.transpose() * &xc;

    let svd = SVD::new(b, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::invalid("svd of the projected matrix did not produce V"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let mut components = DMatrix::zeros(k, d);
    let mut singular_values = Vec::with_capacity(k);
    for (r, &src) in order.iter().take(k).enumerate() {
        let row = v_t.row(src);
        // sign convention: largest-magnitude entry positive
        let pivot = row
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (j, &v)| if v.abs() > best.1 { (j, v.abs()) } else { best })
            .0;
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(r, j)] = sign * row[j];
        }
        singular_values.push(svd.singular_values[src].max(0.0));
    }

    Ok(SvdFactors {
        components,
        singular_values,
        train_mean: mean,
    })
}

/// `(X − train_mean) · componentsᵀ`.
pub fn svd_transform(f: &SvdFactors, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != f.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: f.input_dim(),
            found: x.ncols(),
        });
    }
    Ok(centered(x, &f.train_mean) * f.components.transpose())
}

/// Frobenius norm of the part of the centered `x` not captured by the factors.
pub fn reconstruction_error(f: &SvdFactors, x: &DMatrix<f64>) -> Result<f64> {
    let scores = svd_transform(f, x)?;
    let approx = scores * &f.components;
    Ok((centered(x, &f.train_mean) - approx).norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizerStats {
    pub means: Vec<f64>,
    /// Population standard deviations; exactly 0 for constant columns.
    pub stds: Vec<f64>,
}

impl StandardizerStats {
    pub fn degenerate_columns(&self) -> Vec<usize> {
        self.stds
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

pub fn fit_standardizer(x: &DMatrix<f64>) -> Result<StandardizerStats> {
    if x.nrows() == 0 {
        return Err(Error::invalid("standardizer needs at least one row"));
    }
    check_finite(x, "standardizer input")?;
    let n = x.nrows() as f64;
    let means = column_means(x);
    let stds = x
        .column_iter()
        .zip(&means)
        .map(|(col, &m)| {
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            // summation noise on a constant column is not variance
            if s <= 1e-12 * m.abs().max(1.0) {
                0.0
            } else {
                s
            }
        })
        .collect();
    Ok(StandardizerStats { means, stds })
}

pub fn standardize(stats: &StandardizerStats, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != stats.means.len() {
        return Err(Error::DimensionMismatch {
            expected: stats.means.len(),
            found: x.ncols(),
        });
    }
    check_finite(x, "standardize input")?;
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (m, s) = (stats.means[j], stats.stds[j]);
        if s == 0.0 {
            col.fill(0.0);
        } else {
            col.apply(|v| *v = (*v - m) / s);
        }
    }
    Ok(out)
}
