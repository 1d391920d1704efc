//! Dense linear-algebra primitives and statistical utilities.
//!
//! Everything operates on `f64` and is deterministic: repeated calls on the
//! same input produce bit-identical output, which the fitting pipeline relies
//! on for reproducible refits.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance below which a projected column counts as rank deficient.
pub const RANK_TOL: f64 = 1e-8;

/// An observation matrix: rows are time points, columns are named variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataMatrix {
    values: Array2<f64>,
    column_names: Vec<String>,
}

impl DataMatrix {
    /// Builds a matrix after validating shape and finiteness.
    pub fn new(values: Array2<f64>, column_names: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::Domain("need at least 1 column".into()));
        }
        if column_names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                got: column_names.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite entry in data matrix".into()));
        }
        Ok(Self {
            values,
            column_names,
        })
    }

    /// Builds a matrix with synthesized column names `x1..xN`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(values, names)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }
}

/// A real symmetric matrix, validated on construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymMatrix {
    values: Array2<f64>,
}

impl SymMatrix {
    /// Validates squareness and symmetry to relative tolerance 1e-12.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                got: values.ncols(),
            });
        }
        for i in 0..values.nrows() {
            for j in (i + 1)..values.ncols() {
                let a = values[[i, j]];
                let b = values[[j, i]];
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::Domain(format!(
                        "matrix not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    /// Wraps a matrix that is symmetric by construction.
    pub(crate) fn new_unchecked(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.values.diag().sum()
    }
}

/// Eigenvalues (descending) paired with eigenvector columns.
///
/// `sym_eigen` returns unit-norm vectors; `generalized_eigen` normalizes in
/// the metric of its right-hand matrix instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

/// Per-column means and standard deviations recorded by `standardize`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardizationParams {
    /// Standardizes new observations with the stored means and deviations.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.means[j]) / self.sds[j]);
        }
        Ok(out)
    }
}

fn column_moments(col: ArrayView1<f64>) -> (f64, f64) {
    let t = col.len() as f64;
    let mean = col.sum() / t;
    let ss = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, (ss / (t - 1.0)).sqrt())
}

/// Centers and scales every column to mean 0 and unit sample variance.
pub fn standardize(x: &DataMatrix) -> Result<(DataMatrix, StandardizationParams)> {
    let (values, params) = standardize_values(x.values().view())?;
    let out = DataMatrix {
        values,
        column_names: x.column_names().to_vec(),
    };
    Ok((out, params))
}

/// `standardize` on a bare array; used on internal intermediates.
pub fn standardize_values(x: ArrayView2<f64>) -> Result<(Array2<f64>, StandardizationParams)> {
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let (mean, sd) = column_moments(col);
        if sd <= 0.0 || !sd.is_finite() {
            return Err(Error::ConstantColumn(j));
        }
        means.push(mean);
        sds.push(sd);
    }
    let params = StandardizationParams { means, sds };
    let out = params.apply(x)?;
    Ok((out, params))
}

/// Unbiased sample covariance (divisor T-1).
pub fn covariance(x: &DataMatrix) -> Result<SymMatrix> {
    covariance_values(x.values().view())
}

/// `covariance` on a bare array.
pub fn covariance_values(x: ArrayView2<f64>) -> Result<SymMatrix> {
    let t = x.nrows();
    if t < 2 {
        return Err(Error::TooFewObservations { need: 2, got: t });
    }
    let n = x.ncols();
    let means: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|c| c.sum() / t as f64)
        .collect();
    let mut centered = x.to_owned();
    for (j, mut col) in centered.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| v - means[j]);
    }
    let mut s = centered.t().dot(&centered);
    s.mapv_inplace(|v| v / (t as f64 - 1.0));
    // enforce exact symmetry against accumulation-order noise
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (s[[i, j]] + s[[j, i]]);
            s[[i, j]] = avg;
            s[[j, i]] = avg;
        }
    }
    Ok(SymMatrix::new_unchecked(s))
}

/// Sample correlation matrix with exact unit diagonal.
pub fn correlation(x: &DataMatrix) -> Result<SymMatrix> {
    correlation_values(x.values().view())
}

/// `correlation` on a bare array.
pub fn correlation_values(x: ArrayView2<f64>) -> Result<SymMatrix> {
    let cov = covariance_values(x)?;
    let n = cov.n();
    let sds: Vec<f64> = (0..n).map(|i| cov.values()[[i, i]].sqrt()).collect();
    if let Some(j) = sds.iter().position(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(Error::ConstantColumn(j));
    }
    let mut r = cov.values().clone();
    for i in 0..n {
        for j in 0..n {
            r[[i, j]] = if i == j {
                1.0
            } else {
                r[[i, j]] / (sds[i] * sds[j])
            };
        }
    }
    Ok(SymMatrix::new_unchecked(r))
}

/// Shrinks a covariance toward a scaled identity with the same trace:
/// `(1 - tau) * S + tau * (tr(S) / N) * I`.
pub fn regularize_covariance(s: &SymMatrix, tau: f64) -> Result<SymMatrix> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0, 1], got {tau}")));
    }
    let n = s.n();
    let mu = s.trace() / n as f64;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let shrunk = (1.0 - tau) * s.values()[[i, j]];
            out[[i, j]] = if i == j { shrunk + tau * mu } else { shrunk };
        }
    }
    Ok(SymMatrix::new_unchecked(out))
}

fn column_norm(col: ArrayView1<f64>) -> f64 {
    col.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Orthonormal basis for the column space of `x` via modified Gram-Schmidt
/// with a re-orthogonalization pass.
///
/// Columns whose post-projection norm falls below `RANK_TOL` times the
/// largest original column norm are dropped, so the result may be thinner
/// than the input.
pub fn qr_orthonormal_basis(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let t = x.nrows();
    let lead = x
        .axis_iter(Axis(1))
        .map(column_norm)
        .fold(0.0_f64, f64::max);
    if lead <= 0.0 {
        return Err(Error::RankZero);
    }
    let tol = RANK_TOL * lead;
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for col in x.axis_iter(Axis(1)) {
        let mut v = col.to_owned();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.scaled_add(-proj, q);
            }
        }
        let norm = column_norm(v.view());
        if norm >= tol {
            basis.push(v / norm);
        }
    }
    if basis.is_empty() {
        return Err(Error::RankZero);
    }
    let mut q = Array2::zeros((t, basis.len()));
    for (j, col) in basis.iter().enumerate() {
        q.column_mut(j).assign(col);
    }
    Ok(q)
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back descending; each eigenvector has unit norm and its
/// largest-magnitude entry is positive (ties broken by the lowest index), so
/// output is deterministic.
pub fn sym_eigen(s: &SymMatrix) -> Result<EigenResult> {
    let n = s.n();
    let mut a = s.values().clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale > 0.0 && n > 1 {
        let target = 1e-14 * scale;
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = {
                let mut acc = 0.0;
                for p in 0..n {
                    for q in (p + 1)..n {
                        acc += 2.0 * a[[p, q]] * a[[p, q]];
                    }
                }
                acc.sqrt()
            };
            if off <= target {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[[p, q]];
                    if apq.abs() <= target / n as f64 {
                        continue;
                    }
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let sn = t * c;
                    let app = a[[p, p]];
                    let aqq = a[[q, q]];
                    a[[p, p]] = app - t * apq;
                    a[[q, q]] = aqq + t * apq;
                    a[[p, q]] = 0.0;
                    a[[q, p]] = 0.0;
                    for i in 0..n {
                        if i != p && i != q {
                            let aip = a[[i, p]];
                            let aiq = a[[i, q]];
                            a[[i, p]] = c * aip - sn * aiq;
                            a[[p, i]] = a[[i, p]];
                            a[[i, q]] = sn * aip + c * aiq;
                            a[[q, i]] = a[[i, q]];
                        }
                    }
                    for i in 0..n {
                        let vip = v[[i, p]];
                        let viq = v[[i, q]];
                        v[[i, p]] = c * vip - sn * viq;
                        v[[i, q]] = sn * vip + c * viq;
                    }
                }
            }
        }
        if !converged {
            // final check: the last sweep may have landed under the target
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += 2.0 * a[[p, q]] * a[[p, q]];
                }
            }
            if off.sqrt() > target {
                return Err(Error::ConvergenceFailure);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut eigenvectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&v.column(src));
    }
    fix_column_signs(&mut eigenvectors);
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Flips each column so its largest-magnitude entry (lowest index on ties)
/// is positive.
pub(crate) fn fix_column_signs(m: &mut Array2<f64>) {
    for mut col in m.axis_iter_mut(Axis(1)) {
        let mut best = 0;
        let mut best_abs = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Solves `A b = nu B b` for symmetric `A` and positive-definite `B` by
/// whitening: eigendecompose `B`, form `B^{-1/2} A B^{-1/2}`, eigendecompose
/// again, and map vectors back. Returned vectors satisfy `bᵀ B b = 1`.
pub fn generalized_eigen(a: &SymMatrix, b: &SymMatrix) -> Result<EigenResult> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.n(),
        });
    }
    let eb = sym_eigen(b)?;
    let max = eb.eigenvalues.first().copied().unwrap_or(0.0);
    let min = eb.eigenvalues.last().copied().unwrap_or(0.0);
    if min <= 1e-12 * max.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite(min / max.max(f64::MIN_POSITIVE)));
    }
    let u = &eb.eigenvectors;
    let mut inv_half = Array2::zeros((n, n));
    for j in 0..n {
        let w = 1.0 / eb.eigenvalues[j].sqrt();
        for i in 0..n {
            inv_half[[i, j]] = u[[i, j]] * w;
        }
    }
    let b_inv_half = inv_half.dot(&u.t());
    let mut c = b_inv_half.dot(a.values()).dot(&b_inv_half);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (c[[i, j]] + c[[j, i]]);
            c[[i, j]] = avg;
            c[[j, i]] = avg;
        }
    }
    let ec = sym_eigen(&SymMatrix::new_unchecked(c))?;
    let mut vectors = b_inv_half.dot(&ec.eigenvectors);
    fix_column_signs(&mut vectors);
    Ok(EigenResult {
        eigenvalues: ec.eigenvalues,
        eigenvectors: vectors,
    })
}

/// Upper-tail probability of the chi-square distribution,
/// `P(X > x)` for `X ~ chi2(df)`.
pub fn chi_square_sf(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("chi-square point must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    Ok(statrs::function::gamma::gamma_ur(df as f64 / 2.0, x / 2.0))
}

/// Lower-triangular Cholesky factor of a positive-definite matrix.
pub(crate) fn cholesky(s: &SymMatrix) -> Result<Array2<f64>> {
    let n = s.n();
    let a = s.values();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::NotPositiveDefinite(acc));
                }
                l[[i, j]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Ok(l)
}
