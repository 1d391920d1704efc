//! Benchmark forecasters: direct autoregressive regression and a
//! five-factor principal-component diffusion model.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{correlation_values, standardize_values, sym_eigen, RANK_TOL};

/// Minimum usable design rows for the direct forecasting regressions.
pub const MIN_FORECAST_ROWS: usize = 30;

/// A fitted linear prediction rule: intercept plus one slope per regressor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearForecaster {
    /// Intercept first, then slopes in design-column order.
    pub coefficients: Vec<f64>,
    /// Human-readable description of the regressors.
    pub design_spec: String,
}

impl LinearForecaster {
    /// Evaluates the rule at one regressor vector.
    pub fn predict(&self, regressors: &[f64]) -> Result<f64> {
        if regressors.len() + 1 != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len() - 1,
                got: regressors.len(),
            });
        }
        Ok(self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(regressors)
                .map(|(c, r)| c * r)
                .sum::<f64>())
    }
}

/// A direct h-step forecast plus a flag marking that the regression was
/// rank deficient and the fit dropped collinear regressors (down to the
/// sample mean in the worst case).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectForecast {
    pub value: f64,
    pub used_fallback: bool,
}

fn solve_normal_equations(design: &Array2<f64>, target: &[f64]) -> Result<Vec<f64>> {
    let xtx = crate::numerics::SymMatrix::new_unchecked({
        let mut m = design.t().dot(design);
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
                m[[i, j]] = avg;
                m[[j, i]] = avg;
            }
        }
        m
    });
    let eig = sym_eigen(&xtx)?;
    let max = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let min = eig.eigenvalues.last().copied().unwrap_or(0.0);
    if max <= 0.0 || min <= 1e-12 * max {
        return Err(Error::RankDeficient);
    }
    let y = Array1::from(target.to_vec());
    let xty = design.t().dot(&y);
    let rotated = eig.eigenvectors.t().dot(&xty);
    let scaled: Array1<f64> = rotated
        .iter()
        .zip(eig.eigenvalues.iter())
        .map(|(v, l)| v / l)
        .collect();
    Ok(eig.eigenvectors.dot(&scaled).to_vec())
}

/// Ordinary least squares of `target` on `design` plus an intercept added
/// internally.
pub fn ols(design: ArrayView2<f64>, target: &[f64]) -> Result<LinearForecaster> {
    let t = design.nrows();
    let p = design.ncols();
    if target.len() != t {
        return Err(Error::LengthMismatch(target.len(), t));
    }
    if t < p + 2 {
        return Err(Error::RankDeficient);
    }
    let mut full = Array2::ones((t, p + 1));
    full.slice_mut(ndarray::s![.., 1..]).assign(&design);
    let coefficients = solve_normal_equations(&full, target)?;
    Ok(LinearForecaster {
        coefficients,
        design_spec: format!("intercept + {p} regressors"),
    })
}

/// Least squares that survives collinearity by greedily dropping dependent
/// columns (intercept always kept). Dropped columns get slope 0. Returns the
/// forecaster and whether anything was dropped.
pub(crate) fn ols_rank_guarded(
    design: &Array2<f64>,
    target: &[f64],
    spec: &str,
) -> Result<(LinearForecaster, bool)> {
    let t = design.nrows();
    let p = design.ncols();
    let mut full = Array2::ones((t, p + 1));
    full.slice_mut(ndarray::s![.., 1..]).assign(design);
    // greedy numerical-rank scan via Gram-Schmidt residual norms
    let lead = full
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c).sqrt())
        .fold(0.0_f64, f64::max);
    let tol = RANK_TOL * lead;
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for (j, col) in full.axis_iter(Axis(1)).enumerate() {
        let mut v = col.to_owned();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.scaled_add(-proj, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm >= tol {
            basis.push(v / norm);
            kept.push(j);
        }
    }
    let dropped = kept.len() < p + 1;
    let mut reduced = Array2::zeros((t, kept.len()));
    for (dst, &src) in kept.iter().enumerate() {
        reduced.column_mut(dst).assign(&full.column(src));
    }
    let coef = solve_normal_equations(&reduced, target)?;
    let mut coefficients = vec![0.0; p + 1];
    for (dst, &src) in kept.iter().enumerate() {
        coefficients[src] = coef[dst];
    }
    Ok((
        LinearForecaster {
            coefficients,
            design_spec: spec.to_string(),
        },
        dropped,
    ))
}

fn direct_forecast(
    design: &Array2<f64>,
    target: &[f64],
    eval_row: &[f64],
    spec: &str,
) -> Result<DirectForecast> {
    match ols(design.view(), target) {
        Ok(fit) => Ok(DirectForecast {
            value: fit.predict(eval_row)?,
            used_fallback: false,
        }),
        Err(Error::RankDeficient) => {
            let (fit, _) = ols_rank_guarded(design, target, spec)?;
            Ok(DirectForecast {
                value: fit.predict(eval_row)?,
                used_fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

const AR_LAGS: usize = 4;

fn ar_design(y: &[f64], h: usize) -> Result<(Array2<f64>, Vec<f64>, Vec<f64>)> {
    let t = y.len();
    let usable = t.saturating_sub(AR_LAGS - 1 + h);
    if usable < MIN_FORECAST_ROWS {
        return Err(Error::TooShort {
            need: MIN_FORECAST_ROWS,
            got: usable,
        });
    }
    let mut design = Array2::zeros((usable, AR_LAGS));
    let mut target = Vec::with_capacity(usable);
    for (row, t0) in ((AR_LAGS - 1)..(t - h)).enumerate() {
        for lag in 0..AR_LAGS {
            design[[row, lag]] = y[t0 - lag];
        }
        target.push(y[t0 + h]);
    }
    let eval_row: Vec<f64> = (0..AR_LAGS).map(|lag| y[t - 1 - lag]).collect();
    Ok((design, target, eval_row))
}

/// Direct h-step autoregressive forecast: regress `y[t+h]` on an intercept
/// and four own lags over the window, then evaluate at the window end.
pub fn ar4_forecast(y: &[f64], h: usize) -> Result<DirectForecast> {
    if h == 0 {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    let (design, target, eval_row) = ar_design(y, h)?;
    direct_forecast(&design, &target, &eval_row, "intercept + 4 own lags")
}

/// Factor scores: the first `r` principal components of the correlation
/// matrix, ordered by decreasing eigenvalue, each loading signed so its
/// largest-magnitude entry is positive.
pub fn pca_factors(x: ArrayView2<f64>, r: usize) -> Result<Array2<f64>> {
    let (t, n) = (x.nrows(), x.ncols());
    if r == 0 || r > t.min(n) {
        return Err(Error::Domain(format!(
            "factor count {r} outside [1, {}]",
            t.min(n)
        )));
    }
    let corr = correlation_values(x)?;
    let eig = sym_eigen(&corr)?;
    let loadings = eig.eigenvectors.slice(ndarray::s![.., ..r]);
    Ok(x.dot(&loadings))
}

/// Diffusion-index forecast: regress `y[t+h]` on an intercept, four own
/// lags, and the first five principal-component factor scores at `t`.
pub fn dfm5_forecast(x: ArrayView2<f64>, y: &[f64], h: usize) -> Result<DirectForecast> {
    if h == 0 {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    let n = x.ncols();
    if n < 5 {
        return Err(Error::Domain(format!("need at least 5 series, got {n}")));
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    let (xs, _) = standardize_values(x)?;
    let factors = pca_factors(xs.view(), 5)?;
    let (ar, target, ar_eval) = ar_design(y, h)?;
    let rows = ar.nrows();
    let mut design = Array2::zeros((rows, AR_LAGS + 5));
    design.slice_mut(ndarray::s![.., ..AR_LAGS]).assign(&ar);
    for (row, t0) in ((AR_LAGS - 1)..(y.len() - h)).enumerate() {
        for f in 0..5 {
            design[[row, AR_LAGS + f]] = factors[[t0, f]];
        }
    }
    let mut eval_row = ar_eval;
    for f in 0..5 {
        eval_row.push(factors[[y.len() - 1, f]]);
    }
    direct_forecast(
        &design,
        &target,
        &eval_row,
        "intercept + 4 own lags + 5 factors",
    )
}
