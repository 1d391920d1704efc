//! One pass of regularized sliced inverse regression.
//!
//! The response is sorted and cut into equal-count slices; the covariance of
//! the slice means of the predictors is solved against the (optionally
//! shrunk) predictor covariance as a generalized eigenproblem. Leading
//! eigenvectors are the estimated dimension-reducing directions, and a
//! sequential chi-square test picks how many of them carry signal.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    chi_square_sf, covariance_values, generalized_eigen, regularize_covariance, SymMatrix,
};

/// Partition of the observations into response-ordered slices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceSpec {
    /// Response value closing each slice except the last (H-1 cut points).
    pub boundaries: Vec<f64>,
    /// Slice id of every observation, in input order.
    pub membership: Vec<usize>,
    /// Slice sizes divided by T; sums to 1.
    pub proportions: Vec<f64>,
}

impl SliceSpec {
    pub fn n_slices(&self) -> usize {
        self.proportions.len()
    }
}

/// Estimated dimension-reducing directions from one SIR pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdrBasis {
    /// p-by-k matrix; column j is the j-th direction, normalized so that
    /// `dᵀ Σ(τ) d = 1` against the shrunk covariance used in the fit.
    pub directions: Array2<f64>,
    /// All min(p, H-1) eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Selected number of directions, `1 <= k <= min(p, H-1)`.
    pub k: usize,
}

/// Sorts the response and cuts it into `h` contiguous groups whose sizes
/// differ by at most one (earlier slices take the remainder). Ties keep
/// their original order (stable sort).
pub fn make_slices(y: &[f64], h: usize) -> Result<SliceSpec> {
    let t = y.len();
    if h == 0 {
        return Err(Error::Domain("slice count must be positive".into()));
    }
    if t < 2 * h {
        return Err(Error::TooFewObservations { need: 2 * h, got: t });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("response contains non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&i, &j| y[i].partial_cmp(&y[j]).unwrap());
    let base = t / h;
    let extra = t % h;
    let mut membership = vec![0usize; t];
    let mut boundaries = Vec::with_capacity(h - 1);
    let mut proportions = Vec::with_capacity(h);
    let mut pos = 0;
    for s in 0..h {
        let size = base + usize::from(s < extra);
        for &idx in &order[pos..pos + size] {
            membership[idx] = s;
        }
        pos += size;
        proportions.push(size as f64 / t as f64);
        if s + 1 < h {
            boundaries.push(y[order[pos - 1]]);
        }
    }
    Ok(SliceSpec {
        boundaries,
        membership,
        proportions,
    })
}

/// Covariance of the within-slice means: `Σ_h p_h m_h m_hᵀ`.
///
/// Expects columns that are already centered; for centered data the result
/// is positive semidefinite with rank at most H-1.
pub fn slice_mean_covariance(x: ArrayView2<f64>, s: &SliceSpec) -> Result<SymMatrix> {
    let t = x.nrows();
    if s.membership.len() != t {
        return Err(Error::LengthMismatch(s.membership.len(), t));
    }
    let n = x.ncols();
    let h = s.n_slices();
    let mut sums = Array2::<f64>::zeros((h, n));
    let mut counts = vec![0usize; h];
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let slice = s.membership[i];
        counts[slice] += 1;
        for j in 0..n {
            sums[[slice, j]] += row[j];
        }
    }
    let mut m = Array2::<f64>::zeros((n, n));
    for slice in 0..h {
        if counts[slice] == 0 {
            continue;
        }
        let p = s.proportions[slice];
        let mean: Vec<f64> = (0..n).map(|j| sums[[slice, j]] / counts[slice] as f64).collect();
        for a in 0..n {
            for b in a..n {
                let v = p * mean[a] * mean[b];
                m[[a, b]] += v;
                if a != b {
                    m[[b, a]] += v;
                }
            }
        }
    }
    Ok(SymMatrix::new_unchecked(m))
}

/// Sequential chi-square rank test on SIR eigenvalues.
///
/// Walks k = 0, 1, ... testing "the trailing eigenvalues are noise" with the
/// statistic `T * Σ_{j>k} ν̂_j` against chi-square with `(p-k)(H-k-1)`
/// degrees of freedom; returns the first accepted k, floored at 1 because
/// downstream pooling needs at least one direction. Rejecting every step
/// returns the eigenvalue count.
pub fn select_dimension(
    eigenvalues: &[f64],
    t: usize,
    p: usize,
    h: usize,
    alpha: f64,
) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let l = eigenvalues.len();
    if l == 0 {
        return Err(Error::Domain("no eigenvalues to test".into()));
    }
    for k in 0..l {
        let df = p.saturating_sub(k) * h.saturating_sub(k + 1);
        if df == 0 {
            return Ok(k.max(1));
        }
        let tail: f64 = eigenvalues[k..].iter().map(|&v| v.max(0.0)).sum();
        let stat = t as f64 * tail;
        if chi_square_sf(stat, df)? >= alpha {
            return Ok(k.max(1));
        }
    }
    Ok(l)
}

/// One regularized SIR pass over standardized (or at least centered,
/// comparably scaled) predictors.
pub fn sir_fit(x: ArrayView2<f64>, y: &[f64], h: usize, tau: f64, alpha: f64) -> Result<EdrBasis> {
    let t = x.nrows();
    let p = x.ncols();
    if y.len() != t {
        return Err(Error::LengthMismatch(y.len(), t));
    }
    let slices = make_slices(y, h)?;
    let means: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / t as f64).collect();
    let mut centered = x.to_owned();
    for (j, mut col) in centered.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| v - means[j]);
    }
    let m = slice_mean_covariance(centered.view(), &slices)?;
    let cov = covariance_values(centered.view())?;
    let b = regularize_covariance(&cov, tau)?;
    let eig = generalized_eigen(&m, &b)?;
    let l = p.min(h - 1);
    let eigenvalues: Vec<f64> = eig.eigenvalues[..l].to_vec();
    let k = select_dimension(&eigenvalues, t, p, h, alpha)?;
    let directions = eig.eigenvectors.slice(ndarray::s![.., ..k]).to_owned();
    Ok(EdrBasis {
        directions,
        eigenvalues,
        k,
    })
}
