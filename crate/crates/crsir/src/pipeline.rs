//! The full cluster-then-reduce pipeline: sequential block
//! orthogonalization, per-block sliced inverse regression, a second
//! reduction across the pooled block variates, and a linear forecast head.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::baselines::{ols, LinearForecaster};
use crate::clustering::{complete_linkage_cluster, dissimilarity_matrix, ClusterAssignment};
use crate::error::{Error, Result};
use crate::numerics::{correlation, standardize, DataMatrix, StandardizationParams, RANK_TOL};
use crate::sir::sir_fit;

/// Relative threshold below which a projected column counts as fully
/// absorbed by earlier blocks and is zeroed out.
const DEGENERACY_TOL: f64 = 1e-8;

/// Predictor blocks after sequential orthogonalization.
///
/// Columns live in a reordered layout: blocks are laid out contiguously,
/// larger blocks first. `reorder[pos]` is the original column index at
/// reordered position `pos`. `weights` is the square replay matrix `O`
/// with `Z = X_reordered . O`, so the identical projection applies to new
/// rows without access to the training sample.
#[derive(Debug, Clone)]
pub struct OrthogonalizedBlocks {
    /// Projected data per block, in processing order.
    pub blocks: Vec<Array2<f64>>,
    /// Orthonormal basis of everything projected out of each block
    /// (empty for the first).
    pub projectors: Vec<Array2<f64>>,
    /// Variable-space replay matrix `O`, reordered layout on both axes.
    pub weights: Array2<f64>,
    /// Original column index per reordered position.
    pub reorder: Vec<usize>,
    /// Per block: which columns were zeroed as numerically absorbed.
    pub degenerate: Vec<Vec<bool>>,
}

/// Projects each block onto the orthogonal complement of all earlier
/// blocks, larger blocks first. Rows are observations of already
/// standardized predictors.
pub fn orthogonalize_blocks(
    x: ArrayView2<f64>,
    assignment: &ClusterAssignment,
) -> Result<OrthogonalizedBlocks> {
    let (t, n) = (x.nrows(), x.ncols());
    if assignment.labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: assignment.labels.len(),
            got: n,
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("non-finite value in predictor matrix".into()));
    }
    let block_members = assignment.blocks_in_order();
    let reorder: Vec<usize> = block_members.iter().flatten().copied().collect();

    let mut xr = Array2::zeros((t, n));
    for (pos, &orig) in reorder.iter().enumerate() {
        xr.column_mut(pos).assign(&x.column(orig));
    }

    let mut weights = Array2::eye(n);
    // each basis vector q satisfies q = xr . w, so data-space subtractions
    // replay exactly as weight-space subtractions
    let mut basis_q: Vec<Array1<f64>> = Vec::new();
    let mut basis_w: Vec<Array1<f64>> = Vec::new();
    let mut blocks = Vec::with_capacity(block_members.len());
    let mut projectors = Vec::with_capacity(block_members.len());
    let mut degenerate = Vec::with_capacity(block_members.len());

    let mut start = 0;
    for members in &block_members {
        let len = members.len();

        let mut q = Array2::zeros((t, basis_q.len()));
        for (j, b) in basis_q.iter().enumerate() {
            q.column_mut(j).assign(b);
        }
        projectors.push(q);

        let mut zb = xr.slice(s![.., start..start + len]).to_owned();
        let mut flags = vec![false; len];
        for (j, flag) in flags.iter_mut().enumerate() {
            let pre = zb.column(j).dot(&zb.column(j)).sqrt();
            for _ in 0..2 {
                for (b, w) in basis_q.iter().zip(&basis_w) {
                    let coeff = b.dot(&zb.column(j));
                    zb.column_mut(j).scaled_add(-coeff, b);
                    weights.column_mut(start + j).scaled_add(-coeff, w);
                }
            }
            let post = zb.column(j).dot(&zb.column(j)).sqrt();
            if pre > 0.0 && post < DEGENERACY_TOL * pre {
                zb.column_mut(j).fill(0.0);
                weights.column_mut(start + j).fill(0.0);
                *flag = true;
            }
        }

        // extend the basis with this block's span for later blocks
        let lead = (0..len)
            .map(|j| zb.column(j).dot(&zb.column(j)).sqrt())
            .fold(0.0_f64, f64::max);
        let tol = RANK_TOL * lead;
        for (j, &flag) in flags.iter().enumerate() {
            if flag {
                continue;
            }
            let mut v = zb.column(j).to_owned();
            let mut wv = weights.column(start + j).to_owned();
            for _ in 0..2 {
                for (b, w) in basis_q.iter().zip(&basis_w) {
                    let coeff = b.dot(&v);
                    v.scaled_add(-coeff, b);
                    wv.scaled_add(-coeff, w);
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm >= tol && norm > 0.0 {
                basis_q.push(v / norm);
                basis_w.push(wv / norm);
            }
        }

        blocks.push(zb);
        degenerate.push(flags);
        start += len;
    }

    Ok(OrthogonalizedBlocks {
        blocks,
        projectors,
        weights,
        reorder,
        degenerate,
    })
}

/// A fitted two-stage model together with everything needed to replay the
/// exact training transformation on new rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrsirModel {
    /// Predictor names in original input order.
    pub column_names: Vec<String>,
    /// Per-column means and standard deviations from the training sample.
    pub standardization: StandardizationParams,
    /// Cluster assignment over original column indices.
    pub assignment: ClusterAssignment,
    /// Original column index per reordered position.
    pub reorder: Vec<usize>,
    /// Variable-space replay matrix `O`, reordered layout.
    pub orthogonalizer: Array2<f64>,
    /// Block-sparse first-stage direction matrix, rows in reordered layout,
    /// one column per retained within-block direction (m total).
    pub lambda: Array2<f64>,
    /// Second-stage directions over the pooled variates, m by v.
    pub gamma: Array2<f64>,
    /// Forecast head: intercept plus one slope per final variate.
    pub head: LinearForecaster,
    /// Shrinkage weight used at both stages.
    pub tau: f64,
    /// Number of clusters requested.
    pub c: usize,
    /// Number of slices used at both stages.
    pub h_slices: usize,
    /// Significance level of the dimension tests.
    pub alpha: f64,
    /// Retained directions per block, processing order.
    pub block_dims: Vec<usize>,
    /// All second-stage eigenvalues, descending.
    pub stage2_eigenvalues: Vec<f64>,
}

/// Fits the full pipeline: standardize, cluster on the correlation
/// structure, orthogonalize blocks sequentially, reduce each block with
/// sliced inverse regression, reduce the pooled variates once more, and
/// close with a least-squares head.
pub fn crsir_fit(
    x: &DataMatrix,
    y: &[f64],
    c: usize,
    tau: f64,
    h: usize,
    alpha: f64,
) -> Result<CrsirModel> {
    let t = x.n_rows();
    let n = x.n_cols();
    if y.len() != t {
        return Err(Error::LengthMismatch(y.len(), t));
    }
    if c < 1 || c > n {
        return Err(Error::Domain(format!("cluster count {c} outside [1, {n}]")));
    }
    if t < 2 * h {
        return Err(Error::TooFewObservations { need: 2 * h, got: t });
    }

    let (xs, standardization) = standardize(x)?;
    let corr = correlation(x)?;
    let dissim = dissimilarity_matrix(&corr)?;
    let assignment = complete_linkage_cluster(&dissim, c)?;
    let ortho = orthogonalize_blocks(xs.values().view(), &assignment)?;

    let mut thetas: Vec<Array2<f64>> = Vec::with_capacity(ortho.blocks.len());
    let mut block_dims = Vec::with_capacity(ortho.blocks.len());
    for (bi, zb) in ortho.blocks.iter().enumerate() {
        let width = zb.ncols();
        if width == 1 {
            // singleton cluster: direction pinned at 1, no dimension test
            let mut theta = Array2::zeros((1, 1));
            if ortho.degenerate[bi][0] {
                thetas.push(Array2::zeros((1, 0)));
                block_dims.push(0);
            } else {
                theta[[0, 0]] = 1.0;
                thetas.push(theta);
                block_dims.push(1);
            }
            continue;
        }
        let live: Vec<usize> = (0..width).filter(|&j| !ortho.degenerate[bi][j]).collect();
        if live.is_empty() {
            thetas.push(Array2::zeros((width, 0)));
            block_dims.push(0);
            continue;
        }
        let mut zl = Array2::zeros((t, live.len()));
        for (dst, &src) in live.iter().enumerate() {
            zl.column_mut(dst).assign(&zb.column(src));
        }
        let fit = sir_fit(zl.view(), y, h, tau, alpha)?;
        let mut theta = Array2::zeros((width, fit.k));
        for (dst, &src) in live.iter().enumerate() {
            for col in 0..fit.k {
                theta[[src, col]] = fit.directions[[dst, col]];
            }
        }
        thetas.push(theta);
        block_dims.push(fit.k);
    }

    let m: usize = block_dims.iter().sum();
    if m == 0 {
        return Err(Error::RankZero);
    }
    let mut lambda = Array2::zeros((n, m));
    let mut row0 = 0;
    let mut col0 = 0;
    for theta in &thetas {
        let (rows, cols) = (theta.nrows(), theta.ncols());
        lambda
            .slice_mut(s![row0..row0 + rows, col0..col0 + cols])
            .assign(theta);
        row0 += rows;
        col0 += cols;
    }

    let mut z = Array2::zeros((t, n));
    let mut start = 0;
    for zb in &ortho.blocks {
        z.slice_mut(s![.., start..start + zb.ncols()]).assign(zb);
        start += zb.ncols();
    }
    let pooled = z.dot(&lambda);

    let stage2 = sir_fit(pooled.view(), y, h, tau, alpha)?;
    let mut v_used = stage2.k;
    let head = loop {
        let variates = pooled.dot(&stage2.directions.slice(s![.., ..v_used]));
        match ols(variates.view(), y) {
            Ok(fit) => break fit,
            Err(Error::RankDeficient) => {
                if v_used == 1 {
                    return Err(Error::SingularHead);
                }
                v_used -= 1;
            }
            Err(e) => return Err(e),
        }
    };
    let gamma = stage2.directions.slice(s![.., ..v_used]).to_owned();

    Ok(CrsirModel {
        column_names: x.column_names().to_vec(),
        standardization,
        assignment,
        reorder: ortho.reorder,
        orthogonalizer: ortho.weights,
        lambda,
        gamma,
        head,
        tau,
        c,
        h_slices: h,
        alpha,
        block_dims,
        stage2_eigenvalues: stage2.eigenvalues,
    })
}

impl CrsirModel {
    /// Total first-stage variates.
    pub fn n_variates(&self) -> usize {
        self.lambda.ncols()
    }

    /// Final feature count fed to the head.
    pub fn n_features(&self) -> usize {
        self.gamma.ncols()
    }

    /// Replays standardization, column reordering, orthogonalization, and
    /// both reductions on new rows, yielding the final features.
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = self.column_names.len();
        if x.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.ncols(),
            });
        }
        let xs = self.standardization.apply(x)?;
        let mut xr = Array2::zeros((x.nrows(), n));
        for (pos, &orig) in self.reorder.iter().enumerate() {
            xr.column_mut(pos).assign(&xs.column(orig));
        }
        Ok(xr.dot(&self.orthogonalizer).dot(&self.lambda).dot(&self.gamma))
    }

    /// Point forecasts for each row.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let features = self.transform(x)?;
        features
            .rows()
            .into_iter()
            .map(|row| self.head.predict(row.as_slice().unwrap()))
            .collect()
    }

    /// The end-to-end linear map from standardized predictors (original
    /// column order) to final features, one column per feature.
    pub fn composite_directions(&self) -> Array2<f64> {
        let composed = self.orthogonalizer.dot(&self.lambda).dot(&self.gamma);
        let mut out = Array2::zeros(composed.dim());
        for (pos, &orig) in self.reorder.iter().enumerate() {
            out.row_mut(orig).assign(&composed.row(pos));
        }
        out
    }

    /// Writes the model as a versioned JSON artifact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let artifact = ModelArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            model: self.clone(),
        };
        let body = serde_json::to_string_pretty(&artifact)
            .map_err(|e| Error::Artifact(e.to_string()))?;
        fs::write(path, body)?;
        Ok(())
    }

    /// Reads a model artifact back, rejecting unknown formats or versions.
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)?;
        let artifact: ModelArtifact =
            serde_json::from_str(&body).map_err(|e| Error::Artifact(e.to_string()))?;
        if artifact.format != ARTIFACT_FORMAT {
            return Err(Error::Artifact(format!(
                "unknown artifact format {:?}",
                artifact.format
            )));
        }
        if artifact.version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported artifact version {}",
                artifact.version
            )));
        }
        Ok(artifact.model)
    }
}

const ARTIFACT_FORMAT: &str = "crsir-model";
const ARTIFACT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelArtifact {
    format: String,
    version: u32,
    model: CrsirModel,
}

/// `CrsirModel::transform` as a free function.
pub fn crsir_transform(model: &CrsirModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    model.transform(x)
}

/// `CrsirModel::predict` as a free function.
pub fn crsir_predict(model: &CrsirModel, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    model.predict(x)
}
