//! Hierarchical complete-linkage clustering of predictors on correlation
//! distance.
//!
//! Variables that move together (large absolute correlation) land in the
//! same block; the pipeline later orthogonalizes blocks against each other
//! and reduces each block separately.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SymMatrix;

/// A partition of variable indices into `c` non-empty clusters.
///
/// `labels[v]` is the cluster id of variable `v`; ids are assigned by
/// ascending smallest member index. `order` lists the ids in processing
/// order: decreasing cluster size, ties broken by smallest member index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub order: Vec<usize>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    /// Member variable indices of one cluster, ascending.
    pub fn members(&self, id: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&v| self.labels[v] == id)
            .collect()
    }

    /// Clusters as index lists, following `order`.
    pub fn blocks_in_order(&self) -> Vec<Vec<usize>> {
        self.order.iter().map(|&id| self.members(id)).collect()
    }
}

/// One agglomeration step. Ids follow the usual dendrogram convention:
/// leaves are `0..N`, the cluster created at step `s` gets id `N + s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeStep {
    pub step: usize,
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

/// Converts a correlation matrix into the dissimilarity `1 - |r|`.
pub fn dissimilarity_matrix(r: &SymMatrix) -> Result<SymMatrix> {
    let n = r.n();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = r.values()[[i, j]];
            if v.abs() > 1.0 + 1e-12 {
                return Err(Error::Domain(format!(
                    "correlation entry ({i}, {j}) = {v} outside [-1, 1]"
                )));
            }
            d[[i, j]] = if i == j {
                0.0
            } else {
                (1.0 - v.abs()).max(0.0)
            };
        }
    }
    Ok(SymMatrix::new_unchecked(d))
}

struct Agglomeration {
    clusters: Vec<Vec<usize>>,
    merges: Vec<MergeStep>,
}

/// Complete-linkage agglomeration down to `target` clusters.
///
/// At every step the pair with minimal linkage (maximum pairwise
/// dissimilarity between members) merges; ties are broken by the
/// lexicographically smallest pair of lowest member indices.
fn agglomerate(d: &SymMatrix, target: usize) -> Result<Agglomeration> {
    let n = d.n();
    for i in 0..n {
        for j in 0..n {
            let v = d.values()[[i, j]];
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "dissimilarity entry ({i}, {j}) = {v} invalid"
                )));
            }
        }
        if d.values()[[i, i]] != 0.0 {
            return Err(Error::Domain(format!("dissimilarity diagonal {i} nonzero")));
        }
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut link: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| d.values()[[i, j]]).collect())
        .collect();
    let mut merges = Vec::new();
    let mut step = 0;
    while clusters.len() > target {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let dist = link[a][b];
                let lo = clusters[a][0].min(clusters[b][0]);
                let hi = clusters[a][0].max(clusters[b][0]);
                let better = match &best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => {
                        dist < *bd || (dist == *bd && (lo, hi) < (*blo, *bhi))
                    }
                };
                if better {
                    best = Some((dist, lo, hi, a, b));
                }
            }
        }
        let (height, _, _, a, b) = best.expect("at least two clusters remain");
        merges.push(MergeStep {
            step,
            left: ids[a].min(ids[b]),
            right: ids[a].max(ids[b]),
            height,
        });
        let absorbed = clusters.remove(b);
        let absorbed_link: Vec<f64> = link.remove(b);
        for r in link.iter_mut() {
            r.remove(b);
        }
        ids.remove(b);
        clusters[a].extend(absorbed);
        clusters[a].sort_unstable();
        ids[a] = n + step;
        for k in 0..clusters.len() {
            if k != a {
                let merged = link[a][k].max(absorbed_link[if k < b { k } else { k + 1 }]);
                link[a][k] = merged;
                link[k][a] = merged;
            }
        }
        step += 1;
    }
    Ok(Agglomeration { clusters, merges })
}

/// Cuts the complete-linkage dendrogram at exactly `c` clusters.
pub fn complete_linkage_cluster(d: &SymMatrix, c: usize) -> Result<ClusterAssignment> {
    let n = d.n();
    if c < 1 || c > n {
        return Err(Error::Domain(format!(
            "cluster count {c} outside [1, {n}]"
        )));
    }
    let mut agg = agglomerate(d, c)?;
    // ids by ascending smallest member
    agg.clusters.sort_by_key(|m| m[0]);
    let mut labels = vec![0usize; n];
    for (id, members) in agg.clusters.iter().enumerate() {
        for &v in members {
            labels[v] = id;
        }
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by_key(|&id| (usize::MAX - agg.clusters[id].len(), agg.clusters[id][0]));
    Ok(ClusterAssignment {
        labels,
        order,
        n_clusters: c,
    })
}

/// Full merge list of the complete-linkage dendrogram (N-1 steps).
pub fn complete_linkage_dendrogram(d: &SymMatrix) -> Result<Vec<MergeStep>> {
    Ok(agglomerate(d, 1)?.merges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn toy_dissimilarity() -> SymMatrix {
        // |corr|: (0,1)=0.95, (2,3)=0.90, cross pairs <= 0.05
        let r = array![
            [1.0, 0.95, 0.02, 0.05],
            [0.95, 1.0, 0.03, 0.01],
            [0.02, 0.03, 1.0, 0.90],
            [0.05, 0.01, 0.90, 1.0]
        ];
        dissimilarity_matrix(&SymMatrix::new(r).unwrap()).unwrap()
    }

    #[test]
    fn dissimilarity_values() {
        let r = SymMatrix::new(array![[1.0, -1.0, 0.9], [-1.0, 1.0, 0.0], [0.9, 0.0, 1.0]])
            .unwrap();
        let d = dissimilarity_matrix(&r).unwrap();
        assert_eq!(d.values()[[0, 1]], 0.0);
        assert!((d.values()[[0, 2]] - 0.1).abs() <= 1e-12);
        assert_eq!(d.values()[[1, 2]], 1.0);
        assert_eq!(d.values()[[0, 0]], 0.0);
        let bad = SymMatrix::new(array![[1.0, 1.5], [1.5, 1.0]]).unwrap();
        assert!(dissimilarity_matrix(&bad).is_err());
    }

    #[test]
    fn trivial_cuts() {
        let d = toy_dissimilarity();
        let all = complete_linkage_cluster(&d, 4).unwrap();
        assert_eq!(all.labels, vec![0, 1, 2, 3]);
        let one = complete_linkage_cluster(&d, 1).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        assert!(complete_linkage_cluster(&d, 5).is_err());
        assert!(complete_linkage_cluster(&d, 0).is_err());
    }

    #[test]
    fn two_block_structure_recovered() {
        let d = toy_dissimilarity();
        let a = complete_linkage_cluster(&d, 2).unwrap();
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[2], a.labels[3]);
        assert_ne!(a.labels[0], a.labels[2]);
        // equal sizes: order ties broken by smallest member
        assert_eq!(a.order, vec![0, 1]);
    }

    #[test]
    fn merge_heights_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let n = rng.gen_range(3..12);
            let mut m = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = rng.gen_range(0.0..1.0);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            let d = SymMatrix::new_unchecked(m);
            let merges = complete_linkage_dendrogram(&d).unwrap();
            assert_eq!(merges.len(), n - 1);
            for w in merges.windows(2) {
                assert!(w[1].height >= w[0].height - 1e-12);
            }
        }
    }

    #[test]
    fn order_prefers_larger_blocks() {
        // variables 0..2 tight, 3..4 tight, 5 alone
        let mut m = Array2::from_elem((6, 6), 0.9);
        for i in 0..6 {
            m[[i, i]] = 0.0;
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2), (3, 4)] {
            m[[i, j]] = 0.05;
            m[[j, i]] = 0.05;
        }
        let d = SymMatrix::new_unchecked(m);
        let a = complete_linkage_cluster(&d, 3).unwrap();
        let blocks = a.blocks_in_order();
        assert_eq!(blocks[0], vec![0, 1, 2]);
        assert_eq!(blocks[1], vec![3, 4]);
        assert_eq!(blocks[2], vec![5]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn random_dissimilarity(n: usize, seed: u64) -> SymMatrix {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = rand::Rng::gen_range(&mut rng, 0.0..1.0);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            SymMatrix::new_unchecked(m)
        }

        proptest! {
            #[test]
            fn partition_invariant_under_permutation(seed in 0u64..100, c in 1usize..5) {
                let n = 7;
                let c = c.min(n);
                let d = random_dissimilarity(n, seed);
                let base = complete_linkage_cluster(&d, c).unwrap();

                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let mut pm = Array2::<f64>::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        pm[[i, j]] = d.values()[[perm[i], perm[j]]];
                    }
                }
                let permuted = complete_linkage_cluster(&SymMatrix::new_unchecked(pm), c).unwrap();

                // compare as sets of sets, mapped back through the permutation
                let canon = |labels: &[usize], map: &dyn Fn(usize) -> usize| {
                    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); c];
                    for (v, &l) in labels.iter().enumerate() {
                        groups[l].push(map(v));
                    }
                    for g in groups.iter_mut() {
                        g.sort_unstable();
                    }
                    groups.sort();
                    groups
                };
                let a = canon(&base.labels, &|v| v);
                let b = canon(&permuted.labels, &|v| perm[v]);
                prop_assert_eq!(a, b);
            }

            #[test]
            fn sizes_sum_to_n(seed in 0u64..100, c in 1usize..8) {
                let n = 8;
                let d = random_dissimilarity(n, seed);
                let a = complete_linkage_cluster(&d, c).unwrap();
                let blocks = a.blocks_in_order();
                prop_assert_eq!(blocks.iter().map(|b| b.len()).sum::<usize>(), n);
                prop_assert!(blocks.iter().all(|b| !b.is_empty()));
                for w in blocks.windows(2) {
                    prop_assert!(w[0].len() >= w[1].len());
                }
            }
        }
    }
}
