use rayon::prelude::*;

use crate::chem::{tanimoto, Fingerprint};
use crate::error::Result;

/// Result of leader clustering. Clusters are listed in creation order; the
/// first member of each is its centroid and the rest are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    pub cluster_of: Vec<usize>,
}

impl Clustering {
    pub fn centroid(&self, c: usize) -> usize {
        self.clusters[c][0]
    }
}

/// Neighbour lists (`Tc >= cutoff`, self excluded) for a set of fingerprints.
pub fn neighbor_lists(fps: &[Fingerprint], cutoff: f64) -> Result<Vec<Vec<usize>>> {
    (0..fps.len())
        .into_par_iter()
        .map(|i| {
            let mut nb = Vec::new();
            for j in 0..fps.len() {
                if j != i && tanimoto(&fps[i], &fps[j])? >= cutoff {
                    nb.push(j);
                }
            }
            Ok(nb)
        })
        .collect()
}

/// Leader clustering on fingerprints at a Tanimoto cutoff.
pub fn butina_cluster(fps: &[Fingerprint], cutoff: f64) -> Result<Clustering> {
    Ok(butina_from_neighbors(&neighbor_lists(fps, cutoff)?))
}

/// Leader clustering over precomputed symmetric neighbour lists: the
/// unassigned item with the most unassigned neighbours (lowest id on ties)
/// becomes a centroid and absorbs those neighbours, until none remain.
pub fn butina_from_neighbors(neighbors: &[Vec<usize>]) -> Clustering {
    let n = neighbors.len();
    let mut open: Vec<usize> = neighbors.iter().map(|v| v.len()).collect();
    let mut assigned = vec![false; n];
    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters = Vec::new();
    let mut left = n;
    while left > 0 {
        let mut best = usize::MAX;
        for i in 0..n {
            if !assigned[i] && (best == usize::MAX || open[i] > open[best]) {
                best = i;
            }
        }
        let mut members = vec![best];
        let mut rest: Vec<usize> = neighbors[best]
            .iter()
            .copied()
            .filter(|&j| !assigned[j])
            .collect();
        rest.sort_unstable();
        members.extend(rest);
        for &m in &members {
            assigned[m] = true;
            cluster_of[m] = clusters.len();
            for &k in &neighbors[m] {
                open[k] -= 1;
            }
        }
        left -= members.len();
        clusters.push(members);
    }
    Clustering {
        clusters,
        cluster_of,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_sims(n: usize, sims: &[(usize, usize, f64)], cutoff: f64) -> Clustering {
        let mut nb = vec![Vec::new(); n];
        for &(a, b, s) in sims {
            if s >= cutoff {
                nb[a].push(b);
                nb[b].push(a);
            }
        }
        butina_from_neighbors(&nb)
    }

    #[test]
    fn star_collapses_to_one_cluster() {
        let c = from_sims(3, &[(0, 1, 0.8), (0, 2, 0.8), (1, 2, 0.2)], 0.7);
        assert_eq!(c.clusters, vec![vec![0, 1, 2]]);
        assert_eq!(c.centroid(0), 0);
    }

    #[test]
    fn dissimilar_items_are_singletons() {
        let c = from_sims(4, &[(0, 1, 0.1), (2, 3, 0.3)], 0.7);
        assert_eq!(c.clusters, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn duplicates_co_cluster() {
        let fp = Fingerprint::from_bits(64, [1, 5, 9]);
        let other = Fingerprint::from_bits(64, [30, 31]);
        let c = butina_cluster(&[fp.clone(), other, fp], 0.7).unwrap();
        assert_eq!(c.cluster_of[0], c.cluster_of[2]);
        assert_ne!(c.cluster_of[0], c.cluster_of[1]);
    }

    #[test]
    fn members_are_within_cutoff_of_centroid() {
        let fps: Vec<Fingerprint> = (0..40)
            .map(|i| Fingerprint::from_bits(64, (i % 7..i % 7 + 6).chain([i % 3 + 50])))
            .collect();
        let c = butina_cluster(&fps, 0.5).unwrap();
        for cl in &c.clusters {
            for &m in &cl[1..] {
                assert!(tanimoto(&fps[cl[0]], &fps[m]).unwrap() >= 0.5);
            }
        }
        let total: usize = c.clusters.iter().map(Vec::len).sum();
        assert_eq!(total, 40);
    }
}
