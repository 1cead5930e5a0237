use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fragment::{enumerate_fragmentations, DEFAULT_MAX_HEAVY_ATOMS};
use crate::chem::Molecule;

/// Two dataset rows sharing a constant core and differing in one variable
/// fragment. Stored with `frag_a < frag_b`; `delta_p = P(mol_a) - P(mol_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub core: String,
    pub frag_a: String,
    pub frag_b: String,
    pub mol_a: usize,
    pub mol_b: usize,
    pub delta_p: f64,
}

impl MatchedPair {
    /// Orients a pair so the lexicographically smaller fragment comes first.
    pub fn oriented(
        core: &str,
        (frag_x, row_x, p_x): (&str, usize, f64),
        (frag_y, row_y, p_y): (&str, usize, f64),
    ) -> MatchedPair {
        let ((fa, ra, pa), (fb, rb, pb)) = if frag_x < frag_y {
            ((frag_x, row_x, p_x), (frag_y, row_y, p_y))
        } else {
            ((frag_y, row_y, p_y), (frag_x, row_x, p_x))
        };
        MatchedPair {
            core: core.to_string(),
            frag_a: fa.to_string(),
            frag_b: fb.to_string(),
            mol_a: ra,
            mol_b: rb,
            delta_p: pa - pb,
        }
    }

    fn sort_key(&self) -> (&str, &str, &str, usize, usize) {
        (&self.core, &self.frag_a, &self.frag_b, self.mol_a, self.mol_b)
    }
}

/// Distinct `(core, variable)` cuts of each row.
pub fn row_cuts(molecules: &[&Molecule], max_heavy_atoms: usize) -> Vec<BTreeSet<(String, String)>> {
    molecules
        .par_iter()
        .map(|m| {
            enumerate_fragmentations(m, max_heavy_atoms)
                .into_iter()
                .map(|f| (f.core, f.variable))
                .collect()
        })
        .collect()
}

/// Sorts and removes duplicate `(core, frag_a, frag_b, mol_a, mol_b)` tuples.
pub fn sort_pairs(pairs: &mut Vec<MatchedPair>) {
    pairs.sort_by(|x, y| x.sort_key().cmp(&y.sort_key()));
    pairs.dedup_by(|x, y| x.sort_key() == y.sort_key());
}

/// Matched pairs over a dataset, indexed by shared core.
pub fn extract_matched_pairs(dataset: &[(Molecule, f64)]) -> Vec<MatchedPair> {
    let mols: Vec<&Molecule> = dataset.iter().map(|(m, _)| m).collect();
    let cuts = row_cuts(&mols, DEFAULT_MAX_HEAVY_ATOMS);
    pairs_from_cuts(&cuts, &dataset.iter().map(|(_, p)| *p).collect::<Vec<_>>())
}

/// Pair extraction from precomputed cuts; `props[i]` belongs to `cuts[i]`.
pub fn pairs_from_cuts(cuts: &[BTreeSet<(String, String)>], props: &[f64]) -> Vec<MatchedPair> {
    let mut by_core: BTreeMap<&str, Vec<(&str, usize)>> = BTreeMap::new();
    for (row, set) in cuts.iter().enumerate() {
        for (core, var) in set {
            by_core.entry(core).or_default().push((var, row));
        }
    }
    let mut pairs = Vec::new();
    for (core, members) in &by_core {
        for (x, &(vx, rx)) in members.iter().enumerate() {
            for &(vy, ry) in &members[x + 1..] {
                if rx == ry || vx == vy {
                    continue;
                }
                pairs.push(MatchedPair::oriented(
                    core,
                    (vx, rx, props[rx]),
                    (vy, ry, props[ry]),
                ));
            }
        }
    }
    sort_pairs(&mut pairs);
    pairs
}
