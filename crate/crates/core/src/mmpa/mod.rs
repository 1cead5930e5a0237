//! Matched molecular pair analysis with single acyclic cuts, rule
//! aggregation and filtering, and substructure-count features.

mod fragment;
pub mod io;
mod pairs;
mod rules;

use std::collections::BTreeMap;

pub use fragment::{enumerate_fragmentations, Fragmentation, DEFAULT_MAX_HEAVY_ATOMS};
pub use io::{load_rules, read_rules, rules_to_string, save_rules, write_rules};
pub use pairs::{extract_matched_pairs, pairs_from_cuts, row_cuts, sort_pairs, MatchedPair};
pub use rules::{
    aggregate_rules, element_rules, filter_rules, mean_std, Provenance, Rule, RuleSet, RuleSource,
    DEFAULT_MIN_COUNT, DEFAULT_STD_MAX,
};

use crate::chem::Molecule;

/// Counts, per slot fragment, the cuts of `m` whose variable part equals it.
pub fn fragment_counts(m: &Molecule, slots: &BTreeMap<String, usize>) -> Vec<u32> {
    let mut out = vec![0u32; slots.len()];
    if slots.is_empty() {
        return out;
    }
    for f in enumerate_fragmentations(m, DEFAULT_MAX_HEAVY_ATOMS) {
        if let Some(&i) = slots.get(&f.variable) {
            out[i] += 1;
        }
    }
    out
}

/// Substructure-count vector over a rule set's fragment slots.
pub fn fragment_count_vector(m: &Molecule, rs: &RuleSet) -> Vec<u32> {
    fragment_counts(m, &rs.fragment_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn slots(frags: &[&str]) -> BTreeMap<String, usize> {
        frags
            .iter()
            .enumerate()
            .map(|(i, f)| (f.to_string(), i))
            .collect()
    }

    #[test]
    fn diol_has_two_hydroxyls() {
        let s = slots(&["[*]O", "[*]N"]);
        assert_eq!(fragment_counts(&parse_smiles("OCCO").unwrap(), &s), vec![2, 0]);
        assert_eq!(fragment_counts(&parse_smiles("CCC").unwrap(), &s), vec![0, 0]);
    }

    #[test]
    fn counts_ignore_smiles_spelling() {
        let s = slots(&["[*]O", "[*]C", "[*]CC"]);
        assert_eq!(
            fragment_counts(&parse_smiles("OCC").unwrap(), &s),
            fragment_counts(&parse_smiles("CCO").unwrap(), &s)
        );
    }
}
