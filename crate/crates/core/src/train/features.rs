use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{atom_counts, morgan_fingerprint, Element, Molecule};
use crate::error::{Error, Result};
use crate::mmpa::{fragment_counts, RuleSet};
use crate::nn::Mat;
use crate::splits::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    FragmentCounts,
    AtomCounts,
    CountsPlusFingerprint,
}

/// Model input layout: count slots first, then auxiliary fingerprint bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureLayout {
    pub mode: FeatureMode,
    /// Slot names: element symbols for atom counts, fragments otherwise.
    pub slots: Vec<String>,
    #[serde(default)]
    pub fingerprint_bits: usize,
    #[serde(default)]
    pub fingerprint_radius: usize,
}

impl FeatureLayout {
    /// The 12 atom counts, in element slot order.
    pub fn atom_counts() -> Self {
        FeatureLayout {
            mode: FeatureMode::AtomCounts,
            slots: Element::ALL.iter().map(|e| e.symbol().to_string()).collect(),
            fingerprint_bits: 0,
            fingerprint_radius: 0,
        }
    }

    /// Fragment-count slots, in the given order.
    pub fn fragments(slots: Vec<String>) -> Self {
        FeatureLayout {
            mode: FeatureMode::FragmentCounts,
            slots,
            fingerprint_bits: 0,
            fingerprint_radius: 0,
        }
    }

    /// Slots of a rule set, in slot-index order.
    pub fn from_rule_set(rs: &RuleSet) -> Self {
        Self::fragments(rs.slots())
    }

    /// Adds folded Morgan bits after the count slots.
    pub fn with_fingerprint(mut self, nbits: usize, radius: usize) -> Self {
        self.mode = FeatureMode::CountsPlusFingerprint;
        self.fingerprint_bits = nbits;
        self.fingerprint_radius = radius;
        self
    }

    pub fn width(&self) -> usize {
        self.slots.len() + self.fingerprint_bits
    }

    /// Slot name -> column.
    pub fn columns(&self) -> BTreeMap<String, usize> {
        self.slots.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == FeatureMode::AtomCounts && *self != Self::atom_counts() {
            return Err(Error::InvalidArgument("atom-count layout must list the 12 elements".into()));
        }
        if (self.mode == FeatureMode::CountsPlusFingerprint) != (self.fingerprint_bits > 0) {
            return Err(Error::InvalidArgument(
                "fingerprint bits are required exactly for counts_plus_fingerprint".into(),
            ));
        }
        if self.columns().len() != self.slots.len() {
            return Err(Error::InvalidArgument("duplicate slot names".into()));
        }
        Ok(())
    }

    pub fn featurize_molecule(&self, m: &Molecule) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.width());
        match self.mode {
            FeatureMode::AtomCounts => row.extend(atom_counts(m).iter().map(|&c| c as f64)),
            FeatureMode::FragmentCounts | FeatureMode::CountsPlusFingerprint => {
                row.extend(fragment_counts(m, &self.columns()).iter().map(|&c| c as f64))
            }
        }
        if self.fingerprint_bits > 0 {
            let fp = morgan_fingerprint(m, self.fingerprint_radius, self.fingerprint_bits);
            row.extend((0..self.fingerprint_bits).map(|k| if fp.get(k) { 1.0 } else { 0.0 }));
        }
        row
    }

    /// Feature matrix of every dataset row.
    pub fn featurize(&self, ds: &Dataset) -> Mat {
        let rows: Vec<Vec<f64>> = ds.molecules().par_iter().map(|m| self.featurize_molecule(m)).collect();
        let w = self.width();
        Mat::from_shape_vec((rows.len(), w), rows.into_iter().flatten().collect()).expect("rows share width")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_layout_matches_counts() {
        let ds = Dataset::from_pairs("t", [("CCO", 0.0)]).unwrap();
        let x = FeatureLayout::atom_counts().featurize(&ds);
        assert_eq!(x.row(0).to_vec(), vec![6.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn fragment_layout_with_fingerprint() {
        let ds = Dataset::from_pairs("t", [("OCCO", 0.0), ("CC", 0.0)]).unwrap();
        let l = FeatureLayout::fragments(vec!["[*]C".into(), "[*]O".into()]).with_fingerprint(64, 1);
        l.validate().unwrap();
        let x = l.featurize(&ds);
        assert_eq!(x.ncols(), 66);
        assert_eq!((x[[0, 0]], x[[0, 1]]), (0.0, 2.0));
        assert_eq!((x[[1, 0]], x[[1, 1]]), (2.0, 0.0));
        assert!(x.row(0).iter().skip(2).any(|&v| v == 1.0));
    }
}
