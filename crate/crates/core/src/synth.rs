//! A seeded substituent corpus whose target is a linear function of
//! fragment counts plus Gaussian noise, for rule-efficacy experiments.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chem::{canonical_smiles, parse_fragment, parse_smiles};
use crate::error::{Error, Result};
use crate::rng::{Purpose, RandomStream};
use crate::splits::{Dataset, Row};
use crate::train::{FeatureLayout, TrainConfig};

/// Ring or chain templates; `({k})` marks substitution position k.
pub const SCAFFOLDS: [&str; 6] = [
    "c1({0})c({1})c({2})c({3})cc1",
    "n1cc({0})c({1})c({2})c1",
    "C1({0})CC({1})CC({2})C1",
    "s1c({0})cc({1})c1",
    "CC({0})CC({1})CO",
    "C1CC({0})CN({1})C1",
];

/// Substituents and the target weight of their fragment-count slot.
pub const SUBSTITUENTS: [(&str, f64); 11] = [
    ("F", 0.25),
    ("Cl", 0.7),
    ("Br", 0.9),
    ("I", 1.1),
    ("C", 0.5),
    ("CC", 1.0),
    ("O", -0.7),
    ("N", -1.0),
    ("OC", -0.1),
    ("C#N", -0.6),
    ("C(F)(F)F", 0.9),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubstituentCorpusConfig {
    pub n: usize,
    /// Standard deviation of the additive target noise.
    pub noise: f64,
    /// Probability that a position keeps its hydrogen.
    pub h_prob: f64,
    pub seed: u64,
}

impl Default for SubstituentCorpusConfig {
    fn default() -> Self {
        SubstituentCorpusConfig {
            n: 500,
            noise: 0.2,
            h_prob: 0.35,
            seed: 1024,
        }
    }
}

/// Training settings for the small-data experiments on this corpus. With a
/// hundred training molecules few pairs repeat, so rules need only two
/// supporting pairs and may spread up to 0.5.
pub fn efficacy_train_config() -> TrainConfig {
    TrainConfig {
        lambda: 1.0,
        lr: 1e-3,
        std_max: 0.5,
        min_count: 2,
        early_stop_patience: 30,
        ..TrainConfig::default()
    }
}

fn positions(template: &str) -> usize {
    (0..).take_while(|k| template.contains(&format!("({{{k}}})"))).count()
}

/// Distinct molecules whose target is `w . counts + noise`, with `counts`
/// the [`substituent_layout`] features and `w` the substituent weights.
pub fn substituent_corpus(cfg: &SubstituentCorpusConfig) -> Result<Dataset> {
    if !(cfg.noise >= 0.0) || !(0.0..1.0).contains(&cfg.h_prob) {
        return Err(Error::InvalidArgument("noise must be >= 0 and h_prob in [0, 1)".into()));
    }
    let mut rng = RandomStream::new(cfg.seed, Purpose::Synth).rng();
    let normal = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let layout = substituent_layout();
    let mut seen = BTreeSet::new();
    let mut rows = Vec::with_capacity(cfg.n);
    let mut attempts = 0;
    while rows.len() < cfg.n {
        attempts += 1;
        if attempts > 100 * cfg.n.max(10) {
            return Err(Error::Generation(format!("only {} distinct molecules found", rows.len())));
        }
        let template = SCAFFOLDS[rng.random_range(0..SCAFFOLDS.len())];
        let mut smiles = template.to_string();
        for k in 0..positions(template) {
            let slot = format!("({{{k}}})");
            let text = if rng.random::<f64>() < cfg.h_prob {
                String::new()
            } else {
                format!("({})", SUBSTITUENTS[rng.random_range(0..SUBSTITUENTS.len())].0)
            };
            smiles = smiles.replace(&slot, &text);
        }
        let noise = normal.sample(&mut rng);
        let m = parse_smiles(&smiles)?;
        let canon = canonical_smiles(&m);
        if seen.insert(canon.clone()) {
            let x = layout.featurize_molecule(&m);
            let target: f64 = x.iter().zip(&SUBSTITUENTS).map(|(c, (_, w))| c * w).sum();
            rows.push(Row {
                smiles: canon,
                target: target + noise,
            });
        }
    }
    Dataset::from_rows("substituent_synthetic", rows)
}

/// Fragment-count layout over the substituent vocabulary, in table order.
pub fn substituent_layout() -> FeatureLayout {
    FeatureLayout::fragments(
        SUBSTITUENTS
            .iter()
            .map(|(s, _)| canonical_smiles(&parse_fragment(&format!("[*]{s}")).expect("vocabulary parses")))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmpa::enumerate_fragmentations;

    #[test]
    fn corpus_is_seeded_and_distinct() {
        let cfg = SubstituentCorpusConfig {
            n: 60,
            ..Default::default()
        };
        let a = substituent_corpus(&cfg).unwrap();
        assert_eq!(a.sha256(), substituent_corpus(&cfg).unwrap().sha256());
        assert_eq!(a.len(), 60);
        let other = substituent_corpus(&SubstituentCorpusConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a.sha256(), other.sha256());
    }

    #[test]
    fn layout_slots_are_cut_fragments() {
        let l = substituent_layout();
        l.validate().unwrap();
        let m = parse_smiles("Clc1ccc(C#N)cc1").unwrap();
        let vars: BTreeSet<String> = enumerate_fragmentations(&m, 13).into_iter().map(|f| f.variable).collect();
        for s in [&l.slots[1], &l.slots[9]] {
            assert!(vars.contains(s), "{s} not among {vars:?}");
        }
        let x = l.featurize(&Dataset::from_pairs("t", [("Clc1ccc(C#N)cc1", 0.0)]).unwrap());
        assert_eq!(x[[0, 1]], 1.0);
        assert_eq!(x[[0, 9]], 1.0);
    }
}
