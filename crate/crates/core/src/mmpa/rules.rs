use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::pairs::MatchedPair;
use crate::chem::Element;
use crate::error::{Error, Result};

/// Default retention threshold on a rule's delta standard deviation.
pub const DEFAULT_STD_MAX: f64 = 0.3;
/// Default minimum number of supporting pairs.
pub const DEFAULT_MIN_COUNT: usize = 10;

/// A substructure substitution rule in canonical orientation (`frag_a < frag_b`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub frag_a: String,
    pub frag_b: String,
    /// Mean of `P(with frag_a) - P(with frag_b)`.
    pub delta_mean: f64,
    /// Population standard deviation of the same differences.
    pub delta_std: f64,
    pub count: usize,
}

impl Rule {
    /// The same rule read in the opposite direction.
    pub fn reversed(&self) -> Rule {
        Rule {
            frag_a: self.frag_b.clone(),
            frag_b: self.frag_a.clone(),
            delta_mean: -self.delta_mean,
            delta_std: self.delta_std,
            count: self.count,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.frag_a >= self.frag_b {
            return Err(Error::InvariantViolation(format!(
                "rule {} / {} is not in canonical order",
                self.frag_a, self.frag_b
            )));
        }
        if !self.delta_mean.is_finite() {
            return Err(Error::InvariantViolation("non-finite delta_mean".into()));
        }
        if !(self.delta_std >= 0.0) || !self.delta_std.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "delta_std {} must be finite and non-negative",
                self.delta_std
            )));
        }
        if self.count == 0 {
            return Err(Error::InvariantViolation("rule count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean and population standard deviation, summed in sorted order so the
/// result does not depend on input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    (mean, (sq.iter().sum::<f64>() / n).sqrt())
}

/// Groups pairs by canonical fragment order and aggregates their deltas.
pub fn aggregate_rules(pairs: &[MatchedPair]) -> Vec<Rule> {
    let mut groups: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for p in pairs {
        let (key, d) = if p.frag_a <= p.frag_b {
            ((p.frag_a.as_str(), p.frag_b.as_str()), p.delta_p)
        } else {
            ((p.frag_b.as_str(), p.frag_a.as_str()), -p.delta_p)
        };
        groups.entry(key).or_default().push(d);
    }
    groups
        .into_iter()
        .filter(|((a, b), _)| a != b)
        .map(|((a, b), deltas)| {
            let (mean, std) = mean_std(&deltas);
            Rule {
                frag_a: a.to_string(),
                frag_b: b.to_string(),
                delta_mean: mean,
                delta_std: std,
                count: deltas.len(),
            }
        })
        .collect()
}

/// Where a rule set came from, recorded for reproducibility and the leakage guard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub dataset_sha256: String,
    pub std_max: f64,
    pub min_count: usize,
    /// Keys of every molecule the rules were mined from (see
    /// [`crate::splits::molecule_key`]). `None` when unknown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub molecule_keys: Option<Vec<String>>,
    /// Operator statement that the source data is disjoint from any test set;
    /// only consulted when `molecule_keys` is absent.
    #[serde(default)]
    pub attested_disjoint: bool,
    #[serde(default = "default_origin")]
    pub origin: String,
}

fn default_origin() -> String {
    "mined".into()
}

/// Filtered, ordered rules with the feature slot of every fragment they use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub fragment_index: BTreeMap<String, usize>,
    pub provenance: Provenance,
}

/// Source description passed to [`filter_rules`].
#[derive(Debug, Clone, Default)]
pub struct RuleSource {
    pub dataset_sha256: String,
    pub molecule_keys: Option<Vec<String>>,
}

/// Keeps rules with `delta_std <= std_max` and `count >= min_count`.
/// Returns [`Error::EmptyRuleSet`] when nothing survives.
pub fn filter_rules(rules: &[Rule], std_max: f64, min_count: usize, source: RuleSource) -> Result<RuleSet> {
    if !(std_max > 0.0) || min_count == 0 {
        return Err(Error::InvalidArgument(
            "std_max must be > 0 and min_count >= 1".into(),
        ));
    }
    let mut kept: Vec<Rule> = rules
        .iter()
        .filter(|r| r.delta_std <= std_max && r.count >= min_count)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyRuleSet);
    }
    kept.sort_by(|x, y| (&x.frag_a, &x.frag_b).cmp(&(&y.frag_a, &y.frag_b)));
    let mut keys = source.molecule_keys;
    if let Some(k) = keys.as_mut() {
        k.sort();
        k.dedup();
    }
    let rs = RuleSet::new(
        kept,
        Provenance {
            dataset_sha256: source.dataset_sha256,
            std_max,
            min_count,
            molecule_keys: keys,
            attested_disjoint: false,
            origin: default_origin(),
        },
    );
    Ok(rs)
}

impl RuleSet {
    /// Builds a rule set whose slots are the sorted distinct fragments.
    pub fn new(rules: Vec<Rule>, provenance: Provenance) -> RuleSet {
        let frags: BTreeSet<&String> = rules
            .iter()
            .flat_map(|r| [&r.frag_a, &r.frag_b])
            .collect();
        let fragment_index = frags
            .into_iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        RuleSet {
            rules,
            fragment_index,
            provenance,
        }
    }

    /// An empty rule set; training with it is equivalent to the baseline.
    pub fn empty(provenance: Provenance) -> RuleSet {
        RuleSet {
            rules: Vec::new(),
            fragment_index: BTreeMap::new(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn slot_count(&self) -> usize {
        self.fragment_index.len()
    }

    /// Slot fragments ordered by slot index.
    pub fn slots(&self) -> Vec<String> {
        let mut v: Vec<(&String, &usize)> = self.fragment_index.iter().collect();
        v.sort_by_key(|(_, &i)| i);
        v.into_iter().map(|(f, _)| f.clone()).collect()
    }

    /// Keeps only rules whose fragments both appear in `fragments`, re-indexing slots.
    pub fn restrict_to(&self, fragments: &[String]) -> RuleSet {
        let allowed: BTreeSet<&String> = fragments.iter().collect();
        let rules = self
            .rules
            .iter()
            .filter(|r| allowed.contains(&r.frag_a) && allowed.contains(&r.frag_b))
            .cloned()
            .collect();
        RuleSet::new(rules, self.provenance.clone())
    }

    /// Checks ordering, per-rule invariants and slot coverage.
    pub fn check(&self) -> Result<()> {
        for r in &self.rules {
            r.check()?;
        }
        for w in self.rules.windows(2) {
            if (&w[0].frag_a, &w[0].frag_b) >= (&w[1].frag_a, &w[1].frag_b) {
                return Err(Error::InvariantViolation(
                    "rules not strictly sorted by (frag_a, frag_b)".into(),
                ));
            }
        }
        let used: BTreeSet<&String> = self
            .rules
            .iter()
            .flat_map(|r| [&r.frag_a, &r.frag_b])
            .collect();
        let indexed: BTreeSet<&String> = self.fragment_index.keys().collect();
        if used != indexed {
            return Err(Error::InvariantViolation(
                "fragment_index does not match rule fragments".into(),
            ));
        }
        let mut slots: Vec<usize> = self.fragment_index.values().copied().collect();
        slots.sort_unstable();
        if slots.iter().enumerate().any(|(i, &s)| i != s) {
            return Err(Error::InvariantViolation(
                "slot indices are not contiguous from 0".into(),
            ));
        }
        if !(self.provenance.std_max > 0.0) || self.provenance.min_count == 0 {
            return Err(Error::InvariantViolation("bad provenance thresholds".into()));
        }
        Ok(())
    }

    /// Returns a copy with every rule's mean shifted by `shift(rule_index)`.
    pub fn with_perturbed_means(&self, mut shift: impl FnMut(usize) -> f64) -> RuleSet {
        let mut out = self.clone();
        for (i, r) in out.rules.iter_mut().enumerate() {
            r.delta_mean += shift(i);
        }
        out
    }
}

/// The exact element-substitution rules of the molecular-weight task: one rule
/// per element pair with `delta_mean = mass(a) - mass(b)` and zero spread.
/// Fragments are element symbols and slots follow [`Element::ALL`], matching
/// atom-count features.
pub fn element_rules(dataset_sha256: &str) -> RuleSet {
    let mut rules = Vec::new();
    for a in Element::ALL {
        for b in Element::ALL {
            if a.symbol() < b.symbol() {
                rules.push(Rule {
                    frag_a: a.symbol().to_string(),
                    frag_b: b.symbol().to_string(),
                    delta_mean: a.mass() - b.mass(),
                    delta_std: 0.0,
                    count: 1,
                });
            }
        }
    }
    rules.sort_by(|x, y| (&x.frag_a, &x.frag_b).cmp(&(&y.frag_a, &y.frag_b)));
    RuleSet {
        rules,
        fragment_index: Element::ALL
            .iter()
            .map(|e| (e.symbol().to_string(), e.index()))
            .collect(),
        provenance: Provenance {
            dataset_sha256: dataset_sha256.to_string(),
            std_max: DEFAULT_STD_MAX,
            min_count: 1,
            molecule_keys: Some(Vec::new()),
            attested_disjoint: true,
            origin: "element_masses".into(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(fa: &str, fb: &str, d: f64) -> MatchedPair {
        MatchedPair {
            core: "[*]C".into(),
            frag_a: fa.into(),
            frag_b: fb.into(),
            mol_a: 0,
            mol_b: 1,
            delta_p: d,
        }
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate_rules(&[pair("[*]N", "[*]O", 1.0), pair("[*]N", "[*]O", 1.0)]);
        assert_eq!((r[0].delta_mean, r[0].delta_std, r[0].count), (1.0, 0.0, 2));
        let r = aggregate_rules(&[pair("[*]N", "[*]O", 0.0), pair("[*]N", "[*]O", 2.0)]);
        assert_eq!((r[0].delta_mean, r[0].delta_std, r[0].count), (1.0, 1.0, 2));
    }

    #[test]
    fn orientation_flip_is_absorbed() {
        let pairs = vec![
            pair("[*]N", "[*]O", 0.3),
            pair("[*]N", "[*]O", 0.7),
            pair("[*]Cl", "[*]F", -1.5),
        ];
        let flipped: Vec<_> = pairs
            .iter()
            .map(|p| pair(&p.frag_b, &p.frag_a, -p.delta_p))
            .collect();
        assert_eq!(aggregate_rules(&pairs), aggregate_rules(&flipped));
    }

    #[test]
    fn reversed_rule_is_antisymmetric() {
        let r = Rule {
            frag_a: "[*]N".into(),
            frag_b: "[*]O".into(),
            delta_mean: 0.4,
            delta_std: 0.1,
            count: 12,
        };
        let rev = r.reversed();
        assert_eq!(rev.delta_mean, -0.4);
        assert_eq!((rev.delta_std, rev.count), (0.1, 12));
        assert_eq!(rev.reversed(), r);
    }

    #[test]
    fn filter_drops_low_count_and_high_std() {
        let mk = |a: &str, std: f64, count| Rule {
            frag_a: a.into(),
            frag_b: "[*]Z".into(),
            delta_mean: 0.0,
            delta_std: std,
            count,
        };
        let rules = vec![mk("[*]A", 0.1, 9), mk("[*]B", 0.1, 10), mk("[*]C", 0.31, 50)];
        let rs = filter_rules(&rules, 0.3, 10, RuleSource::default()).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs.rules[0].frag_a, "[*]B");
        assert_eq!(rs.slot_count(), 2);
        rs.check().unwrap();
        assert!(matches!(
            filter_rules(&rules, 0.01, 10, RuleSource::default()),
            Err(Error::EmptyRuleSet)
        ));
        // a looser threshold admits more rules
        assert_eq!(filter_rules(&rules, 0.5, 10, RuleSource::default()).unwrap().len(), 2);
    }

    #[test]
    fn sixty_six_exact_element_rules() {
        let rs = element_rules("x");
        assert_eq!(rs.len(), 66);
        assert!(rs.rules.iter().all(|r| r.delta_std == 0.0));
        rs.check().unwrap();
        let clf = rs
            .rules
            .iter()
            .find(|r| r.frag_a == "Cl" && r.frag_b == "F")
            .unwrap();
        assert!((clf.delta_mean - (Element::Cl.mass() - Element::F.mass())).abs() < 1e-12);
        assert_eq!(rs.fragment_index["Si"], Element::Si.index());
    }

    #[test]
    fn mean_std_is_order_independent() {
        let a = [0.1, 0.7, 1e-9, 3.3, -2.0];
        let mut b = a;
        b.reverse();
        assert_eq!(mean_std(&a), mean_std(&b));
    }
}
