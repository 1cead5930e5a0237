use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::butina::{butina_cluster, Clustering};
use super::dataset::Dataset;
use crate::chem::{morgan_fingerprint, murcko_scaffold, murcko_scaffold_smiles, tanimoto, Fingerprint};
use crate::chem::{DEFAULT_NBITS, DEFAULT_RADIUS};
use crate::error::{Error, Result};
use crate::rng::{Purpose, RandomStream};

pub const SPLIT_FORMAT_VERSION: u32 = 1;

/// What the Butina clustering of the tail split runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterBasis {
    /// Fingerprint of the whole molecule.
    #[default]
    Molecule,
    /// Fingerprint of the Murcko scaffold (acyclic molecules share the empty one).
    MurckoScaffold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeMode {
    TopExtreme,
    BothExtremes,
}

/// A split method together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "snake_case")]
pub enum SplitSpec {
    #[serde(rename = "random_811")]
    Random811,
    #[serde(rename = "scaffold_811")]
    Scaffold811,
    ButinaTail {
        cutoff: f64,
        test_fraction: f64,
        #[serde(default)]
        basis: ClusterBasis,
    },
    PropertyExtreme {
        mode: ExtremeMode,
        fraction: f64,
    },
    ActivityCliff {
        sim_min: f64,
        delta_min: f64,
    },
    MwRange {
        train_max: f64,
        test_min: f64,
        test_max: f64,
    },
}

impl SplitSpec {
    pub fn butina_tail() -> Self {
        SplitSpec::ButinaTail {
            cutoff: 0.7,
            test_fraction: 0.1,
            basis: ClusterBasis::Molecule,
        }
    }

    pub fn property_extreme(mode: ExtremeMode) -> Self {
        SplitSpec::PropertyExtreme {
            mode,
            fraction: 0.1,
        }
    }

    pub fn activity_cliff() -> Self {
        SplitSpec::ActivityCliff {
            sim_min: 0.75,
            delta_min: 1.0,
        }
    }

    pub fn mw_range() -> Self {
        SplitSpec::MwRange {
            train_max: 600.0,
            test_min: 600.0,
            test_max: 700.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SplitSpec::Random811 => "random_811",
            SplitSpec::Scaffold811 => "scaffold_811",
            SplitSpec::ButinaTail { .. } => "butina_tail",
            SplitSpec::PropertyExtreme { .. } => "property_extreme",
            SplitSpec::ActivityCliff { .. } => "activity_cliff",
            SplitSpec::MwRange { .. } => "mw_range",
        }
    }
}

/// Train/valid/test row ids (each sorted ascending) plus everything needed
/// to rebuild them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitAssignment {
    pub format_version: u32,
    #[serde(flatten)]
    pub spec: SplitSpec,
    pub seed: u64,
    pub dataset_sha256: String,
    pub train_ids: Vec<usize>,
    pub valid_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

impl SplitAssignment {
    fn new(ds: &Dataset, spec: SplitSpec, seed: u64, mut parts: [Vec<usize>; 3]) -> Self {
        for p in &mut parts {
            p.sort_unstable();
        }
        let [train_ids, valid_ids, test_ids] = parts;
        SplitAssignment {
            format_version: SPLIT_FORMAT_VERSION,
            spec,
            seed,
            dataset_sha256: ds.sha256().to_string(),
            train_ids,
            valid_ids,
            test_ids,
        }
    }

    /// Checks disjointness, id range and the dataset hash.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.format_version != SPLIT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported split format_version {}",
                self.format_version
            )));
        }
        if self.dataset_sha256 != ds.sha256() {
            return Err(Error::InvariantViolation(
                "split was built for a different dataset".into(),
            ));
        }
        let mut seen = vec![false; ds.len()];
        for &id in self.train_ids.iter().chain(&self.valid_ids).chain(&self.test_ids) {
            if id >= ds.len() {
                return Err(Error::InvariantViolation(format!("row id {id} out of range")));
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::InvariantViolation(format!("row id {id} appears twice")));
            }
        }
        Ok(())
    }

    /// Hash of the JSON form; equal hashes mean equal assignments.
    pub fn sha256(&self) -> String {
        let text = serde_json::to_string(self).expect("split serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("split file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Builds the split described by `spec`.
pub fn make_split(ds: &Dataset, spec: &SplitSpec, seed: u64) -> Result<SplitAssignment> {
    match *spec {
        SplitSpec::Random811 => random_scaffold_811(ds, false, seed),
        SplitSpec::Scaffold811 => random_scaffold_811(ds, true, seed),
        SplitSpec::ButinaTail {
            cutoff,
            test_fraction,
            basis,
        } => scaffold_ood_split(ds, cutoff, test_fraction, basis, seed),
        SplitSpec::PropertyExtreme { mode, fraction } => property_ood_split(ds, mode, fraction, seed),
        SplitSpec::ActivityCliff { sim_min, delta_min } => activity_cliff_split(ds, sim_min, delta_min, seed),
        SplitSpec::MwRange {
            train_max,
            test_min,
            test_max,
        } => mw_range_split(ds, train_max, test_min, test_max, seed),
    }
}

fn shuffled(ids: &[usize], seed: u64) -> Vec<usize> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    v.shuffle(&mut RandomStream::new(seed, Purpose::Shuffle).rng());
    v
}

/// Seeded split of `ids` into (train, valid) with `round(valid_fraction * len)` valid rows.
pub fn train_valid(ids: &[usize], valid_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let v = shuffled(ids, seed);
    let n_valid = (valid_fraction * v.len() as f64).round() as usize;
    let (valid, train) = v.split_at(n_valid.min(v.len()));
    (train.to_vec(), valid.to_vec())
}

/// A seeded `fraction` of `ids` (at least one row), sorted.
pub fn subsample(ids: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((fraction * ids.len() as f64).round() as usize).clamp(1.min(ids.len()), ids.len());
    let mut v = shuffled(ids, seed ^ 0x5eed_5eed);
    v.truncate(k);
    v.sort_unstable();
    v
}

pub fn fingerprints(ds: &Dataset, basis: ClusterBasis) -> Vec<Fingerprint> {
    ds.molecules()
        .par_iter()
        .map(|m| match basis {
            ClusterBasis::Molecule => morgan_fingerprint(m, DEFAULT_RADIUS, DEFAULT_NBITS),
            ClusterBasis::MurckoScaffold => match murcko_scaffold(m) {
                Some(s) => morgan_fingerprint(&s, DEFAULT_RADIUS, DEFAULT_NBITS),
                None => Fingerprint::empty(DEFAULT_NBITS, DEFAULT_RADIUS),
            },
        })
        .collect()
}

/// Test rows from whole clusters, smallest first (ties by centroid id),
/// until at least `test_fraction` of `n` rows are taken.
pub fn tail_clusters(c: &Clustering, n: usize, test_fraction: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.clusters.len()).collect();
    order.sort_by_key(|&k| (c.clusters[k].len(), c.centroid(k)));
    let need = test_fraction * n as f64;
    let mut test = Vec::new();
    for k in order {
        if test.len() as f64 >= need {
            break;
        }
        test.extend_from_slice(&c.clusters[k]);
    }
    test
}

/// Butina clusters at `cutoff`; the least populated clusters form the test set.
pub fn scaffold_ood_split(
    ds: &Dataset,
    cutoff: f64,
    test_fraction: f64,
    basis: ClusterBasis,
    seed: u64,
) -> Result<SplitAssignment> {
    if ds.len() < 10 {
        return Err(Error::InvalidArgument("tail split needs at least 10 rows".into()));
    }
    let clustering = butina_cluster(&fingerprints(ds, basis), cutoff)?;
    let largest = clustering.clusters.iter().map(Vec::len).max().unwrap_or(0);
    if largest as f64 > 0.9 * ds.len() as f64 {
        return Err(Error::DegenerateSplit(format!(
            "one cluster holds {largest} of {} rows",
            ds.len()
        )));
    }
    let test = tail_clusters(&clustering, ds.len(), test_fraction);
    let rest = complement(ds.len(), &[&test]);
    let (train, valid) = train_valid(&rest, 1.0 / 9.0, seed);
    let spec = SplitSpec::ButinaTail {
        cutoff,
        test_fraction,
        basis,
    };
    Ok(SplitAssignment::new(ds, spec, seed, [train, valid, test]))
}

fn complement(n: usize, taken: &[&[usize]]) -> Vec<usize> {
    let mut used = vec![false; n];
    for part in taken {
        for &i in *part {
            used[i] = true;
        }
    }
    (0..n).filter(|&i| !used[i]).collect()
}

/// Property extremes as the test set.
pub fn property_ood_split(ds: &Dataset, mode: ExtremeMode, fraction: f64, seed: u64) -> Result<SplitAssignment> {
    let n = ds.len();
    let t = ds.targets();
    let mut desc: Vec<usize> = (0..n).collect();
    desc.sort_by(|&a, &b| t[b].total_cmp(&t[a]).then(a.cmp(&b)));
    let mut asc: Vec<usize> = (0..n).collect();
    asc.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
    let test: Vec<usize> = match mode {
        ExtremeMode::TopExtreme => {
            let k = (fraction * n as f64).round() as usize;
            desc[..k.min(n)].to_vec()
        }
        ExtremeMode::BothExtremes => {
            let k = (fraction * n as f64 / 2.0).round() as usize;
            let mut v: Vec<usize> = asc[..k.min(n)].to_vec();
            for &i in &desc {
                if v.len() >= (2 * k).min(n) {
                    break;
                }
                if !v.contains(&i) {
                    v.push(i);
                }
            }
            v
        }
    };
    let rest = complement(n, &[&test]);
    let (train, valid) = train_valid(&rest, 1.0 / 9.0, seed);
    Ok(SplitAssignment::new(
        ds,
        SplitSpec::PropertyExtreme { mode, fraction },
        seed,
        [train, valid, test],
    ))
}

/// A qualifying cliff pair `(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliffPair {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
    pub abs_delta: f64,
}

/// All pairs with `Tc > sim_min` and `|ΔP| > delta_min`.
pub fn cliff_pairs(ds: &Dataset, sim_min: f64, delta_min: f64) -> Result<Vec<CliffPair>> {
    let fps = fingerprints(ds, ClusterBasis::Molecule);
    let t = ds.targets();
    let per_row: Vec<Vec<CliffPair>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in i + 1..ds.len() {
                let d = (t[i] - t[j]).abs();
                if d <= delta_min {
                    continue;
                }
                let s = tanimoto(&fps[i], &fps[j])?;
                if s > sim_min {
                    out.push(CliffPair {
                        i,
                        j,
                        similarity: s,
                        abs_delta: d,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_row.into_iter().flatten().collect())
}

/// Disjoint cliff pairs chosen greedily by descending `|ΔP|`; the lower-target
/// member of each goes to train and the other to test.
pub fn activity_cliff_split(ds: &Dataset, sim_min: f64, delta_min: f64, seed: u64) -> Result<SplitAssignment> {
    if ds.len() < 2 {
        return Err(Error::InvalidArgument("cliff split needs at least 2 rows".into()));
    }
    let mut pairs = cliff_pairs(ds, sim_min, delta_min)?;
    if pairs.is_empty() {
        return Err(Error::NoCliffs);
    }
    pairs.sort_by(|a, b| {
        b.abs_delta
            .total_cmp(&a.abs_delta)
            .then((a.i, a.j).cmp(&(b.i, b.j)))
    });
    let mut used = vec![false; ds.len()];
    let mut forced_train = Vec::new();
    let mut test = Vec::new();
    for p in pairs {
        if used[p.i] || used[p.j] {
            continue;
        }
        used[p.i] = true;
        used[p.j] = true;
        let (lo, hi) = if ds.target(p.i) <= ds.target(p.j) {
            (p.i, p.j)
        } else {
            (p.j, p.i)
        };
        forced_train.push(lo);
        test.push(hi);
    }
    let rest = complement(ds.len(), &[&forced_train, &test]);
    let (mut train, valid) = train_valid(&rest, 1.0 / 9.0, seed);
    train.extend(forced_train);
    Ok(SplitAssignment::new(
        ds,
        SplitSpec::ActivityCliff { sim_min, delta_min },
        seed,
        [train, valid, test],
    ))
}

/// Targets `<= train_max` go to train/valid (3:1); `(test_min, test_max]` is test.
pub fn mw_range_split(
    ds: &Dataset,
    train_max: f64,
    test_min: f64,
    test_max: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    let low: Vec<usize> = (0..ds.len()).filter(|&i| ds.target(i) <= train_max).collect();
    let test: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.target(i) > test_min && ds.target(i) <= test_max)
        .filter(|&i| ds.target(i) > train_max)
        .collect();
    if test.is_empty() {
        return Err(Error::NoTestRows);
    }
    let (train, valid) = train_valid(&low, 0.25, seed);
    Ok(SplitAssignment::new(
        ds,
        SplitSpec::MwRange {
            train_max,
            test_min,
            test_max,
        },
        seed,
        [train, valid, test],
    ))
}

/// 8:1:1 split, either a seeded shuffle or whole Murcko-scaffold groups
/// placed largest first.
pub fn random_scaffold_811(ds: &Dataset, by_scaffold: bool, seed: u64) -> Result<SplitAssignment> {
    let n = ds.len();
    if n < 10 {
        return Err(Error::InvalidArgument("8:1:1 split needs at least 10 rows".into()));
    }
    let n_train = (0.8 * n as f64).round() as usize;
    let n_valid = (0.1 * n as f64).round() as usize;
    let (parts, spec) = if !by_scaffold {
        let v = shuffled(&(0..n).collect::<Vec<_>>(), seed);
        (
            [
                v[..n_train].to_vec(),
                v[n_train..n_train + n_valid].to_vec(),
                v[n_train + n_valid..].to_vec(),
            ],
            SplitSpec::Random811,
        )
    } else {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let keys: Vec<String> = ds.molecules().par_iter().map(murcko_scaffold_smiles).collect();
        for (i, k) in keys.into_iter().enumerate() {
            groups.entry(k).or_default().push(i);
        }
        let mut groups: Vec<(String, Vec<usize>)> = groups.into_iter().collect();
        groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
        let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (_, g) in groups {
            if train.len() + g.len() <= n_train {
                train.extend(g);
            } else if valid.len() + g.len() <= n_valid {
                valid.extend(g);
            } else {
                test.extend(g);
            }
        }
        ([train, valid, test], SplitSpec::Scaffold811)
    };
    Ok(SplitAssignment::new(ds, spec, seed, parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> Dataset {
        // distinct alkanes/alcohols so every row parses; targets 1..=n
        Dataset::from_pairs(
            "t",
            (1..=n).map(|i| (format!("{}O", "C".repeat(1 + i % 7)), i as f64)),
        )
        .unwrap()
    }

    #[test]
    fn tail_takes_smallest_clusters() {
        let mut clusters = Vec::new();
        let mut next = 0;
        for size in [50, 30, 10, 5, 5] {
            clusters.push((next..next + size).collect::<Vec<_>>());
            next += size;
        }
        let mut cluster_of = vec![0; 100];
        for (k, c) in clusters.iter().enumerate() {
            for &i in c {
                cluster_of[i] = k;
            }
        }
        let c = Clustering {
            clusters,
            cluster_of,
        };
        let mut t = tail_clusters(&c, 100, 0.1);
        t.sort();
        assert_eq!(t, (90..100).collect::<Vec<_>>());
    }

    #[test]
    fn property_extremes() {
        let ds = numbered(100);
        let s = property_ood_split(&ds, ExtremeMode::TopExtreme, 0.1, 0).unwrap();
        assert_eq!(s.test_ids, (90..100).collect::<Vec<_>>());
        let s = property_ood_split(&ds, ExtremeMode::BothExtremes, 0.1, 0).unwrap();
        let want: Vec<usize> = (0..5).chain(95..100).collect();
        assert_eq!(s.test_ids, want);
        assert_eq!(s.train_ids.len() + s.valid_ids.len(), 90);
        s.validate(&ds).unwrap();
    }

    #[test]
    fn constant_targets_break_ties_by_row() {
        let ds = Dataset::from_pairs("t", (0..20).map(|i| (format!("{}O", "C".repeat(1 + i)), 1.0))).unwrap();
        let s = property_ood_split(&ds, ExtremeMode::TopExtreme, 0.1, 3).unwrap();
        assert_eq!(s.test_ids, vec![0, 1]);
    }

    #[test]
    fn mw_boundaries() {
        let ds = Dataset::from_pairs(
            "t",
            [("C", 599.0), ("CC", 600.0), ("CCC", 650.0), ("CCCC", 700.0), ("CCCCC", 701.0)],
        )
        .unwrap();
        let s = mw_range_split(&ds, 600.0, 600.0, 700.0, 1).unwrap();
        assert_eq!(s.test_ids, vec![2, 3]);
        let mut low: Vec<usize> = s.train_ids.iter().chain(&s.valid_ids).copied().collect();
        low.sort();
        assert_eq!(low, vec![0, 1]);
        let none = Dataset::from_pairs("t", [("C", 10.0), ("CC", 20.0)]).unwrap();
        assert!(matches!(mw_range_split(&none, 600.0, 600.0, 700.0, 1), Err(Error::NoTestRows)));
    }

    #[test]
    fn random_811_sizes_and_seed() {
        let ds = numbered(97);
        let a = random_scaffold_811(&ds, false, 1).unwrap();
        let b = random_scaffold_811(&ds, false, 2).unwrap();
        assert_eq!(a.train_ids.len(), 78);
        assert_eq!(a.valid_ids.len(), 10);
        assert_eq!(a.test_ids.len(), 9);
        assert_ne!(a.train_ids, b.train_ids);
        assert_eq!(a, random_scaffold_811(&ds, false, 1).unwrap());
    }

    #[test]
    fn one_scaffold_lands_in_one_partition() {
        let ds = Dataset::from_pairs(
            "t",
            (0..10).map(|i| (format!("c1ccccc1{}", "C".repeat(i + 1)), i as f64)),
        )
        .unwrap();
        let a = random_scaffold_811(&ds, true, 1).unwrap();
        let sizes = [a.train_ids.len(), a.valid_ids.len(), a.test_ids.len()];
        assert_eq!(sizes.iter().filter(|&&s| s == 10).count(), 1);
        let b = random_scaffold_811(&ds, true, 99).unwrap();
        assert_eq!((a.train_ids, a.valid_ids, a.test_ids), (b.train_ids, b.valid_ids, b.test_ids));
    }

    #[test]
    fn cliffs_pair_close_analogues() {
        let ds = Dataset::from_pairs(
            "t",
            [
                ("CCCCCCCCO", 1.0),
                ("CCCCCCCCN", 3.0),
                ("c1ccccc1", 0.0),
                ("C1CCCCC1", 0.2),
                ("CC(C)C", 5.0),
            ],
        )
        .unwrap();
        let pairs = cliff_pairs(&ds, 0.3, 1.0).unwrap();
        assert!(pairs.iter().any(|p| (p.i, p.j) == (0, 1)));
        let s = activity_cliff_split(&ds, 0.3, 1.0, 0).unwrap();
        assert!(s.test_ids.contains(&1));
        assert!(s.train_ids.contains(&0));
        s.validate(&ds).unwrap();
        assert!(matches!(activity_cliff_split(&ds, 0.99, 100.0, 0), Err(Error::NoCliffs)));
    }

    #[test]
    fn split_json_round_trip() {
        let ds = numbered(30);
        for spec in [
            SplitSpec::Random811,
            SplitSpec::Scaffold811,
            SplitSpec::property_extreme(ExtremeMode::BothExtremes),
            SplitSpec::MwRange {
                train_max: 20.0,
                test_min: 20.0,
                test_max: 30.0,
            },
        ] {
            let s = make_split(&ds, &spec, 5).unwrap();
            let back = SplitAssignment::from_json(&s.to_json()).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.sha256(), s.sha256());
        }
        let text = make_split(&ds, &SplitSpec::mw_range(), 5);
        assert!(matches!(text, Err(Error::NoTestRows)));
    }

    #[test]
    fn subsample_is_seeded() {
        let ids: Vec<usize> = (0..100).collect();
        let a = subsample(&ids, 0.1, 4);
        assert_eq!(a.len(), 10);
        assert_eq!(a, subsample(&ids, 0.1, 4));
        assert_ne!(a, subsample(&ids, 0.1, 5));
    }
}
