use std::collections::BTreeSet;

use molrule_core::chem::{canonical_smiles, parse_smiles, Molecule};
use molrule_core::mmpa::{aggregate_rules, extract_matched_pairs, filter_rules, RuleSource};
use molrule_core::splits::{make_split, Dataset, ExtremeMode, SplitSpec};
use molrule_core::synth::{substituent_corpus, SubstituentCorpusConfig, SCAFFOLDS};
use molrule_core::theory::{
    residual_variance_below_mean_square, variance_below_constant_deviation, verify_sigma_bound, BoundInstance,
};
use proptest::prelude::*;

fn corpus(n: usize, seed: u64) -> Dataset {
    substituent_corpus(&SubstituentCorpusConfig {
        n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn canon(s: &str) -> String {
    canonical_smiles(&parse_smiles(s).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairs_do_not_depend_on_row_order(seed in 0u64..500, rot in 1usize..40) {
        let ds = corpus(40, seed);
        let rows: Vec<(Molecule, f64)> = ds.molecules().iter().cloned().zip(ds.targets()).collect();
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        perm.rotate_left(rot % rows.len());
        let shuffled: Vec<(Molecule, f64)> = perm.iter().map(|&i| rows[i].clone()).collect();
        let keyed = |pairs: Vec<molrule_core::mmpa::MatchedPair>, map: &dyn Fn(usize) -> usize| {
            pairs
                .into_iter()
                .map(|p| (p.core, p.frag_a, p.frag_b, map(p.mol_a), map(p.mol_b), p.delta_p.to_bits()))
                .collect::<BTreeSet<_>>()
        };
        let a = keyed(extract_matched_pairs(&rows), &|i| i);
        let b = keyed(extract_matched_pairs(&shuffled), &|i| perm[i]);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pair_deltas_match_targets(seed in 0u64..500) {
        let ds = corpus(30, seed);
        let rows: Vec<(Molecule, f64)> = ds.molecules().iter().cloned().zip(ds.targets()).collect();
        for p in extract_matched_pairs(&rows) {
            prop_assert!(p.frag_a < p.frag_b);
            prop_assert_eq!(p.delta_p, rows[p.mol_a].1 - rows[p.mol_b].1);
        }
    }

    #[test]
    fn filtered_rules_respect_thresholds(seed in 0u64..200, std_max in 0.05f64..1.0, min_count in 1usize..5) {
        let ds = corpus(60, seed);
        let rows: Vec<(Molecule, f64)> = ds.molecules().iter().cloned().zip(ds.targets()).collect();
        let all = aggregate_rules(&extract_matched_pairs(&rows));
        match filter_rules(&all, std_max, min_count, RuleSource::default()) {
            Ok(rs) => {
                rs.check().unwrap();
                prop_assert!(rs.rules.iter().all(|r| r.delta_std <= std_max && r.count >= min_count));
                let kept = all.iter().filter(|r| r.delta_std <= std_max && r.count >= min_count).count();
                prop_assert_eq!(rs.len(), kept);
            }
            Err(e) => prop_assert!(matches!(e, molrule_core::Error::EmptyRuleSet)),
        }
    }

    #[test]
    fn splits_partition_every_row(seed in 0u64..1000, which in 0usize..4) {
        let ds = corpus(80, seed % 7);
        let spec = [
            SplitSpec::Random811,
            SplitSpec::Scaffold811,
            SplitSpec::butina_tail(),
            SplitSpec::property_extreme(ExtremeMode::TopExtreme),
        ][which]
            .clone();
        let s = make_split(&ds, &spec, seed).unwrap();
        s.validate(&ds).unwrap();
        prop_assert_eq!(s.train_ids.len() + s.valid_ids.len() + s.test_ids.len(), ds.len());
        prop_assert!(!s.test_ids.is_empty());
        prop_assert_eq!(s.clone(), make_split(&ds, &spec, seed).unwrap());
    }

    #[test]
    fn variance_is_the_smallest_mean_square(xs in prop::collection::vec(-1e3f64..1e3, 1..50), a in -1e3f64..1e3) {
        prop_assert!(variance_below_constant_deviation(&xs, a));
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.5 - a).collect();
        prop_assert!(residual_variance_below_mean_square(&xs, &ys));
    }

    #[test]
    fn bounded_errors_bound_the_spread(
        base in prop::collection::vec((-100i32..100, -10i32..10, -1.0f64..1.0, -1.0f64..1.0), 1..30),
        e_num in 1u32..4096,
    ) {
        let e = e_num as f64 / 1024.0;
        let ctx = base
            .iter()
            .map(|&(p0, d, u0, u1)| {
                let (p0, p1) = (p0 as f64, (p0 + d) as f64);
                [p0, p1, p0 + u0 * e * 0.999, p1 + u1 * e * 0.999]
            })
            .collect();
        let inst = BoundInstance::new(vec![ctx], e).unwrap();
        prop_assert!(verify_sigma_bound(&inst).iter().all(|b| b.holds));
    }
}

#[test]
fn canonical_form_is_idempotent_and_spelling_independent() {
    for t in SCAFFOLDS {
        let s = t.replace("({0})", "(Cl)").replace("({1})", "(O)").replace("({2})", "").replace("({3})", "");
        let a = canon(&s);
        assert_eq!(a, canon(&a), "{s}");
    }
    assert_eq!(canon("Oc1ccc(Cl)cc1"), canon("Clc1ccc(O)cc1"));
    assert_eq!(canon("OCC(N)C"), canon("CC(N)CO"));
}
