use molrule_core::mmpa::{element_rules, RuleSet};
use molrule_core::mw::{generate_mw_corpus, MwAssets, MwCorpusConfig};
use molrule_core::splits::{make_split, Dataset, SplitAssignment, SplitSpec};
use molrule_core::synth::{efficacy_train_config, substituent_corpus, substituent_layout, SubstituentCorpusConfig};
use molrule_core::theory::audit_trained_model;
use molrule_core::train::{
    evaluate, mine_rules, train, FeatureLayout, FeatureMode, SplitPart, TrainConfig, TrainedModel,
};
use molrule_core::Error;

fn small() -> (Dataset, SplitAssignment, TrainConfig) {
    let ds = substituent_corpus(&SubstituentCorpusConfig {
        n: 150,
        ..Default::default()
    })
    .unwrap();
    let split = make_split(&ds, &SplitSpec::Random811, 7).unwrap();
    let cfg = TrainConfig {
        max_epochs: 8,
        seeds: vec![3],
        ..efficacy_train_config()
    };
    (ds, split, cfg)
}

fn train_rules(ds: &Dataset, split: &SplitAssignment, cfg: &TrainConfig) -> RuleSet {
    mine_rules(ds, &split.train_ids, cfg.std_max, cfg.min_count).unwrap()
}

#[test]
fn same_seed_same_record() {
    let (ds, split, cfg) = small();
    let rs = train_rules(&ds, &split, &cfg);
    let (m1, r1) = train(&ds, &split, &substituent_layout(), Some(&rs), &cfg, 3).unwrap();
    let (m2, r2) = train(&ds, &split, &substituent_layout(), Some(&rs), &cfg, 3).unwrap();
    assert_eq!(r1.content_sha256(), r2.content_sha256());
    assert_eq!(m1, m2);
    let (_, r3) = train(&ds, &split, &substituent_layout(), Some(&rs), &cfg, 4).unwrap();
    assert_ne!(r1.content_sha256(), r3.content_sha256());
}

#[test]
fn record_describes_the_run() {
    let (ds, split, cfg) = small();
    let rs = train_rules(&ds, &split, &cfg);
    let (_, r) = train(&ds, &split, &substituent_layout(), Some(&rs), &cfg, 3).unwrap();
    let used = r.ruleset.as_ref().expect("rules entered the loss");
    assert!(used.n_rules > 0 && used.n_rules <= rs.len());
    assert!(!used.transferred);
    assert_eq!(r.config.lambda, cfg.lambda);
    assert_eq!(r.split_sha256, split.sha256());
    assert_eq!(r.epochs.len(), cfg.max_epochs);
    assert!(r.best_epoch < r.epochs.len());
    for e in &r.epochs {
        let l = &e.loss;
        assert!((l.total - (l.mse + l.lambda * l.ssr)).abs() <= 1e-9 * l.total.max(1.0));
    }
    assert_eq!(r.metric(SplitPart::Test).unwrap().n, split.test_ids.len());
}

#[test]
fn rules_outside_the_layout_leave_a_plain_baseline() {
    let (ds, split, cfg) = small();
    let rs = train_rules(&ds, &split, &cfg);
    let layout = FeatureLayout::fragments(vec!["[*]Q1".into(), "[*]Q2".into()]);
    let (_, with) = train(&ds, &split, &layout, Some(&rs), &cfg, 3).unwrap();
    let (_, without) = train(&ds, &split, &layout, None, &cfg, 3).unwrap();
    assert!(with.ruleset.is_none());
    assert_eq!(with.config.lambda, 0.0);
    assert_eq!(with.content_sha256(), without.content_sha256());
}

#[test]
fn leakage_is_refused() {
    let (ds, split, cfg) = small();
    let all: Vec<usize> = (0..ds.len()).collect();
    let leaked = mine_rules(&ds, &all, cfg.std_max, cfg.min_count).unwrap();
    let err = train(&ds, &split, &substituent_layout(), Some(&leaked), &cfg, 3).unwrap_err();
    assert!(matches!(err, Error::Leakage(_)), "{err}");

    let mut anonymous = train_rules(&ds, &split, &cfg);
    anonymous.provenance.molecule_keys = None;
    let err = train(&ds, &split, &substituent_layout(), Some(&anonymous), &cfg, 3).unwrap_err();
    assert!(matches!(err, Error::Leakage(_)), "{err}");

    anonymous.provenance.attested_disjoint = true;
    train(&ds, &split, &substituent_layout(), Some(&anonymous), &cfg, 3).unwrap();
}

#[test]
fn checkpoint_round_trip_predicts_identically() {
    let (ds, split, cfg) = small();
    let rs = train_rules(&ds, &split, &cfg);
    let (tm, rec) = train(&ds, &split, &substituent_layout(), Some(&rs), &cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    tm.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();
    assert_eq!(back, tm);
    let m = evaluate(&back, &ds, &split.test_ids, SplitPart::Test).unwrap();
    assert_eq!(m.rmse.to_bits(), rec.test_rmse().to_bits());
    assert!(evaluate(&back, &ds, &[], SplitPart::Test).is_err());
}

#[test]
fn split_for_another_dataset_is_rejected() {
    let (ds, _, cfg) = small();
    let other = substituent_corpus(&SubstituentCorpusConfig {
        n: 150,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let split = make_split(&other, &SplitSpec::Random811, 7).unwrap();
    assert!(train(&ds, &split, &substituent_layout(), None, &cfg, 3).is_err());
}

#[test]
fn exact_rules_train_an_auditable_mw_model() {
    let corpus = generate_mw_corpus(&MwCorpusConfig {
        n_per_bin: 2,
        mw_min: 160,
        mw_max: 400,
        max_rounds: 60,
        ..Default::default()
    })
    .unwrap();
    let assets = MwAssets::build(corpus.dataset, 340.0, 340.0, 400.0, 1024).unwrap();
    let cfg = TrainConfig {
        max_epochs: 40,
        feature_mode: FeatureMode::AtomCounts,
        lambda: 3.0,
        lr: 3e-3,
        dropout_p: 0.0,
        hidden: vec![32, 32],
        ..TrainConfig::default()
    };
    let (tm, rec) = assets.train(Some(&assets.rules), &cfg, 1024).unwrap();
    assert_eq!(rec.ruleset.as_ref().unwrap().n_rules, 66);
    let rules = element_rules(assets.dataset.sha256());
    let report = audit_trained_model(&tm, &assets.dataset, &assets.split, &rules).unwrap();
    assert!(report.e_hat > 0.0);
    assert!(!report.rules.is_empty());
    assert_eq!(report.fraction_holding, 1.0);
}
