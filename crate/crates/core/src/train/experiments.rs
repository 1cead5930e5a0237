use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::features::FeatureLayout;
use super::mine_rules;
use super::trainer::{train_on_features, RunRecord};
use crate::error::{Error, Result};
use crate::mmpa::{mean_std, RuleSet};
use crate::nn::Mat;
use crate::splits::{subsample, Dataset, SplitAssignment};

/// Mean and population std of one number per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SeedSummary {
    pub fn new(values: Vec<f64>) -> Self {
        let (mean, std) = if values.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&values) };
        SeedSummary { values, mean, std }
    }
}

/// Trains with a rule set mined elsewhere. The leakage guard compares the
/// rule provenance keys against this split's test molecules, so it applies
/// across datasets.
pub fn rule_transfer_train(
    ds: &Dataset,
    x: &Mat,
    split: &SplitAssignment,
    layout: &FeatureLayout,
    external: &RuleSet,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<RunRecord> {
    Ok(train_on_features(ds, x, split, layout, Some(external), cfg, seed)?.1)
}

/// The split with its training rows cut down to `fraction`.
pub fn subsample_split(split: &SplitAssignment, fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} not in (0, 1]")));
    }
    let mut s = split.clone();
    if fraction < 1.0 {
        s.train_ids = subsample(&split.train_ids, fraction, seed);
    }
    Ok(s)
}

/// Rules mined from the training rows only, or `None` when none survive filtering.
pub fn mine_train_rules(ds: &Dataset, split: &SplitAssignment, cfg: &TrainConfig) -> Result<Option<RuleSet>> {
    match mine_rules(ds, &split.train_ids, cfg.std_max, cfg.min_count) {
        Ok(rs) => Ok(Some(rs)),
        Err(Error::EmptyRuleSet) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub fraction: f64,
    /// Rules in the loss per seed after restriction to the layout.
    pub n_rules: Vec<usize>,
    pub with_rules: SeedSummary,
    pub without_rules: SeedSummary,
}

/// Paired runs at each training fraction. Each seed draws its own subsample
/// and mines its rules from that subsample alone.
pub fn data_ratio_sweep(
    ds: &Dataset,
    x: &Mat,
    split: &SplitAssignment,
    layout: &FeatureLayout,
    cfg: &TrainConfig,
    fractions: &[f64],
) -> Result<Vec<RatioPoint>> {
    let mut fractions = fractions.to_vec();
    fractions.sort_by(f64::total_cmp);
    let base_cfg = TrainConfig {
        lambda: 0.0,
        ..cfg.clone()
    };
    fractions
        .iter()
        .map(|&f| {
            let mut with = Vec::new();
            let mut without = Vec::new();
            let mut n_rules = Vec::new();
            for &seed in &cfg.seeds {
                let sub = subsample_split(split, f, seed)?;
                let rs = mine_train_rules(ds, &sub, cfg)?;
                let (_, rec) = train_on_features(ds, x, &sub, layout, rs.as_ref(), cfg, seed)?;
                n_rules.push(rec.ruleset.as_ref().map_or(0, |r| r.n_rules));
                with.push(rec.test_rmse());
                without.push(train_on_features(ds, x, &sub, layout, None, &base_cfg, seed)?.1.test_rmse());
            }
            Ok(RatioPoint {
                fraction: f,
                n_rules,
                with_rules: SeedSummary::new(with),
                without_rules: SeedSummary::new(without),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferComparison {
    pub fraction: f64,
    pub baseline: SeedSummary,
    pub internal: SeedSummary,
    pub transferred: SeedSummary,
    pub internal_rules: Vec<usize>,
    pub transferred_rules: Vec<usize>,
}

/// Baseline, subsample-mined rules and an external rule set on the same
/// subsampled training rows, per seed.
pub fn transfer_comparison(
    ds: &Dataset,
    x: &Mat,
    split: &SplitAssignment,
    layout: &FeatureLayout,
    external: &RuleSet,
    cfg: &TrainConfig,
    fraction: f64,
) -> Result<TransferComparison> {
    let base_cfg = TrainConfig {
        lambda: 0.0,
        ..cfg.clone()
    };
    let (mut base, mut internal, mut transferred) = (Vec::new(), Vec::new(), Vec::new());
    let (mut n_int, mut n_ext) = (Vec::new(), Vec::new());
    for &seed in &cfg.seeds {
        let sub = subsample_split(split, fraction, seed)?;
        base.push(train_on_features(ds, x, &sub, layout, None, &base_cfg, seed)?.1.test_rmse());
        let rs = mine_train_rules(ds, &sub, cfg)?;
        let rec = train_on_features(ds, x, &sub, layout, rs.as_ref(), cfg, seed)?.1;
        n_int.push(rec.ruleset.as_ref().map_or(0, |r| r.n_rules));
        internal.push(rec.test_rmse());
        let rec = rule_transfer_train(ds, x, &sub, layout, external, cfg, seed)?;
        n_ext.push(rec.ruleset.as_ref().map_or(0, |r| r.n_rules));
        transferred.push(rec.test_rmse());
    }
    Ok(TransferComparison {
        fraction,
        baseline: SeedSummary::new(base),
        internal: SeedSummary::new(internal),
        transferred: SeedSummary::new(transferred),
        internal_rules: n_int,
        transferred_rules: n_ext,
    })
}
