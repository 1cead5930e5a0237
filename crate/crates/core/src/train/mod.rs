//! Featurization, the training loop, evaluation and run records.

mod config;
mod experiments;
mod features;
mod trainer;

pub use config::{TrainConfig, DEFAULT_SEEDS};
pub use experiments::{
    data_ratio_sweep, mine_train_rules, rule_transfer_train, subsample_split, transfer_comparison, RatioPoint, SeedSummary,
    TransferComparison,
};
pub use features::{FeatureLayout, FeatureMode};
pub use trainer::{
    check_leakage, effective_rules, evaluate, fit, metrics, rmse, train, train_on_features, EpochLog, Fit, Metrics,
    RuleSetSummary, RunRecord, SplitPart, TrainedModel, CHECKPOINT_FORMAT_VERSION, RUN_FORMAT_VERSION,
};

use crate::error::Result;
use crate::mmpa::{aggregate_rules, filter_rules, pairs_from_cuts, row_cuts, RuleSet, RuleSource, DEFAULT_MAX_HEAVY_ATOMS};
use crate::splits::Dataset;

/// Mines and filters rules from the rows `ids` of `ds`. The provenance lists
/// exactly those rows' molecule keys.
pub fn mine_rules(ds: &Dataset, ids: &[usize], std_max: f64, min_count: usize) -> Result<RuleSet> {
    let mols: Vec<_> = ids.iter().map(|&i| ds.molecule(i)).collect();
    let props: Vec<f64> = ids.iter().map(|&i| ds.target(i)).collect();
    let cuts = row_cuts(&mols, DEFAULT_MAX_HEAVY_ATOMS);
    let pairs = pairs_from_cuts(&cuts, &props);
    let rules = aggregate_rules(&pairs);
    filter_rules(
        &rules,
        std_max,
        min_count,
        RuleSource {
            dataset_sha256: ds.sha256().to_string(),
            molecule_keys: Some(ds.keys(ids)),
        },
    )
}
