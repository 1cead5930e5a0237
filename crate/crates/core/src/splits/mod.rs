//! Datasets and the split regimes used for evaluation.

mod butina;
mod dataset;
mod methods;

pub use butina::{butina_cluster, butina_from_neighbors, neighbor_lists, Clustering};
pub use dataset::{molecule_key, Dataset, Row};
pub use methods::{
    activity_cliff_split, cliff_pairs, fingerprints, make_split, mw_range_split, property_ood_split,
    random_scaffold_811, scaffold_ood_split, subsample, tail_clusters, train_valid, CliffPair,
    ClusterBasis, ExtremeMode, SplitAssignment, SplitSpec, SPLIT_FORMAT_VERSION,
};
