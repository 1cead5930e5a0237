use serde::{Deserialize, Serialize};

use super::features::FeatureMode;
use crate::error::{Error, Result};
use crate::loss::{LossConfig, PenaltyMode, RuleScope};
use crate::nn::{AdamConfig, ADAM_EPS};

pub const DEFAULT_SEEDS: [u64; 5] = [1024, 1025, 1026, 1027, 1028];

/// Training hyperparameters. Unknown keys are rejected when read from JSON;
/// missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub std_max: f64,
    pub min_count: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub dropout_p: f64,
    pub clip_norm: f64,
    pub schedule_period: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
    pub feature_mode: FeatureMode,
    pub hidden: Vec<usize>,
    pub weight_decay: f64,
    pub penalty_mode: PenaltyMode,
    pub rule_scope: RuleScope,
    /// Train the per-rule adaptive vectors; when false they stay at zero and
    /// every rule constrains the model with its fixed mean.
    pub adaptive: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.3,
            std_max: crate::mmpa::DEFAULT_STD_MAX,
            min_count: crate::mmpa::DEFAULT_MIN_COUNT,
            lr: 1e-4,
            batch_size: 32,
            dropout_p: 0.1,
            clip_norm: 5.0,
            schedule_period: 15.0,
            early_stop_patience: 10,
            max_epochs: 300,
            seeds: DEFAULT_SEEDS.to_vec(),
            feature_mode: FeatureMode::FragmentCounts,
            hidden: vec![128, 128],
            weight_decay: 1e-5,
            penalty_mode: PenaltyMode::Discrete,
            rule_scope: RuleScope::AllMolecules,
            adaptive: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("config: {what}")));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.std_max > 0.0) || self.min_count == 0 {
            return bad("std_max must be > 0 and min_count >= 1");
        }
        if !(self.lr > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("lr, batch_size and max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must be in [0, 1)");
        }
        if !(self.clip_norm > 0.0) || !(self.schedule_period > 0.0) || self.early_stop_patience == 0 {
            return bad("clip_norm, schedule_period and early_stop_patience must be positive");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            mode: self.penalty_mode,
            rule_scope: self.rule_scope,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: ADAM_EPS,
            weight_decay: self.weight_decay,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        let back = TrainConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_and_unknown_keys() {
        let c = TrainConfig::from_json(r#"{"lambda": 0.03, "max_epochs": 5}"#).unwrap();
        assert_eq!(c.lambda, 0.03);
        assert_eq!(c.batch_size, 32);
        assert!(matches!(TrainConfig::from_json(r#"{"lamda": 1}"#), Err(Error::Format(_))));
        assert!(matches!(
            TrainConfig::from_json(r#"{"dropout_p": 1.5}"#),
            Err(Error::InvalidArgument(_))
        ));
    }
}
