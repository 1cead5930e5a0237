use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::features::{FeatureLayout, FeatureMode};
use crate::error::{Error, Result};
use crate::loss::{build_loss, AdaptiveUnit, Batch, CompiledRules, LossBreakdown};
use crate::mmpa::{rules_to_string, RuleSet};
use crate::nn::{
    adam_step, clip_global_norm, lr_schedule, mlp_init, AdamState, Mat, MlpRegressor, Mode, Normalization, Tape,
};
use crate::rng::{Purpose, RandomStream};
use crate::splits::{Dataset, SplitAssignment};

pub const RUN_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Valid,
    Test,
}

impl SplitPart {
    pub fn ids(self, split: &SplitAssignment) -> &[usize] {
        match self {
            SplitPart::Train => &split.train_ids,
            SplitPart::Valid => &split.valid_ids,
            SplitPart::Test => &split.test_ids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    /// `1 - SS_res / SS_tot` about this split's own target mean. When the
    /// targets are constant it is 1 for exact predictions and 0 otherwise.
    pub r2: f64,
    pub n: usize,
    pub split: SplitPart,
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(preds.len(), targets.len());
    let n = preds.len().max(1) as f64;
    (preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n).sqrt()
}

pub fn metrics(preds: &[f64], targets: &[f64], split: SplitPart) -> Metrics {
    let n = targets.len();
    let mean = targets.iter().sum::<f64>() / n.max(1) as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Metrics {
        rmse: rmse(preds, targets),
        r2,
        n,
        split,
    }
}

/// Refuses rule sets that may have seen test molecules.
pub fn check_leakage(rs: &RuleSet, ds: &Dataset, split: &SplitAssignment) -> Result<()> {
    match &rs.provenance.molecule_keys {
        Some(keys) => {
            let keys: BTreeSet<&String> = keys.iter().collect();
            let test_keys = ds.keys(&split.test_ids);
            let hits = test_keys.iter().filter(|k| keys.contains(k)).count();
            if hits > 0 {
                return Err(Error::Leakage(format!(
                    "{hits} test molecule(s) were used to mine the rules"
                )));
            }
            Ok(())
        }
        None if rs.provenance.attested_disjoint => Ok(()),
        None => Err(Error::Leakage(
            "rule provenance lists no source molecules and is not attested disjoint".into(),
        )),
    }
}

/// A trained regressor with everything needed to featurize new molecules.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: MlpRegressor,
    pub unit: AdaptiveUnit,
    pub layout: FeatureLayout,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    dims: Vec<usize>,
    dropout_p: f64,
    params: Vec<f64>,
    normalization: Normalization,
    adaptive_shape: (usize, usize),
    adaptive: Vec<f64>,
    layout: FeatureLayout,
}

impl TrainedModel {
    pub fn predict_rows(&self, x: &Mat) -> Result<Vec<f64>> {
        self.model.predict_batch(x, Mode::Eval)
    }

    pub fn features(&self, ds: &Dataset, ids: &[usize]) -> Mat {
        let rows: Vec<f64> = ids
            .iter()
            .flat_map(|&i| self.layout.featurize_molecule(ds.molecule(i)))
            .collect();
        Mat::from_shape_vec((ids.len(), self.layout.width()), rows).expect("rows share width")
    }

    pub fn to_json(&self) -> String {
        let c = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            dims: self.model.dims.clone(),
            dropout_p: self.model.dropout_p,
            params: self.model.to_flat(),
            normalization: self.model.norm.clone(),
            adaptive_shape: self.unit.theta.dim(),
            adaptive: self.unit.theta.iter().copied().collect(),
            layout: self.layout.clone(),
        };
        serde_json::to_string(&c).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint format_version {}", c.format_version)));
        }
        let mut model = mlp_init(&c.dims, RandomStream::new(0, Purpose::Init), c.dropout_p)?;
        model.load_flat(&c.params)?;
        if c.normalization.in_shift.len() != c.dims[0] || c.normalization.in_scale.len() != c.dims[0] {
            return Err(Error::Format("checkpoint normalization width".into()));
        }
        model.norm = c.normalization;
        if c.layout.width() != c.dims[0] {
            return Err(Error::Format("checkpoint layout width does not match dims".into()));
        }
        let theta = Mat::from_shape_vec(c.adaptive_shape, c.adaptive)
            .map_err(|e| Error::Format(format!("checkpoint adaptive vectors: {e}")))?;
        Ok(TrainedModel {
            model,
            unit: AdaptiveUnit { theta },
            layout: c.layout,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Predictions and metrics of a trained model on some dataset rows.
pub fn evaluate(tm: &TrainedModel, ds: &Dataset, ids: &[usize], part: SplitPart) -> Result<Metrics> {
    if ids.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs at least one row".into()));
    }
    let preds = tm.predict_rows(&tm.features(ds, ids))?;
    let targets: Vec<f64> = ids.iter().map(|&i| ds.target(i)).collect();
    Ok(metrics(&preds, &targets, part))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Batch means of the loss parts.
    pub loss: LossBreakdown,
    pub valid_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSetSummary {
    /// Hash of the rule file text of the rules that entered the loss.
    pub sha256: String,
    pub n_rules: usize,
    pub origin: String,
    pub source_dataset_sha256: String,
    pub std_max: f64,
    pub min_count: usize,
    /// Mined from a dataset other than the one being trained on.
    pub transferred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    /// Effective configuration: `lambda` is 0 whenever no rule entered the loss.
    pub config: TrainConfig,
    pub seed: u64,
    pub dataset_sha256: String,
    pub split_sha256: String,
    pub split_method: String,
    pub feature_mode: FeatureMode,
    pub input_width: usize,
    pub ruleset: Option<RuleSetSummary>,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub metrics: Vec<Metrics>,
    pub wall_clock_s: f64,
}

impl RunRecord {
    pub fn metric(&self, part: SplitPart) -> Option<&Metrics> {
        self.metrics.iter().find(|m| m.split == part)
    }

    pub fn test_rmse(&self) -> f64 {
        self.metric(SplitPart::Test).map_or(f64::NAN, |m| m.rmse)
    }

    /// Hash of everything except wall-clock time.
    pub fn content_sha256(&self) -> String {
        let mut r = self.clone();
        r.wall_clock_s = 0.0;
        hex::encode(Sha256::digest(serde_json::to_string(&r).expect("record serializes").as_bytes()))
    }

    /// The flat per-run metrics object written next to each run.
    pub fn metrics_json(&self, part: SplitPart) -> serde_json::Value {
        let m = self.metric(part);
        serde_json::json!({
            "format_version": RUN_FORMAT_VERSION,
            "rmse": m.map(|m| m.rmse),
            "r2": m.map(|m| m.r2),
            "n": m.map(|m| m.n),
            "split": part,
            "seed": self.seed,
            "lambda": self.config.lambda,
            "std_max": self.config.std_max,
            "mode": self.config.penalty_mode,
            "ruleset_sha256": self.ruleset.as_ref().map(|r| r.sha256.clone()),
        })
    }
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: MlpRegressor,
    pub unit: AdaptiveUnit,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn select(x: &Mat, ids: &[usize]) -> Mat {
    x.select(Axis(0), ids)
}

/// Mini-batch training on precomputed features. Rows `valid_ids` drive early
/// stopping (the training rows are used when it is empty); the returned
/// model holds the parameters of the best validation epoch.
pub fn fit(
    x: &Mat,
    y: &[f64],
    train_ids: &[usize],
    valid_ids: &[usize],
    rules: Option<&CompiledRules>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Fit> {
    cfg.validate()?;
    if train_ids.is_empty() {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    let rules = rules.filter(|r| !r.is_empty() && cfg.lambda != 0.0);
    let loss_cfg = cfg.loss();
    let adam_cfg = cfg.adam();
    let x_train = select(x, train_ids);
    let y_train: Vec<f64> = train_ids.iter().map(|&i| y[i]).collect();
    let monitor = if valid_ids.is_empty() { train_ids } else { valid_ids };
    let x_mon = select(x, monitor);
    let y_mon: Vec<f64> = monitor.iter().map(|&i| y[i]).collect();

    let mut dims = vec![x.ncols()];
    dims.extend(&cfg.hidden);
    dims.push(1);
    let mut model = mlp_init(&dims, RandomStream::new(seed, Purpose::Init), cfg.dropout_p)?;
    model.norm = Normalization::fit(&x_train, &y_train);
    let mut unit = AdaptiveUnit::zeros(rules.map_or(0, |r| r.len()), model.repr_dim());
    let mut shapes: Vec<(usize, usize)> = model.params().iter().map(|m| m.dim()).collect();
    shapes.push(unit.theta.dim());
    let mut adam = AdamState::new(&shapes);

    let dropout = RandomStream::new(seed, Purpose::Dropout);
    let shuffle = RandomStream::new(seed, Purpose::Shuffle);
    let n_batches = train_ids.len().div_ceil(cfg.batch_size);
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, MlpRegressor, AdaptiveUnit)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_ids.len()).collect();
        order.shuffle(&mut shuffle.sub(epoch as u64).rng());
        let mut sums = [0.0; 3];
        for (k, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let step = (epoch * n_batches + k) as u64;
            let lr = lr_schedule(epoch as f64 + k as f64 / n_batches as f64, cfg.lr, cfg.schedule_period);
            let xb = select(&x_train, chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y_train[i]).collect();
            let masks = (cfg.dropout_p > 0.0).then(|| {
                let ids: Vec<u64> = (0..chunk.len() as u64).map(|b| (step << 16) | b).collect();
                model.dropout_masks(dropout, &ids)
            });
            let batch = Batch {
                x: &xb,
                targets: &yb,
                masks,
            };
            let mut tape = Tape::new();
            let g = build_loss(&mut tape, &model, &unit, rules, &loss_cfg, &batch)?;
            let parts = g.breakdown(&tape);
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: k,
                    detail: format!("mse {} ssr {}", parts.mse, parts.ssr),
                });
            }
            sums[0] += parts.mse;
            sums[1] += parts.ssr;
            sums[2] += parts.total;
            let mut grads_src = tape.backward(g.total);
            let mut grads: Vec<Mat> = g
                .params
                .vars()
                .into_iter()
                .zip(&shapes)
                .map(|(v, &s)| grads_src.take_or_zeros(v, s))
                .collect();
            let mut theta_grad = grads_src.take_or_zeros(g.theta, unit.theta.dim());
            if !cfg.adaptive {
                theta_grad.fill(0.0);
            }
            grads.push(theta_grad);
            clip_global_norm(&mut grads, cfg.clip_norm);
            let mut params = model.params_mut();
            params.push(&mut unit.theta);
            adam_step(&mut adam, &adam_cfg, lr, &mut params, &grads);
        }
        let preds = model.predict_batch(&x_mon, Mode::Eval)?;
        let v = rmse(&preds, &y_mon);
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                step: n_batches,
                detail: "validation predictions are not finite".into(),
            });
        }
        let nb = n_batches as f64;
        epochs.push(EpochLog {
            epoch,
            lr: lr_schedule(epoch as f64, cfg.lr, cfg.schedule_period),
            loss: LossBreakdown {
                mse: sums[0] / nb,
                ssr: sums[1] / nb,
                total: sums[2] / nb,
                lambda: if rules.is_some() { cfg.lambda } else { 0.0 },
                per_rule: Vec::new(),
            },
            valid_rmse: v,
        });
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, epoch, model.clone(), unit.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (_, best_epoch, model, unit) = best.expect("at least one epoch");
    Ok(Fit {
        model,
        unit,
        epochs,
        best_epoch,
    })
}

/// Rules restricted to the layout, or `None` when nothing would enter the loss.
pub fn effective_rules(rs: Option<&RuleSet>, layout: &FeatureLayout, lambda: f64) -> Option<RuleSet> {
    let rs = rs?;
    if lambda == 0.0 {
        return None;
    }
    let r = rs.restrict_to(&layout.slots);
    (!r.is_empty()).then_some(r)
}

/// Trains one model. A supplied rule set must pass [`check_leakage`]; rules
/// whose fragments are not layout slots are dropped.
pub fn train(
    ds: &Dataset,
    split: &SplitAssignment,
    layout: &FeatureLayout,
    rs: Option<&RuleSet>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(TrainedModel, RunRecord)> {
    layout.validate()?;
    let x = layout.featurize(ds);
    train_on_features(ds, &x, split, layout, rs, cfg, seed)
}

/// [`train`] with a feature matrix already computed by `layout.featurize(ds)`.
pub fn train_on_features(
    ds: &Dataset,
    x: &Mat,
    split: &SplitAssignment,
    layout: &FeatureLayout,
    rs: Option<&RuleSet>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(TrainedModel, RunRecord)> {
    let start = Instant::now();
    split.validate(ds)?;
    if x.dim() != (ds.len(), layout.width()) {
        return Err(Error::DimensionMismatch {
            expected: layout.width(),
            got: x.ncols(),
        });
    }
    if let Some(rs) = rs {
        check_leakage(rs, ds, split)?;
    }
    let used = effective_rules(rs, layout, cfg.lambda);
    let compiled = used
        .as_ref()
        .map(|r| CompiledRules::from_rule_set(r, &layout.columns(), layout.width()))
        .transpose()?;
    let y = ds.targets();
    let f = fit(x, &y, &split.train_ids, &split.valid_ids, compiled.as_ref(), cfg, seed)?;
    let tm = TrainedModel {
        model: f.model,
        unit: f.unit,
        layout: layout.clone(),
    };
    let mut metrics_out = Vec::new();
    for part in [SplitPart::Train, SplitPart::Valid, SplitPart::Test] {
        let ids = part.ids(split);
        if !ids.is_empty() {
            let preds = tm.predict_rows(&select(x, ids))?;
            let t: Vec<f64> = ids.iter().map(|&i| y[i]).collect();
            metrics_out.push(metrics(&preds, &t, part));
        }
    }
    let mut config = cfg.clone();
    if used.is_none() {
        config.lambda = 0.0;
    }
    let ruleset = used.as_ref().map(|r| RuleSetSummary {
        sha256: hex::encode(Sha256::digest(rules_to_string(r).as_bytes())),
        n_rules: r.len(),
        origin: r.provenance.origin.clone(),
        source_dataset_sha256: r.provenance.dataset_sha256.clone(),
        std_max: r.provenance.std_max,
        min_count: r.provenance.min_count,
        transferred: r.provenance.dataset_sha256 != ds.sha256(),
    });
    let record = RunRecord {
        format_version: RUN_FORMAT_VERSION,
        config,
        seed,
        dataset_sha256: ds.sha256().to_string(),
        split_sha256: split.sha256(),
        split_method: split.spec.name().to_string(),
        feature_mode: layout.mode,
        input_width: layout.width(),
        ruleset,
        epochs: f.epochs,
        best_epoch: f.best_epoch,
        metrics: metrics_out,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok((tm, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_definitions() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], SplitPart::Test);
        assert_eq!((m.rmse, m.r2), (0.0, 1.0));
        let m = metrics(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], SplitPart::Test);
        assert_eq!(m.r2, 0.0);
        assert!((m.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
