//! The composite training loss `MSE + lambda * SSR`.
//!
//! For a rule `(i, j)` with mean change `d` the SSR residual at a molecule
//! with features `x` and representation `h` is
//!
//! * discrete: `f(x + e_i) - f(x + e_j) - d - h . theta_r`
//! * analytic: `df/dx_i(x) - df/dx_j(x) - d - h . theta_r`
//!
//! and the penalty is the mean squared residual over (molecule, rule) pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmpa::RuleSet;
use crate::nn::{Bound, Mat, MlpRegressor, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    #[default]
    Discrete,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RuleScope {
    #[default]
    AllMolecules,
    /// Only molecules with a non-zero count in one of the rule's slots.
    ContainingOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub lambda: f64,
    pub mode: PenaltyMode,
    pub rule_scope: RuleScope,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.3,
            mode: PenaltyMode::Discrete,
            rule_scope: RuleScope::AllMolecules,
        }
    }
}

/// Per-rule vectors `theta_r`; row `r` belongs to rule `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveUnit {
    pub theta: Mat,
}

impl AdaptiveUnit {
    pub fn zeros(rules: usize, repr_dim: usize) -> Self {
        AdaptiveUnit {
            theta: Mat::zeros((rules, repr_dim)),
        }
    }

    pub fn rules(&self) -> usize {
        self.theta.nrows()
    }
}

/// `h . theta_r`.
pub fn adaptive_delta(h: &[f64], rule: usize, unit: &AdaptiveUnit) -> Result<f64> {
    if h.len() != unit.theta.ncols() {
        return Err(Error::DimensionMismatch {
            expected: unit.theta.ncols(),
            got: h.len(),
        });
    }
    if rule >= unit.rules() {
        return Err(Error::InvalidArgument(format!("no adaptive vector for rule {rule}")));
    }
    Ok(h.iter().zip(unit.theta.row(rule)).map(|(a, b)| a * b).sum())
}

pub fn mse_loss(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch(preds.len(), targets.len()));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("mse of zero values".into()));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub ssr: f64,
    pub lambda: f64,
    /// Mean squared residual of each rule over its in-scope molecules.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_rule: Vec<f64>,
}

pub fn total_loss(mse: f64, ssr: f64, lambda: f64) -> LossBreakdown {
    LossBreakdown {
        total: mse + lambda * ssr,
        mse,
        ssr,
        lambda,
        per_rule: Vec::new(),
    }
}

/// Rules resolved to feature columns, with the constant matrices the
/// penalty needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRules {
    pub pairs: Vec<(usize, usize)>,
    pub deltas: Vec<f64>,
    pub width: usize,
    /// Distinct columns referenced by some rule, ascending.
    pub slots: Vec<usize>,
}

impl CompiledRules {
    pub fn new(pairs: Vec<(usize, usize)>, deltas: Vec<f64>, width: usize) -> Result<Self> {
        assert_eq!(pairs.len(), deltas.len());
        for &(i, j) in &pairs {
            for s in [i, j] {
                if s >= width {
                    return Err(Error::SlotOutOfRange { slot: s, width });
                }
            }
        }
        let mut slots: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
        slots.sort_unstable();
        slots.dedup();
        Ok(CompiledRules {
            pairs,
            deltas,
            width,
            slots,
        })
    }

    /// Resolves each rule's fragments through `columns` (fragment -> feature column).
    pub fn from_rule_set(rs: &RuleSet, columns: &BTreeMap<String, usize>, width: usize) -> Result<Self> {
        let col = |f: &String| {
            columns
                .get(f)
                .copied()
                .ok_or_else(|| Error::UnknownFragment(f.clone()))
        };
        let mut pairs = Vec::new();
        let mut deltas = Vec::new();
        for r in &rs.rules {
            pairs.push((col(&r.frag_a)?, col(&r.frag_b)?));
            deltas.push(r.delta_mean);
        }
        CompiledRules::new(pairs, deltas, width)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(1 + |slots|) x R`: row `1 + k` carries `+1`/`-1` where slot `k` is
    /// the rule's first/second fragment; row 0 (the unshifted copy) is zero.
    fn discrete_combiner(&self) -> Mat {
        let mut c = Mat::zeros((1 + self.slots.len(), self.len()));
        for (r, &(i, j)) in self.pairs.iter().enumerate() {
            c[[1 + self.slots.binary_search(&i).unwrap(), r]] += 1.0;
            c[[1 + self.slots.binary_search(&j).unwrap(), r]] -= 1.0;
        }
        c
    }

    /// `width x R` with `+1` at `(i, r)` and `-1` at `(j, r)`.
    fn analytic_combiner(&self) -> Mat {
        let mut c = Mat::zeros((self.width, self.len()));
        for (r, &(i, j)) in self.pairs.iter().enumerate() {
            c[[i, r]] += 1.0;
            c[[j, r]] -= 1.0;
        }
        c
    }

    fn scope_mask(&self, x: &Mat) -> Mat {
        Mat::from_shape_fn((x.nrows(), self.len()), |(b, r)| {
            let (i, j) = self.pairs[r];
            if x[[b, i]] > 0.0 || x[[b, j]] > 0.0 {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// A mini-batch of raw features and targets, with optional dropout masks
/// (one `B x width` matrix per hidden layer, one row per molecule).
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub x: &'a Mat,
    pub targets: &'a [f64],
    pub masks: Option<Vec<Mat>>,
}

fn tile_rows(m: &Mat, times: usize) -> Mat {
    let views: Vec<_> = (0..times).map(|_| m.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("same widths")
}

/// Loss nodes recorded on a tape.
#[derive(Debug, Clone)]
pub struct LossGraph {
    pub params: Bound,
    pub theta: Var,
    pub total: Var,
    pub mse: Var,
    pub ssr: Option<Var>,
    pub preds: Var,
    pub lambda: f64,
    per_rule_sq: Option<(Var, Option<Mat>)>,
}

impl LossGraph {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        let mse = tape.scalar(self.mse);
        let ssr = self.ssr.map_or(0.0, |v| tape.scalar(v));
        let mut out = LossBreakdown {
            total: tape.scalar(self.total),
            mse,
            ssr,
            lambda: self.lambda,
            per_rule: Vec::new(),
        };
        if let Some((sq, mask)) = &self.per_rule_sq {
            let sq = tape.value(*sq);
            out.per_rule = (0..sq.ncols())
                .map(|r| {
                    let (mut s, mut n) = (0.0, 0.0);
                    for b in 0..sq.nrows() {
                        let w = mask.as_ref().map_or(1.0, |m| m[[b, r]]);
                        s += w * sq[[b, r]];
                        n += w;
                    }
                    if n > 0.0 {
                        s / n
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        out
    }
}

/// Records `MSE + lambda * SSR` for one batch. With no rules, an empty rule
/// set or `lambda == 0` only the MSE term is built, so those cases train
/// exactly like plain regression.
pub fn build_loss(
    tape: &mut Tape,
    model: &MlpRegressor,
    unit: &AdaptiveUnit,
    rules: Option<&CompiledRules>,
    cfg: &LossConfig,
    batch: &Batch,
) -> Result<LossGraph> {
    let b = batch.x.nrows();
    if b == 0 || batch.targets.len() != b {
        return Err(Error::LengthMismatch(b, batch.targets.len()));
    }
    if batch.x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: batch.x.ncols(),
        });
    }
    let active = rules.filter(|r| !r.is_empty() && cfg.lambda != 0.0);
    if let Some(r) = active {
        if r.width != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                got: r.width,
            });
        }
        if unit.theta.dim() != (r.len(), model.repr_dim()) {
            return Err(Error::DimensionMismatch {
                expected: r.len() * model.repr_dim(),
                got: unit.theta.len(),
            });
        }
    }
    let params = model.bind(tape);
    let theta = tape.var(unit.theta.clone());
    let targets = tape.constant(
        Mat::from_shape_vec((b, 1), batch.targets.to_vec()).expect("target column"),
    );

    let (preds, fwd_h, diff, n_rows) = match (active, cfg.mode) {
        (Some(r), PenaltyMode::Discrete) => {
            let copies = 1 + r.slots.len();
            let mut stacked = tile_rows(batch.x, copies);
            for (k, &s) in r.slots.iter().enumerate() {
                for row in 0..b {
                    stacked[[(1 + k) * b + row, s]] += 1.0;
                }
            }
            let masks: Option<Vec<Mat>> = batch
                .masks
                .as_ref()
                .map(|ms| ms.iter().map(|m| tile_rows(m, copies)).collect());
            let xv = tape.constant(stacked);
            let f = model.forward_tape(tape, &params, xv, masks.as_deref());
            let preds = tape.rows(f.y, 0, b);
            let h = tape.rows(f.h, 0, b);
            // (copies*B) x 1 -> copies x B -> B x copies
            let y = tape.reshape(f.y, copies, b);
            let y = tape.transpose(y);
            let c = tape.constant(r.discrete_combiner());
            let d = tape.matmul(y, c);
            (preds, h, Some(d), b)
        }
        (Some(r), PenaltyMode::Analytic) => {
            let xv = tape.constant(batch.x.clone());
            let f = model.forward_tape(tape, &params, xv, batch.masks.as_deref());
            let sens = model.sensitivity_tape(tape, &params, &f.gates, b);
            let c = tape.constant(r.analytic_combiner());
            let d = tape.matmul(sens, c);
            (f.y, f.h, Some(d), b)
        }
        (None, _) => {
            let xv = tape.constant(batch.x.clone());
            let f = model.forward_tape(tape, &params, xv, batch.masks.as_deref());
            (f.y, f.h, None, b)
        }
    };

    let resid = tape.sub(preds, targets);
    let sq = tape.square(resid);
    let mse = tape.mean(sq);

    let (ssr, per_rule_sq, total) = match (active, diff) {
        (Some(r), Some(d)) => {
            let neg = tape.constant(
                Mat::from_shape_vec((1, r.len()), r.deltas.iter().map(|v| -v).collect()).expect("delta row"),
            );
            let d = tape.add_row(d, neg);
            let tt = tape.transpose(theta);
            let delta = tape.matmul(fwd_h, tt);
            let res = tape.sub(d, delta);
            let sq = tape.square(res);
            let (ssr, mask) = match cfg.rule_scope {
                RuleScope::AllMolecules => (tape.mean(sq), None),
                RuleScope::ContainingOnly => {
                    let m = r.scope_mask(batch.x);
                    let count = m.sum();
                    let masked = tape.mul_const(sq, m.clone());
                    let s = tape.sum(masked);
                    (tape.scale(s, if count > 0.0 { 1.0 / count } else { 0.0 }), Some(m))
                }
            };
            let weighted = tape.scale(ssr, cfg.lambda);
            let total = tape.add(mse, weighted);
            (Some(ssr), Some((sq, mask)), total)
        }
        _ => (None, None, mse),
    };
    debug_assert_eq!(tape.shape(preds).0, n_rows);
    Ok(LossGraph {
        params,
        theta,
        total,
        mse,
        ssr,
        preds,
        lambda: if active.is_some() { cfg.lambda } else { 0.0 },
        per_rule_sq,
    })
}

/// Loss value and its parts for one batch, without gradients.
pub fn evaluate_loss(
    model: &MlpRegressor,
    unit: &AdaptiveUnit,
    rules: Option<&CompiledRules>,
    cfg: &LossConfig,
    batch: &Batch,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let g = build_loss(&mut tape, model, unit, rules, cfg, batch)?;
    Ok(g.breakdown(&tape))
}

/// The SSR penalty alone (with `lambda` forced to 1 so it is always built).
pub fn ssr_penalty(
    model: &MlpRegressor,
    x: &Mat,
    rules: &CompiledRules,
    unit: &AdaptiveUnit,
    cfg: &LossConfig,
) -> Result<f64> {
    let targets = vec![0.0; x.nrows()];
    let cfg = LossConfig { lambda: 1.0, ..*cfg };
    let b = Batch {
        x,
        targets: &targets,
        masks: None,
    };
    Ok(evaluate_loss(model, unit, Some(rules), &cfg, &b)?.ssr)
}
