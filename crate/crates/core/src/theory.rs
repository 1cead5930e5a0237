//! Numerical checks of the rule-spread bound: a model with pointwise error
//! at most `e` leaves each rule's residual property-change spread at most `2e`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chem::{atom_counts, N_ELEMENTS};
use crate::error::{Error, Result};
use crate::mmpa::{pairs_from_cuts, row_cuts, RuleSet, DEFAULT_MAX_HEAVY_ATOMS};
use crate::splits::{Dataset, SplitAssignment};
use crate::train::{FeatureMode, TrainedModel};

/// Relative tolerance for bound comparisons.
pub const BOUND_RTOL: f64 = 1e-9;

/// One rule application: `(P(c), P(r(c)), F(c), F(r(c)))`.
pub type Context = [f64; 4];

/// Per-rule contexts with a shared pointwise error bound `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInstance {
    rules: Vec<Vec<Context>>,
    e: f64,
}

impl BoundInstance {
    /// Fails with [`Error::InvariantViolation`] if any `|P - F| > e`.
    pub fn new(rules: Vec<Vec<Context>>, e: f64) -> Result<Self> {
        if !(e >= 0.0) {
            return Err(Error::InvalidArgument("e must be >= 0".into()));
        }
        for (r, ctx) in rules.iter().enumerate() {
            for (k, c) in ctx.iter().enumerate() {
                if (c[0] - c[2]).abs() > e || (c[1] - c[3]).abs() > e {
                    return Err(Error::InvariantViolation(format!(
                        "rule {r}, context {k}: |P - F| exceeds e = {e}"
                    )));
                }
            }
        }
        Ok(BoundInstance { rules, e })
    }

    pub fn rules(&self) -> &[Vec<Context>] {
        &self.rules
    }

    pub fn e(&self) -> f64 {
        self.e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBound {
    pub n_contexts: usize,
    /// Population std of `dP - dF` across contexts.
    pub sigma_residual: f64,
    /// `E[(dP - dF)^2]`.
    pub mean_sq_residual: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// `E[(X - Y)^2]` over paired samples.
pub fn mean_sq_diff(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    xs.iter().zip(ys).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / xs.len() as f64
}

fn le_rel(a: f64, b: f64) -> bool {
    a <= b + BOUND_RTOL * b.abs().max(f64::MIN_POSITIVE)
}

/// `Var[X] <= E[(X - a)^2]` for a constant `a`: the variance is the minimum
/// mean squared deviation from any constant.
pub fn variance_below_constant_deviation(xs: &[f64], a: f64) -> bool {
    le_rel(variance(xs), mean_sq_diff(xs, &vec![a; xs.len()]))
}

/// `Var[X - Y] <= E[(X - Y)^2]`, the form used on residuals.
pub fn residual_variance_below_mean_square(xs: &[f64], ys: &[f64]) -> bool {
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    le_rel(variance(&d), mean_sq_diff(xs, ys))
}

/// Residual spread of every rule against the `2e` bound.
pub fn verify_sigma_bound(inst: &BoundInstance) -> Vec<RuleBound> {
    let bound = 2.0 * inst.e;
    inst.rules
        .iter()
        .map(|ctx| {
            if ctx.is_empty() {
                return RuleBound {
                    n_contexts: 0,
                    sigma_residual: 0.0,
                    mean_sq_residual: 0.0,
                    bound,
                    slack: bound,
                    holds: true,
                };
            }
            let resid: Vec<f64> = ctx.iter().map(|c| (c[1] - c[0]) - (c[3] - c[2])).collect();
            let sigma = variance(&resid).sqrt();
            let msq = mean_sq_diff(&resid, &vec![0.0; resid.len()]);
            RuleBound {
                n_contexts: ctx.len(),
                sigma_residual: sigma,
                mean_sq_residual: msq,
                bound,
                slack: bound - sigma,
                holds: le_rel(msq, bound * bound) && le_rel(sigma, bound),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleAudit {
    pub frag_a: String,
    pub frag_b: String,
    pub delta_std: f64,
    pub n_contexts: usize,
    pub sigma_residual: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Max absolute test error.
    pub e_hat: f64,
    /// Max absolute error over the compounds that appear in audited contexts.
    pub e_hat_contexts: f64,
    pub rules: Vec<RuleAudit>,
    /// Share of audited rules (those with contexts) satisfying the bound at `e_hat_contexts`.
    pub fraction_holding: f64,
}

/// Rule contexts among test rows as `(rule index, row of frag_a, row of frag_b)`.
fn test_contexts(tm: &TrainedModel, ds: &Dataset, test: &[usize], rs: &RuleSet) -> Vec<(usize, usize, usize)> {
    let by_pair: BTreeMap<(&str, &str), usize> = rs
        .rules
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.frag_a.as_str(), r.frag_b.as_str()), i))
        .collect();
    let mut out = Vec::new();
    if tm.layout.mode == FeatureMode::AtomCounts {
        // single-atom replacements: count vectors differ by e_a - e_b
        let counts: Vec<[u32; N_ELEMENTS]> = test.iter().map(|&i| atom_counts(ds.molecule(i))).collect();
        let slots = &tm.layout.slots;
        for x in 0..test.len() {
            for y in 0..test.len() {
                let (mut plus, mut minus, mut other) = (None, None, false);
                for k in 0..N_ELEMENTS {
                    match counts[x][k] as i64 - counts[y][k] as i64 {
                        0 => {}
                        1 if plus.is_none() => plus = Some(k),
                        -1 if minus.is_none() => minus = Some(k),
                        _ => other = true,
                    }
                }
                if let (Some(a), Some(b), false) = (plus, minus, other) {
                    if let Some(&r) = by_pair.get(&(slots[a].as_str(), slots[b].as_str())) {
                        out.push((r, test[x], test[y]));
                    }
                }
            }
        }
    } else {
        let mols: Vec<_> = test.iter().map(|&i| ds.molecule(i)).collect();
        let cuts = row_cuts(&mols, DEFAULT_MAX_HEAVY_ATOMS);
        for p in pairs_from_cuts(&cuts, &vec![0.0; test.len()]) {
            if let Some(&r) = by_pair.get(&(p.frag_a.as_str(), p.frag_b.as_str())) {
                out.push((r, test[p.mol_a], test[p.mol_b]));
            }
        }
    }
    out
}

/// Checks the bound on a trained model over the test split's rule contexts.
/// A context is `c = row of frag_b`, `r(c) = row of frag_a`, so `dP` matches
/// the rule's `delta_mean` orientation.
pub fn audit_trained_model(tm: &TrainedModel, ds: &Dataset, split: &SplitAssignment, rs: &RuleSet) -> Result<AuditReport> {
    let test = &split.test_ids;
    if test.is_empty() {
        return Err(Error::NoContexts);
    }
    let preds = tm.predict_rows(&tm.features(ds, test))?;
    let pred: BTreeMap<usize, f64> = test.iter().copied().zip(preds.iter().copied()).collect();
    let e_hat = test.iter().map(|&i| (pred[&i] - ds.target(i)).abs()).fold(0.0, f64::max);
    let ctx = test_contexts(tm, ds, test, rs);
    if ctx.is_empty() {
        return Err(Error::NoContexts);
    }
    let err = |i: usize| (pred[&i] - ds.target(i)).abs();
    let e_ctx = ctx.iter().flat_map(|&(_, a, b)| [err(a), err(b)]).fold(0.0, f64::max);
    let mut per_rule: Vec<Vec<Context>> = vec![Vec::new(); rs.len()];
    for &(r, a, b) in &ctx {
        per_rule[r].push([ds.target(b), ds.target(a), pred[&b], pred[&a]]);
    }
    let inst = BoundInstance::new(per_rule, e_ctx)?;
    let checks = verify_sigma_bound(&inst);
    let rules: Vec<RuleAudit> = rs
        .rules
        .iter()
        .zip(checks)
        .filter(|(_, c)| c.n_contexts > 0)
        .map(|(r, c)| RuleAudit {
            frag_a: r.frag_a.clone(),
            frag_b: r.frag_b.clone(),
            delta_std: r.delta_std,
            n_contexts: c.n_contexts,
            sigma_residual: c.sigma_residual,
            bound: c.bound,
            slack: c.slack,
            holds: c.holds,
        })
        .collect();
    let fraction_holding = rules.iter().filter(|r| r.holds).count() as f64 / rules.len() as f64;
    Ok(AuditReport {
        e_hat,
        e_hat_contexts: e_ctx,
        rules,
        fraction_holding,
    })
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    cov / (vx * vy).sqrt()
}

/// Ranks from 1, ties sharing their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&ranks(xs), &ranks(ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_offset_models_have_zero_residual() {
        let ctx = vec![vec![[1.0, 3.0, 1.0, 3.0], [2.0, 5.0, 2.0, 5.0]]];
        let r = verify_sigma_bound(&BoundInstance::new(ctx, 0.1).unwrap());
        assert_eq!(r[0].sigma_residual, 0.0);
        let ctx = vec![vec![[1.0, 3.0, 1.5, 3.5], [2.0, 5.0, 2.5, 5.5]]];
        let r = verify_sigma_bound(&BoundInstance::new(ctx, 0.5).unwrap());
        assert_eq!(r[0].sigma_residual, 0.0);
        assert!(r[0].holds);
    }

    #[test]
    fn construction_rejects_large_errors() {
        assert!(matches!(
            BoundInstance::new(vec![vec![[0.0, 0.0, 2.0, 0.0]]], 1.0),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn extreme_residuals_meet_the_bound() {
        // errors alternate between +e and -e: residuals are +-2e
        let e = 0.25;
        let ctx = vec![vec![[0.0, 0.0, -e, e], [0.0, 0.0, e, -e]]];
        let r = verify_sigma_bound(&BoundInstance::new(ctx, e).unwrap());
        assert!((r[0].sigma_residual - 2.0 * e).abs() < 1e-15);
        assert!(r[0].holds);
    }

    #[test]
    fn rank_correlation_with_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }
}
