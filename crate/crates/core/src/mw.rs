//! The molecular-weight extrapolation benchmark: a seeded synthetic corpus,
//! the exact element-substitution rules, a least-squares reference and the
//! rule-noise sweep.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{canonical_smiles, molecular_weight, parse_smiles, Element};
use crate::error::{Error, Result};
use crate::mmpa::{element_rules, RuleSet};
use crate::nn::Mat;
use crate::rng::{Purpose, RandomStream};
use crate::splits::{mw_range_split, Dataset, Row, SplitAssignment};
use crate::train::{
    metrics, train_on_features, FeatureLayout, Metrics, RunRecord, SeedSummary, SplitPart, TrainConfig, TrainedModel,
};

/// Corpus generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MwCorpusConfig {
    pub n_per_bin: usize,
    /// Integer bins `[mw_min, mw_max)`, one Dalton wide.
    pub mw_min: u32,
    pub mw_max: u32,
    pub seed: u64,
    pub max_rounds: usize,
}

impl Default for MwCorpusConfig {
    fn default() -> Self {
        MwCorpusConfig {
            n_per_bin: 5,
            mw_min: 160,
            mw_max: 700,
            seed: 1024,
            max_rounds: 150,
        }
    }
}

/// Training settings for the benchmark. The clean, exactly linear target
/// needs a larger step size, no dropout and a patience longer than one
/// restart period to reach sub-Dalton error within the epoch budget.
/// The adaptive vectors are off: with exact rules there is nothing for them
/// to correct, and left on they absorb any noise added to the rule deltas.
pub fn bench_train_config() -> TrainConfig {
    TrainConfig {
        lambda: 3.0,
        lr: 3e-3,
        dropout_p: 0.0,
        hidden: vec![64, 64],
        early_stop_patience: 30,
        feature_mode: crate::train::FeatureMode::AtomCounts,
        adaptive: false,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct MwCorpus {
    /// Targets are molecular weights; rows are ordered by bin, then SMILES.
    pub dataset: Dataset,
    pub unfilled_bins: Vec<u32>,
    pub n_bins: usize,
}

// Heavy elements the generator draws from, with relative weights.
const GROWTH: [(Element, u32); 11] = [
    (Element::C, 40),
    (Element::N, 8),
    (Element::O, 10),
    (Element::F, 4),
    (Element::Cl, 4),
    (Element::Br, 3),
    (Element::I, 2),
    (Element::S, 4),
    (Element::P, 2),
    (Element::B, 2),
    (Element::Si, 3),
];
const MAX_ATOMS: usize = 120;

struct Node {
    el: Element,
    order: u8,
    used: u8,
    children: Vec<usize>,
}

fn valence(e: Element) -> u8 {
    e.valences()[0]
}

fn atom_text(n: &Node) -> String {
    if n.el == Element::Si {
        match valence(n.el) - n.used {
            0 => "[Si]".into(),
            1 => "[SiH]".into(),
            h => format!("[SiH{h}]"),
        }
    } else {
        n.el.symbol().to_string()
    }
}

fn write_tree(nodes: &[Node], i: usize, out: &mut String) {
    out.push_str(&atom_text(&nodes[i]));
    let kids = &nodes[i].children;
    for (k, &c) in kids.iter().enumerate() {
        let last = k + 1 == kids.len();
        if !last {
            out.push('(');
        }
        match nodes[c].order {
            2 => out.push('='),
            3 => out.push('#'),
            _ => {}
        }
        write_tree(nodes, c, out);
        if !last {
            out.push(')');
        }
    }
}

/// Grows a random acyclic molecule until its weight reaches `target`.
/// Returns `None` when growth dead-ends before the target.
pub fn grow_molecule<R: Rng>(rng: &mut R, target: f64) -> Option<String> {
    let h = Element::H.mass();
    let pick = WeightedIndex::new(GROWTH.iter().map(|g| g.1)).expect("positive weights");
    let root = loop {
        let e = GROWTH[pick.sample(rng)].0;
        if valence(e) >= 2 {
            break e;
        }
    };
    let mut nodes = vec![Node {
        el: root,
        order: 0,
        used: 0,
        children: Vec::new(),
    }];
    let mut mass = root.mass() + valence(root) as f64 * h;
    while mass < target {
        if nodes.len() >= MAX_ATOMS {
            return None;
        }
        let open: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].used < valence(nodes[i].el)).collect();
        if open.is_empty() {
            return None;
        }
        let p = open[rng.random_range(0..open.len())];
        let e = GROWTH[pick.sample(rng)].0;
        let room = (valence(nodes[p].el) - nodes[p].used).min(valence(e));
        let r: f64 = rng.random();
        let order = if room >= 3 && r < 0.02 {
            3
        } else if room >= 2 && r < 0.12 {
            2
        } else {
            1
        };
        mass += e.mass() + (valence(e) - order) as f64 * h - order as f64 * h;
        nodes[p].used += order;
        let id = nodes.len();
        nodes[p].children.push(id);
        nodes.push(Node {
            el: e,
            order,
            used: order,
            children: Vec::new(),
        });
    }
    let mut s = String::new();
    write_tree(&nodes, 0, &mut s);
    Some(s)
}

/// Fills every integer weight bin with `n_per_bin` distinct molecules by
/// seeded growth and rejection. Raises [`Error::Generation`] when more than
/// 10% of the bins stay short after `max_rounds`.
pub fn generate_mw_corpus(cfg: &MwCorpusConfig) -> Result<MwCorpus> {
    if cfg.mw_max <= cfg.mw_min || cfg.n_per_bin == 0 {
        return Err(Error::InvalidArgument("need mw_min < mw_max and n_per_bin >= 1".into()));
    }
    let n_bins = (cfg.mw_max - cfg.mw_min) as usize;
    let mut bins: Vec<Vec<(String, f64)>> = vec![Vec::new(); n_bins];
    let mut seen = BTreeSet::new();
    let base = RandomStream::new(cfg.seed, Purpose::Synth);
    for round in 0..cfg.max_rounds {
        // two candidates per missing molecule, aimed a little below the bin
        let targets: Vec<f64> = bins
            .iter()
            .enumerate()
            .flat_map(|(b, v)| {
                let need = cfg.n_per_bin.saturating_sub(v.len());
                std::iter::repeat_n(cfg.mw_min as f64 + b as f64, 2 * need)
            })
            .collect();
        if targets.is_empty() {
            break;
        }
        let found: Vec<Option<(String, f64)>> = targets
            .par_iter()
            .enumerate()
            .map(|(k, &lo)| {
                let mut rng = base.sub(((round as u64) << 32) | k as u64).rng();
                let target = lo - 20.0 * rng.random::<f64>() + 1.0;
                let smi = grow_molecule(&mut rng, target)?;
                let m = parse_smiles(&smi).ok()?;
                Some((canonical_smiles(&m), molecular_weight(&m)))
            })
            .collect();
        for (smi, mw) in found.into_iter().flatten() {
            if mw < cfg.mw_min as f64 || mw >= cfg.mw_max as f64 {
                continue;
            }
            let b = (mw.floor() as u32 - cfg.mw_min) as usize;
            if bins[b].len() < cfg.n_per_bin && seen.insert(smi.clone()) {
                bins[b].push((smi, mw));
            }
        }
    }
    let unfilled_bins: Vec<u32> = (0..n_bins)
        .filter(|&b| bins[b].len() < cfg.n_per_bin)
        .map(|b| cfg.mw_min + b as u32)
        .collect();
    if unfilled_bins.len() * 10 > n_bins {
        return Err(Error::Generation(format!(
            "{} of {n_bins} weight bins could not be filled",
            unfilled_bins.len()
        )));
    }
    let rows: Vec<Row> = bins
        .into_iter()
        .flat_map(|mut v| {
            v.sort_by(|a, b| a.0.cmp(&b.0));
            v
        })
        .map(|(smiles, target)| Row { smiles, target })
        .collect();
    Ok(MwCorpus {
        dataset: Dataset::from_rows("mw_synthetic", rows)?,
        unfilled_bins,
        n_bins,
    })
}

/// Ordinary least squares with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn fit(x: &Mat, y: &[f64]) -> Result<Self> {
        let (n, d) = x.dim();
        if n != y.len() || n == 0 {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[[i, j]] } else { 1.0 });
        let b = DVector::from_column_slice(y);
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::InvariantViolation(format!("least squares: {e}")))?;
        Ok(LinearModel {
            coef: sol.as_slice()[..d].to_vec(),
            intercept: sol[d],
        })
    }

    pub fn predict(&self, x: &Mat) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.intercept + r.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Everything a benchmark run trains on.
#[derive(Debug, Clone)]
pub struct MwAssets {
    pub dataset: Dataset,
    pub split: SplitAssignment,
    pub layout: FeatureLayout,
    pub x: Mat,
    /// The 66 exact rules.
    pub rules: RuleSet,
}

impl MwAssets {
    pub fn build(dataset: Dataset, train_max: f64, test_min: f64, test_max: f64, seed: u64) -> Result<Self> {
        let split = mw_range_split(&dataset, train_max, test_min, test_max, seed)?;
        Self::with_split(dataset, split)
    }

    pub fn with_split(dataset: Dataset, split: SplitAssignment) -> Result<Self> {
        split.validate(&dataset)?;
        let layout = FeatureLayout::atom_counts();
        let x = layout.featurize(&dataset);
        let rules = element_rules(dataset.sha256());
        Ok(MwAssets {
            dataset,
            split,
            layout,
            x,
            rules,
        })
    }

    pub fn train(&self, rules: Option<&RuleSet>, cfg: &TrainConfig, seed: u64) -> Result<(TrainedModel, RunRecord)> {
        train_on_features(&self.dataset, &self.x, &self.split, &self.layout, rules, cfg, seed)
    }

    /// Least-squares reference fitted on train and valid rows.
    pub fn linear_reference(&self) -> Result<(LinearModel, Metrics)> {
        let fit_ids: Vec<usize> = self.split.train_ids.iter().chain(&self.split.valid_ids).copied().collect();
        let y: Vec<f64> = fit_ids.iter().map(|&i| self.dataset.target(i)).collect();
        let lm = LinearModel::fit(&self.x.select(ndarray::Axis(0), &fit_ids), &y)?;
        let test = &self.split.test_ids;
        let preds = lm.predict(&self.x.select(ndarray::Axis(0), test));
        let t: Vec<f64> = test.iter().map(|&i| self.dataset.target(i)).collect();
        Ok((lm, metrics(&preds, &t, SplitPart::Test)))
    }
}

/// How rule means are perturbed in the noise sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RuleNoise {
    /// One draw per fragment; a rule moves by `s * (z_a - z_b)`. For element
    /// rules this is noise on the atomic masses themselves.
    #[default]
    PerFragment,
    /// One independent draw per rule.
    PerRule,
}

/// The rule set with means perturbed at scale `s`. The standard normal
/// draws depend only on `seed`, so all levels share a noise direction.
pub fn noisy_rules(rules: &RuleSet, s: f64, seed: u64, kind: RuleNoise) -> RuleSet {
    let mut rng = RandomStream::new(seed, Purpose::Noise).rng();
    match kind {
        RuleNoise::PerRule => {
            let z: Vec<f64> = (0..rules.len()).map(|_| rng.sample(StandardNormal)).collect();
            rules.with_perturbed_means(|i| s * z[i])
        }
        RuleNoise::PerFragment => {
            let z: Vec<f64> = (0..rules.slot_count()).map(|_| rng.sample(StandardNormal)).collect();
            let slot = |f: &String| z[rules.fragment_index[f]];
            rules.with_perturbed_means(|i| s * (slot(&rules.rules[i].frag_a) - slot(&rules.rules[i].frag_b)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub noise: f64,
    pub test_rmse: SeedSummary,
}

/// Retrains with noisy rule means at every level, over `cfg.seeds`. Output
/// is sorted by noise level.
pub fn mw_noise_sweep(
    assets: &MwAssets,
    cfg: &TrainConfig,
    levels: &[f64],
    kind: RuleNoise,
) -> Result<Vec<NoisePoint>> {
    let mut levels = levels.to_vec();
    if levels.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("noise levels must be >= 0".into()));
    }
    levels.sort_by(f64::total_cmp);
    levels
        .iter()
        .map(|&s| {
            let rmse = cfg
                .seeds
                .iter()
                .map(|&seed| {
                    let rs = noisy_rules(&assets.rules, s, seed, kind);
                    Ok(assets.train(Some(&rs), cfg, seed)?.1.test_rmse())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(NoisePoint {
                noise: s,
                test_rmse: SeedSummary::new(rmse),
            })
        })
        .collect()
}

/// Mean input sensitivity of each atom-count slot over the first `n` test rows.
pub fn mean_sensitivities(tm: &TrainedModel, assets: &MwAssets, n: usize) -> Result<BTreeMap<String, f64>> {
    let ids: Vec<usize> = assets.split.test_ids.iter().take(n).copied().collect();
    if ids.is_empty() {
        return Err(Error::InvalidArgument("no test rows".into()));
    }
    let g = tm.model.input_sensitivities_batch(&assets.x.select(ndarray::Axis(0), &ids))?;
    Ok(tm
        .layout
        .slots
        .iter()
        .enumerate()
        .map(|(j, s)| (s.clone(), g.column(j).mean().unwrap_or(f64::NAN)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwBenchReport {
    pub corpus_sha256: String,
    pub n_rows: usize,
    pub unfilled_bins: Vec<u32>,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub n_rules: usize,
    pub max_rule_std: f64,
    pub linear: Metrics,
    pub baseline: SeedSummary,
    pub with_rules: SeedSummary,
    /// Mean sensitivity per slot of the first seed's with-rules model over 50 test rows.
    pub sensitivities: BTreeMap<String, f64>,
    pub noise_kind: RuleNoise,
    pub noise: Vec<NoisePoint>,
}

impl MwBenchReport {
    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "corpus {} rows ({} train, {} valid, {} test), {} unfilled bins\n",
            self.n_rows,
            self.n_train,
            self.n_valid,
            self.n_test,
            self.unfilled_bins.len()
        ));
        s.push_str(&format!("{} rules, max sigma = {:.3}\n", self.n_rules, self.max_rule_std));
        s.push_str("model              test_rmse_mean  test_rmse_std\n");
        s.push_str(&format!("linear_regression  {:>14.4}  {:>13}\n", self.linear.rmse, "-"));
        s.push_str(&format!("mlp_baseline       {:>14.4}  {:>13.4}\n", self.baseline.mean, self.baseline.std));
        s.push_str(&format!("mlp_with_rules     {:>14.4}  {:>13.4}\n", self.with_rules.mean, self.with_rules.std));
        for p in &self.noise {
            s.push_str(&format!(
                "noise_{:<13}{:>14.4}  {:>13.4}\n",
                p.noise, p.test_rmse.mean, p.test_rmse.std
            ));
        }
        if let Some(si) = self.sensitivities.get("Si") {
            s.push_str(&format!("mean dF/d#Si over test rows = {si:.3}\n"));
        }
        s
    }
}

/// Baseline, exact rules, least squares and the noise sweep on one corpus.
pub fn run_mw_bench(
    corpus: &MwCorpus,
    split: &SplitAssignment,
    cfg: &TrainConfig,
    noise_levels: &[f64],
    noise_kind: RuleNoise,
) -> Result<MwBenchReport> {
    let assets = MwAssets::with_split(corpus.dataset.clone(), split.clone())?;
    let (_, linear) = assets.linear_reference()?;
    let mut base = Vec::new();
    let mut with = Vec::new();
    let mut sensitivities = BTreeMap::new();
    for (k, &seed) in cfg.seeds.iter().enumerate() {
        base.push(assets.train(None, cfg, seed)?.1.test_rmse());
        let (tm, rec) = assets.train(Some(&assets.rules), cfg, seed)?;
        with.push(rec.test_rmse());
        if k == 0 {
            sensitivities = mean_sensitivities(&tm, &assets, 50)?;
        }
    }
    let with_rules = SeedSummary::new(with);
    // s = 0 is the exact-rule run already trained above
    let mut noise = Vec::new();
    let others: Vec<f64> = noise_levels.iter().copied().filter(|&s| s != 0.0).collect();
    if noise_levels.contains(&0.0) {
        noise.push(NoisePoint {
            noise: 0.0,
            test_rmse: with_rules.clone(),
        });
    }
    noise.extend(mw_noise_sweep(&assets, cfg, &others, noise_kind)?);
    noise.sort_by(|a, b| a.noise.total_cmp(&b.noise));
    Ok(MwBenchReport {
        corpus_sha256: corpus.dataset.sha256().to_string(),
        n_rows: corpus.dataset.len(),
        unfilled_bins: corpus.unfilled_bins.clone(),
        n_train: assets.split.train_ids.len(),
        n_valid: assets.split.valid_ids.len(),
        n_test: assets.split.test_ids.len(),
        n_rules: assets.rules.len(),
        max_rule_std: assets.rules.rules.iter().map(|r| r.delta_std).fold(0.0, f64::max),
        linear,
        baseline: SeedSummary::new(base),
        with_rules,
        sensitivities,
        noise_kind,
        noise,
    })
}
