use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use molrule_core::loss::{PenaltyMode, RuleScope};
use molrule_core::mmpa::{element_rules, load_rules, save_rules, RuleSet};
use molrule_core::mw::{bench_train_config, generate_mw_corpus, run_mw_bench, MwCorpusConfig, RuleNoise};
use molrule_core::splits::{make_split, ClusterBasis, Dataset, ExtremeMode, SplitAssignment, SplitSpec};
use molrule_core::train::{
    evaluate, mine_rules, train, FeatureLayout, FeatureMode, RunRecord, SeedSummary, SplitPart, TrainConfig,
    TrainedModel,
};
use molrule_core::Error;

#[derive(Parser)]
#[command(name = "molrule", version, about = "Rule-constrained molecular property regression")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mine substitution rules from the training rows of a split.
    ExtractRules(ExtractArgs),
    /// Split a dataset and write the assignment as JSON.
    Split(SplitArgs),
    /// Train one model per seed.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one part of a split.
    Eval(EvalArgs),
    /// Generate the synthetic molecular-weight corpus and run the full benchmark.
    MwBench(MwBenchArgs),
}

#[derive(Args)]
struct ExtractArgs {
    dataset: PathBuf,
    /// Required unless --element-mode is given.
    split: Option<PathBuf>,
    #[arg(long, default_value_t = molrule_core::mmpa::DEFAULT_STD_MAX)]
    std_max: f64,
    #[arg(long, default_value_t = molrule_core::mmpa::DEFAULT_MIN_COUNT)]
    min_count: usize,
    /// Emit the exact element-substitution rules instead of mining.
    #[arg(long)]
    element_mode: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    #[value(name = "random_811")]
    Random811,
    #[value(name = "scaffold_811")]
    Scaffold811,
    #[value(name = "butina_tail")]
    ButinaTail,
    #[value(name = "property_extreme")]
    PropertyExtreme,
    #[value(name = "activity_cliff")]
    ActivityCliff,
    #[value(name = "mw_range")]
    MwRange,
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    Molecule,
    MurckoScaffold,
}

#[derive(Clone, Copy, ValueEnum)]
enum Extreme {
    TopExtreme,
    BothExtremes,
}

#[derive(Args)]
struct SplitArgs {
    dataset: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, default_value_t = 1024)]
    seed: u64,
    /// Tanimoto cutoff for butina_tail.
    #[arg(long, default_value_t = 0.7)]
    cutoff: f64,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[arg(long, value_enum, default_value = "molecule")]
    basis: Basis,
    #[arg(long, value_enum, default_value = "both-extremes")]
    extreme: Extreme,
    #[arg(long, default_value_t = 0.75)]
    sim_min: f64,
    #[arg(long, default_value_t = 1.0)]
    delta_min: f64,
    #[arg(long, default_value_t = 600.0)]
    train_max: f64,
    #[arg(long, default_value_t = 600.0)]
    test_min: f64,
    #[arg(long, default_value_t = 700.0)]
    test_max: f64,
    #[arg(short, long)]
    output: PathBuf,
}

/// Training flags; each one overrides the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    std_max: Option<f64>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    schedule_period: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    feature_mode: Option<FeatureArg>,
    #[arg(long, value_enum)]
    penalty_mode: Option<PenaltyArg>,
    #[arg(long, value_enum)]
    rule_scope: Option<ScopeArg>,
    /// Whether the per-rule adaptive vectors are trained.
    #[arg(long)]
    adaptive: Option<bool>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    FragmentCounts,
    AtomCounts,
    CountsPlusFingerprint,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Discrete,
    Analytic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    AllMolecules,
    ContainingOnly,
}

impl Overrides {
    fn apply(&self, mut c: TrainConfig) -> anyhow::Result<TrainConfig> {
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            c = TrainConfig::from_json(&text)?;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v; })*
            };
        }
        set!(lambda => lambda, std_max => std_max, min_count => min_count, lr => lr,
            batch_size => batch_size, dropout => dropout_p, clip_norm => clip_norm,
            schedule_period => schedule_period, patience => early_stop_patience,
            max_epochs => max_epochs, weight_decay => weight_decay, seeds => seeds, hidden => hidden,
            adaptive => adaptive);
        if let Some(f) = self.feature_mode {
            c.feature_mode = match f {
                FeatureArg::FragmentCounts => FeatureMode::FragmentCounts,
                FeatureArg::AtomCounts => FeatureMode::AtomCounts,
                FeatureArg::CountsPlusFingerprint => FeatureMode::CountsPlusFingerprint,
            };
        }
        if let Some(p) = self.penalty_mode {
            c.penalty_mode = match p {
                PenaltyArg::Discrete => PenaltyMode::Discrete,
                PenaltyArg::Analytic => PenaltyMode::Analytic,
            };
        }
        if let Some(s) = self.rule_scope {
            c.rule_scope = match s {
                ScopeArg::AllMolecules => RuleScope::AllMolecules,
                ScopeArg::ContainingOnly => RuleScope::ContainingOnly,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    split: PathBuf,
    /// Rule file; omit for a plain regression baseline.
    rules: Option<PathBuf>,
    /// Rule file whose fragments define the feature slots without entering the loss.
    #[arg(long)]
    slots_from: Option<PathBuf>,
    /// Folded fingerprint bits for counts_plus_fingerprint.
    #[arg(long, default_value_t = 256)]
    fingerprint_bits: usize,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    PerFragment,
    PerRule,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartArg {
    Train,
    Valid,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    dataset: PathBuf,
    split: PathBuf,
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    part: PartArg,
    /// Optional metrics file; the metrics are always printed.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MwBenchArgs {
    #[arg(long, default_value_t = 5)]
    n_per_bin: usize,
    #[arg(long, default_value_t = 160)]
    mw_min: u32,
    #[arg(long, default_value_t = 700)]
    mw_max: u32,
    #[arg(long, default_value_t = 600.0)]
    train_max: f64,
    #[arg(long, default_value_t = 1024)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4")]
    noise: Vec<f64>,
    /// Draw rule noise per fragment (atomic masses) or independently per rule.
    #[arg(long, value_enum, default_value = "per-fragment")]
    noise_kind: NoiseArg,
    /// Generate and write the corpus, split and rules, then stop.
    #[arg(long)]
    assets_only: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(short, long)]
    output: PathBuf,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::EmptyRuleSet | Error::NoCliffs | Error::NoTestRows | Error::NoContexts | Error::DegenerateSplit(_)) => 3,
        Some(Error::Leakage(_)) => 4,
        Some(Error::NonFiniteLoss { .. }) => 5,
        Some(Error::Generation(_)) => 6,
        Some(Error::Io(_)) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::ExtractRules(a) => extract_rules(a),
        Cmd::Split(a) => split(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Eval(a) => eval(a),
        Cmd::MwBench(a) => mw_bench(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_dataset(p: &Path) -> anyhow::Result<Dataset> {
    Ok(Dataset::load_csv(p)?)
}

fn load_split(p: &Path, ds: &Dataset) -> anyhow::Result<SplitAssignment> {
    let s = SplitAssignment::load(p)?;
    s.validate(ds)?;
    Ok(s)
}

fn create_dir(p: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn write_json<T: serde::Serialize>(p: &Path, v: &T) -> anyhow::Result<()> {
    fs::write(p, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", p.display()))
}

fn rule_summary(rs: &RuleSet) -> String {
    let max = rs.rules.iter().map(|r| r.delta_std).fold(0.0, f64::max);
    let edges = [0.05, 0.1, 0.2, 0.3, 0.5, 1.0];
    let mut hist = vec![0usize; edges.len() + 1];
    for r in &rs.rules {
        hist[edges.iter().position(|&e| r.delta_std <= e).unwrap_or(edges.len())] += 1;
    }
    let mut s = format!("{} rules, max σ = {max:.3}\nσ histogram:", rs.len());
    let mut lo = 0.0;
    for (i, n) in hist.iter().enumerate() {
        match edges.get(i) {
            Some(hi) => s.push_str(&format!(" ({lo}, {hi}]: {n};")),
            None => s.push_str(&format!(" > {lo}: {n}")),
        }
        lo = edges.get(i).copied().unwrap_or(lo);
    }
    s
}

fn extract_rules(a: ExtractArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let rs = if a.element_mode {
        element_rules(ds.sha256())
    } else {
        let p = a.split.as_ref().context("a split file is required unless --element-mode is given")?;
        let split = load_split(p, &ds)?;
        mine_rules(&ds, &split.train_ids, a.std_max, a.min_count)?
    };
    save_rules(&rs, &a.output)?;
    println!("{}", rule_summary(&rs));
    Ok(())
}

fn split(a: SplitArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let spec = match a.method {
        Method::Random811 => SplitSpec::Random811,
        Method::Scaffold811 => SplitSpec::Scaffold811,
        Method::ButinaTail => SplitSpec::ButinaTail {
            cutoff: a.cutoff,
            test_fraction: a.test_fraction,
            basis: match a.basis {
                Basis::Molecule => ClusterBasis::Molecule,
                Basis::MurckoScaffold => ClusterBasis::MurckoScaffold,
            },
        },
        Method::PropertyExtreme => SplitSpec::PropertyExtreme {
            mode: match a.extreme {
                Extreme::TopExtreme => ExtremeMode::TopExtreme,
                Extreme::BothExtremes => ExtremeMode::BothExtremes,
            },
            fraction: a.test_fraction,
        },
        Method::ActivityCliff => SplitSpec::ActivityCliff {
            sim_min: a.sim_min,
            delta_min: a.delta_min,
        },
        Method::MwRange => SplitSpec::MwRange {
            train_max: a.train_max,
            test_min: a.test_min,
            test_max: a.test_max,
        },
    };
    let s = make_split(&ds, &spec, a.seed)?;
    s.save(&a.output)?;
    println!(
        "{}: {} train, {} valid, {} test",
        spec.name(),
        s.train_ids.len(),
        s.valid_ids.len(),
        s.test_ids.len()
    );
    Ok(())
}

/// Feature slots for a run. Fragment modes take them from `--slots-from`,
/// else the rule file, else rules mined from the training rows with the
/// configured thresholds.
fn layout_for(
    a: &TrainArgs,
    cfg: &TrainConfig,
    ds: &Dataset,
    split: &SplitAssignment,
    rules: Option<&RuleSet>,
) -> anyhow::Result<FeatureLayout> {
    if cfg.feature_mode == FeatureMode::AtomCounts {
        return Ok(FeatureLayout::atom_counts());
    }
    let slots = match (&a.slots_from, rules) {
        (Some(p), _) => load_rules(p)?.slots(),
        (None, Some(rs)) => rs.slots(),
        (None, None) => mine_rules(ds, &split.train_ids, cfg.std_max, cfg.min_count)?.slots(),
    };
    let l = FeatureLayout::fragments(slots);
    Ok(match cfg.feature_mode {
        FeatureMode::CountsPlusFingerprint => l.with_fingerprint(a.fingerprint_bits, 2),
        _ => l,
    })
}

fn epochs_csv(rec: &RunRecord) -> String {
    let mut s = String::from("epoch,lr,total,mse,ssr,lambda,valid_rmse\n");
    for e in &rec.epochs {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.epoch, e.lr, e.loss.total, e.loss.mse, e.loss.ssr, e.loss.lambda, e.valid_rmse
        ));
    }
    s
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let cfg = a.overrides.apply(TrainConfig::default())?;
    let ds = load_dataset(&a.dataset)?;
    let split = load_split(&a.split, &ds)?;
    let rules = a.rules.as_deref().map(load_rules).transpose()?;
    let layout = layout_for(&a, &cfg, &ds, &split, rules.as_ref())?;
    create_dir(&a.output)?;
    let mut summary = String::from("seed,test_rmse,test_r2,best_epoch,epochs\n");
    let mut rmses = Vec::new();
    for &seed in &cfg.seeds {
        let (tm, rec) = train(&ds, &split, &layout, rules.as_ref(), &cfg, seed)?;
        let dir = a.output.join(format!("seed_{seed}"));
        create_dir(&dir)?;
        tm.save(&dir.join("checkpoint.json"))?;
        write_json(&dir.join("run.json"), &rec)?;
        write_json(&dir.join("metrics.json"), &rec.metrics_json(SplitPart::Test))?;
        fs::write(dir.join("epochs.csv"), epochs_csv(&rec))?;
        let t = rec.metric(SplitPart::Test);
        summary.push_str(&format!(
            "{seed},{},{},{},{}\n",
            t.map_or(f64::NAN, |m| m.rmse),
            t.map_or(f64::NAN, |m| m.r2),
            rec.best_epoch,
            rec.epochs.len()
        ));
        rmses.push(rec.test_rmse());
        println!("seed {seed}: test rmse {:.4}", rec.test_rmse());
    }
    fs::write(a.output.join("summary.csv"), summary)?;
    let s = SeedSummary::new(rmses);
    println!("test rmse {:.4} ± {:.4} over {} seeds", s.mean, s.std, s.values.len());
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let split = load_split(&a.split, &ds)?;
    let tm = TrainedModel::load(&a.checkpoint)?;
    let part = match a.part {
        PartArg::Train => SplitPart::Train,
        PartArg::Valid => SplitPart::Valid,
        PartArg::Test => SplitPart::Test,
    };
    let m = evaluate(&tm, &ds, part.ids(&split), part)?;
    let text = serde_json::to_string_pretty(&m)?;
    if let Some(p) = &a.output {
        fs::write(p, text.clone() + "\n")?;
    }
    println!("{text}");
    Ok(())
}

fn mw_bench(a: MwBenchArgs) -> anyhow::Result<()> {
    let cfg = a.overrides.apply(bench_train_config())?;
    create_dir(&a.output)?;
    let corpus = generate_mw_corpus(&MwCorpusConfig {
        n_per_bin: a.n_per_bin,
        mw_min: a.mw_min,
        mw_max: a.mw_max,
        seed: a.seed,
        ..Default::default()
    })?;
    if !corpus.unfilled_bins.is_empty() {
        eprintln!("warning: {} bins short: {:?}", corpus.unfilled_bins.len(), corpus.unfilled_bins);
    }
    corpus.dataset.save_csv(&a.output.join("corpus.csv"))?;
    let split = make_split(
        &corpus.dataset,
        &SplitSpec::MwRange {
            train_max: a.train_max,
            test_min: a.train_max,
            test_max: a.mw_max as f64,
        },
        a.seed,
    )?;
    split.save(&a.output.join("split.json"))?;
    let rules = element_rules(corpus.dataset.sha256());
    save_rules(&rules, &a.output.join("rules.jsonl"))?;
    println!("corpus sha256 {}", corpus.dataset.sha256());
    println!("{}", rule_summary(&rules).lines().next().unwrap_or_default());
    if a.assets_only {
        return Ok(());
    }
    write_json(&a.output.join("config.json"), &cfg)?;
    let kind = match a.noise_kind {
        NoiseArg::PerFragment => RuleNoise::PerFragment,
        NoiseArg::PerRule => RuleNoise::PerRule,
    };
    let report = run_mw_bench(&corpus, &split, &cfg, &a.noise, kind)?;
    write_json(&a.output.join("report.json"), &report)?;
    let table = report.table();
    fs::write(a.output.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}
