use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use molrule_core::mmpa::{load_rules, save_rules};
use molrule_core::splits::{make_split, SplitSpec};
use molrule_core::synth::{substituent_corpus, SubstituentCorpusConfig};
use molrule_core::train::mine_rules;

fn molrule(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molrule"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let ds = substituent_corpus(&SubstituentCorpusConfig {
        n: 150,
        ..Default::default()
    })
    .unwrap();
    ds.save_csv(&dir.path().join("data.csv")).unwrap();
    dir
}

#[test]
fn element_mode_emits_the_exact_rules() {
    let dir = workspace();
    let o = molrule(dir.path(), &["extract-rules", "data.csv", "--element-mode", "-o", "el.jsonl"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("66 rules, max σ = 0.000"), "{}", stdout(&o));
    let rs = load_rules(&dir.path().join("el.jsonl")).unwrap();
    assert_eq!(rs.len(), 66);
    assert_eq!(rs.provenance.origin, "element_masses");
}

#[test]
fn pipeline_is_reproducible_end_to_end() {
    let dir = workspace();
    let d = dir.path();
    let o = molrule(d, &["split", "data.csv", "--method", "random_811", "--seed", "11", "-o", "split.json"]);
    assert!(o.status.success(), "{o:?}");
    let o = molrule(
        d,
        &["extract-rules", "data.csv", "split.json", "--std-max", "0.5", "--min-count", "2", "-o", "rules.jsonl"],
    );
    assert!(o.status.success(), "{o:?}");
    let train_args = |out: &'static str| {
        vec![
            "train", "data.csv", "split.json", "rules.jsonl", "--max-epochs", "6", "--seeds", "1,2", "--lambda",
            "1.0", "-o", out,
        ]
    };
    for out in ["run_a", "run_b"] {
        let o = molrule(d, &train_args(out));
        assert!(o.status.success(), "{o:?}");
        assert!(stdout(&o).contains("over 2 seeds"));
    }
    for f in ["seed_1/checkpoint.json", "seed_1/metrics.json", "seed_1/epochs.csv", "seed_2/checkpoint.json"] {
        assert_eq!(fs::read(d.join("run_a").join(f)).unwrap(), fs::read(d.join("run_b").join(f)).unwrap(), "{f}");
    }

    let o = molrule(d, &["eval", "data.csv", "split.json", "run_a/seed_1/checkpoint.json", "-o", "m.json"]);
    assert!(o.status.success(), "{o:?}");
    let evaluated: serde_json::Value = serde_json::from_slice(&fs::read(d.join("m.json")).unwrap()).unwrap();
    let recorded: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("run_a/seed_1/metrics.json")).unwrap()).unwrap();
    assert_eq!(evaluated["rmse"], recorded["rmse"]);
    assert_eq!(recorded["lambda"], 1.0);
}

#[test]
fn leaked_rules_exit_with_code_4() {
    let dir = workspace();
    let d = dir.path();
    let ds = molrule_core::splits::Dataset::load_csv(&d.join("data.csv")).unwrap();
    make_split(&ds, &SplitSpec::Random811, 3).unwrap().save(&d.join("split.json")).unwrap();
    let all: Vec<usize> = (0..ds.len()).collect();
    save_rules(&mine_rules(&ds, &all, 0.5, 2).unwrap(), &d.join("leaked.jsonl")).unwrap();
    let o = molrule(d, &["train", "data.csv", "split.json", "leaked.jsonl", "--max-epochs", "1", "-o", "out"]);
    assert_eq!(o.status.code(), Some(4), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("leaks"));
}

#[test]
fn signals_exit_with_code_3() {
    let dir = workspace();
    let d = dir.path();
    let o = molrule(d, &["split", "data.csv", "--method", "random_811", "-o", "split.json"]);
    assert!(o.status.success());
    let o = molrule(
        d,
        &["extract-rules", "data.csv", "split.json", "--std-max", "1e-9", "--min-count", "1000", "-o", "r.jsonl"],
    );
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    let o = molrule(
        d,
        &["split", "data.csv", "--method", "activity_cliff", "--delta-min", "100", "-o", "c.json"],
    );
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    let o = molrule(d, &["split", "data.csv", "--method", "mw_range", "--train-max", "1e6", "-o", "m.json"]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn bad_inputs_have_distinct_codes() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "smi,y\nCCO,1\n").unwrap();
    let o = molrule(d, &["split", "bad.csv", "--method", "random_811", "-o", "s.json"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    let o = molrule(d, &["split", "missing.csv", "--method", "random_811", "-o", "s.json"]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    fs::write(d.join("cfg.json"), r#"{"lambda": 0.3, "learning_rate": 1}"#).unwrap();
    molrule(d, &["split", "data.csv", "--method", "random_811", "-o", "s.json"]);
    let o = molrule(d, &["train", "data.csv", "s.json", "--config", "cfg.json", "-o", "out"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn mw_bench_assets_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "mw-bench", "--n-per-bin", "1", "--mw-min", "300", "--mw-max", "360", "--train-max", "340",
        "--assets-only", "-o", "bench",
    ];
    let o = molrule(d, &args);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("66 rules, max σ = 0.000"));
    for f in ["corpus.csv", "split.json", "rules.jsonl"] {
        assert!(d.join("bench").join(f).exists(), "{f}");
    }
    let first = fs::read(d.join("bench/corpus.csv")).unwrap();
    let o = molrule(d, &args);
    assert!(o.status.success());
    assert_eq!(first, fs::read(d.join("bench/corpus.csv")).unwrap());
}
