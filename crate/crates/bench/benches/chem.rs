use criterion::{criterion_group, criterion_main, Criterion};
use molrule_core::chem::{canonical_smiles, morgan_fingerprint, parse_smiles};
use molrule_core::mmpa::{enumerate_fragmentations, extract_matched_pairs, DEFAULT_MAX_HEAVY_ATOMS};
use molrule_core::synth::{substituent_corpus, SubstituentCorpusConfig};

const DRUG: &str = "CC(C)Cc1ccc(cc1)C(C)C(=O)O";

fn chem(c: &mut Criterion) {
    let m = parse_smiles(DRUG).unwrap();
    c.bench_function("parse_smiles", |b| b.iter(|| parse_smiles(std::hint::black_box(DRUG)).unwrap()));
    c.bench_function("canonical_smiles", |b| b.iter(|| canonical_smiles(std::hint::black_box(&m))));
    c.bench_function("morgan_r2_2048", |b| b.iter(|| morgan_fingerprint(std::hint::black_box(&m), 2, 2048)));
    c.bench_function("fragmentations", |b| {
        b.iter(|| enumerate_fragmentations(std::hint::black_box(&m), DEFAULT_MAX_HEAVY_ATOMS))
    });
    let ds = substituent_corpus(&SubstituentCorpusConfig {
        n: 200,
        ..Default::default()
    })
    .unwrap();
    let rows: Vec<_> = ds.molecules().iter().cloned().zip(ds.targets()).collect();
    let mut g = c.benchmark_group("mmpa");
    g.sample_size(10);
    g.bench_function("matched_pairs_200", |b| b.iter(|| extract_matched_pairs(std::hint::black_box(&rows))));
    g.finish();
}

criterion_group!(benches, chem);
criterion_main!(benches);
