use criterion::{criterion_group, criterion_main, Criterion};
use molrule_core::loss::{build_loss, AdaptiveUnit, Batch, CompiledRules, LossConfig};
use molrule_core::mmpa::element_rules;
use molrule_core::nn::{mlp_init, Tape};
use molrule_core::mw::{bench_train_config, generate_mw_corpus, MwAssets, MwCorpusConfig};
use molrule_core::{Purpose, RandomStream};

fn training(c: &mut Criterion) {
    let corpus = generate_mw_corpus(&MwCorpusConfig {
        n_per_bin: 1,
        mw_min: 160,
        mw_max: 400,
        ..Default::default()
    })
    .unwrap();
    let assets = MwAssets::build(corpus.dataset, 340.0, 340.0, 400.0, 1).unwrap();
    let layout = &assets.layout;
    let rules = CompiledRules::from_rule_set(&element_rules("x"), &layout.columns(), layout.width()).unwrap();
    let model = mlp_init(&[layout.width(), 64, 64, 1], RandomStream::new(1, Purpose::Init), 0.0).unwrap();
    let unit = AdaptiveUnit::zeros(rules.len(), model.repr_dim());
    let xb = assets.x.slice(ndarray::s![0..32, ..]).to_owned();
    let yb: Vec<f64> = assets.dataset.targets()[..32].to_vec();
    let cfg = LossConfig::default();
    for (name, r) in [("step_mse", None), ("step_rules", Some(&rules))] {
        c.bench_function(name, |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let batch = Batch {
                    x: &xb,
                    targets: &yb,
                    masks: None,
                };
                let g = build_loss(&mut tape, &model, &unit, r, &cfg, &batch).unwrap();
                tape.backward(g.total)
            })
        });
    }
    let cfg = molrule_core::train::TrainConfig {
        max_epochs: 1,
        seeds: vec![1],
        ..bench_train_config()
    };
    let mut g = c.benchmark_group("epoch");
    g.sample_size(10);
    g.bench_function("mw_epoch_with_rules", |b| b.iter(|| assets.train(Some(&assets.rules), &cfg, 1).unwrap()));
    g.finish();
}

criterion_group!(benches, training);
criterion_main!(benches);
