use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use htnet::autodiff::Tape;
use htnet::scenario::{generate, ScenarioConfig};
use htnet::temporal::{Htnet, Mode, ModelConfig};
use htnet_bench::deployment;

fn inference(c: &mut Criterion) {
    htnet::runtime::retain_heap();
    let dep = deployment(10, 10, 10, 1);
    let mut group = c.benchmark_group("inference_10ap_100sta_10snap");
    group.sample_size(20);
    for layers in [1, 2, 3, 4] {
        let model = Htnet::new(
            ModelConfig {
                layers,
                ..ModelConfig::default()
            },
            0,
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(layers), &model, |b, m| {
            b.iter(|| m.predict(std::slice::from_ref(&dep)).unwrap())
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    htnet::runtime::retain_heap();
    let deps = generate(&ScenarioConfig::for_setup(5, 2).unwrap(), 8).unwrap();
    let refs: Vec<_> = deps.iter().collect();
    let model = Htnet::new(ModelConfig::with_width(32), 0).unwrap();
    let batch = model.batch(&refs).unwrap();
    c.bench_function("train_step_width32_batch8", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let vars = model.params.bind(&mut tape);
            let out = model.forward(&mut tape, &vars, &batch, Mode::Train).unwrap();
            let loss = model.loss(&mut tape, out.predictions, &batch).unwrap();
            tape.backward(loss).unwrap()
        })
    });
}

fn generation(c: &mut Criterion) {
    let config = ScenarioConfig::for_setup(5, 3).unwrap();
    c.bench_function("generate_setup5_deployment", |b| b.iter(|| generate(&config, 1).unwrap()));
}

criterion_group!(benches, inference, training_step, generation);
criterion_main!(benches);
