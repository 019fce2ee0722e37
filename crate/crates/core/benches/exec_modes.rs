use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use inflow_core::attention::{median_bandwidth, permutation_test};
use inflow_core::data::{gen_gaussian_mixture, gen_noise, DataBatch};
use inflow_core::flow::{FlowConfig, FlowModel, Gate, Init, SubnetSpec};
use inflow_core::rng::seeded;
use inflow_core::Exec;
use rand::Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn vector_model() -> FlowModel {
    FlowModel::new(FlowConfig { init: Init::Random, ..FlowConfig::vector(2, 2, [64, 64]) }).unwrap()
}

fn image_model() -> FlowModel {
    FlowModel::new(FlowConfig {
        blocks: 2,
        input_shape: vec![3, 16, 16],
        subnet: SubnetSpec::conv([32]),
        shared: false,
        perm_seed: 0,
        init: Init::Random,
        init_seed: 1,
    })
    .unwrap()
}

fn permutations(c: &mut Criterion) {
    let x = rows(250, 32, 1);
    let y = rows(50, 32, 2);
    let sigma = median_bandwidth(&[x.clone(), y.clone()].concat()).unwrap();
    let mut group = c.benchmark_group("permutation_test");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "250x50_p100"), |b| {
            b.iter(|| permutation_test(&x, &y, sigma, 100, 0.05, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let mut rng = seeded(3);
    let vectors = gen_gaussian_mixture(5000, &[vec![0.1, 0.1]], 0.05, &mut rng).unwrap();
    let images = gen_noise(256, &[3, 16, 16], &mut rng).unwrap();
    let cases: [(&str, FlowModel, &DataBatch); 2] =
        [("vector_5000", vector_model(), &vectors), ("image_256", image_model(), &images)];
    let mut group = c.benchmark_group("batch_scoring");
    group.sample_size(10);
    for (case, model, batch) in &cases {
        for (name, exec) in MODES {
            group.bench_function(BenchmarkId::new(name, case), |b| {
                b.iter(|| model.log_likelihood(batch, Gate::One, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let mut rng = seeded(4);
    let vectors = gen_gaussian_mixture(256, &[vec![0.1, 0.1]], 0.05, &mut rng).unwrap();
    let images = gen_noise(64, &[3, 16, 16], &mut rng).unwrap();
    let cases: [(&str, FlowModel, &DataBatch); 2] =
        [("vector_256", vector_model(), &vectors), ("image_64", image_model(), &images)];
    let mut group = c.benchmark_group("gradient_accumulation");
    group.sample_size(10);
    for (case, model, batch) in &cases {
        for (name, exec) in MODES {
            group.bench_function(BenchmarkId::new(name, case), |b| b.iter(|| model.nll_and_grad(batch, exec).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, permutations, scoring, gradients);
criterion_main!(benches);
