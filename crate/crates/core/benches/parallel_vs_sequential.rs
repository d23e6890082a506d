use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dtbm::simgen::{sample_observation, SimSpec};
use dtbm::{fit_dtbm, InitOptions, RefineOptions};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let available = std::thread::available_parallelism().map_or(1, usize::from);
    let mut sizes = vec![1];
    if available > 1 {
        sizes.push(available);
    }
    sizes
        .into_iter()
        .map(|n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            (format!("{n}_threads"), pool)
        })
        .collect()
}

fn fit_pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_dtbm");
    group.sample_size(10);
    for p in [40, 60] {
        let sim = sample_observation(&SimSpec::gaussian(p, 3, 4, -1.2).with_seed(1)).unwrap();
        let refine = RefineOptions::for_dims(sim.y.dims());
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, p), &sim.y, |b, y| {
                b.iter(|| pool.install(|| fit_dtbm(black_box(y), &[4, 4, 4], &InitOptions::default(), &refine, 3).unwrap()))
            });
        }
    }
    group.finish();
}

fn sweep_replicates(c: &mut Criterion) {
    let config: dtbm::experiment::ExperimentConfig = serde_json::from_str(
        r#"{"p": [30], "order": [3], "r": [3], "gamma": [-1.0], "replicates": 8, "methods": ["dtbm_full"]}"#,
    )
    .unwrap();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| dtbm::experiment::run_experiment(&config).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, fit_pipeline, sweep_replicates);
criterion_main!(benches);
