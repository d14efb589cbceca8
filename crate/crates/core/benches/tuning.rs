//! Tuning throughput: sequential vs. rayon-parallel search.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use airidx::{airtune, gen_gmm, to_key_position_set, StorageProfile, TuneConfig};

fn tuning(c: &mut Criterion) {
    let data = to_key_position_set(&gen_gmm(100_000, 100, 42)).unwrap();
    let mut group = c.benchmark_group("airtune_gmm_100k");
    group.sample_size(10);
    for (name, profile) in [("ssd", StorageProfile::ssd()), ("nfs", StorageProfile::nfs())] {
        let workers = std::thread::available_parallelism().map_or(2, |n| n.get().max(2));
        for (mode, parallelism) in [("sequential", 1), ("parallel", workers)] {
            let config = TuneConfig {
                parallelism,
                ..TuneConfig::default()
            };
            group.bench_with_input(BenchmarkId::new(mode, name), &config, |b, config| {
                b.iter(|| airtune(&data, &profile, config).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, tuning);
criterion_main!(benches);
