//! Offline clustering cost for p = 1000 with the distance matrix precomputed.

use criterion::{criterion_group, criterion_main, Criterion};
use memtrack::clustering::{self, ClusterParams};
use memtrack::features::Descriptor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Five regimes of 200 frames around random unit centers.
fn stream(p: usize) -> Vec<Descriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let centers: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..64).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    (0..p)
        .map(|i| {
            let c = &centers[i * centers.len() / p];
            Descriptor::from_values(c.iter().map(|v| v + 0.02 * (rng.random::<f64>() - 0.5)).collect())
        })
        .collect()
}

fn bench_cluster(c: &mut Criterion) {
    let p = 1000;
    let d = clustering::distance_matrix(&stream(p)).unwrap();
    let params = ClusterParams {
        rho_rel: 0.0,
        eps_abs: 1.2 * clustering::baseline_scale(&d, 40).unwrap(),
    };
    c.bench_function("integral_image p=1000", |b| b.iter(|| clustering::integral_image(&d)));
    let j = clustering::integral_image(&d);
    c.bench_function("cluster p=1000", |b| b.iter(|| clustering::cluster(&j, p, params)));
    c.bench_function("integral_image + cluster p=1000", |b| {
        b.iter(|| clustering::cluster(&clustering::integral_image(&d), p, params))
    });
}

criterion_group!(benches, bench_cluster);
criterion_main!(benches);
