//! Build memories from a clustered sample stream, rank them by confidence,
//! evict down to a capacity and blend an appearance from the best match.
//!
//!     cargo run --example memory_pool

use std::collections::VecDeque;

use memtrack::clustering::{self, ClusterParams};
use memtrack::features::{Descriptor, FeatureMap};
use memtrack::memory::{self, IngestParams, MemoryPool, Sample};

fn main() -> memtrack::Result<()> {
    // four appearance phases of different length
    let phases = [(0.0, 60), (1.0, 30), (2.0, 80), (3.0, 30)];
    let mut samples = VecDeque::new();
    let mut frame = 0;
    for (angle, len) in phases {
        for _ in 0..len {
            frame += 1;
            let a: f64 = angle;
            let v = vec![a.cos(), a.sin(), 0.1];
            samples.push_back(Sample {
                frame,
                descriptor: Descriptor::from_values(v.clone()),
                features: FeatureMap::new(1, 1, 3, v)?,
            });
        }
    }

    let descs: Vec<Descriptor> = samples.iter().map(|s| s.descriptor.clone()).collect();
    let d = clustering::distance_matrix(&descs)?;
    let j = clustering::integral_image(&d);
    let seg = clustering::cluster(&j, descs.len(), ClusterParams { rho_rel: 0.0, eps_abs: 1e-6 });

    let mut pool = MemoryPool::new();
    let params = IngestParams {
        current_frame: frame,
        max_samples: 20,
        sigma1: 1e-3,
        sigma2: 1e-2,
    };
    let ids = memory::ingest_clusters(&seg, &mut samples, &mut pool, params)?;
    println!("ingested memories {ids:?}; {} samples left in the open cluster", samples.len());
    print!("{}", pool.snapshot_csv());

    let evicted = memory::evict(&mut pool, 2);
    println!("evicted {evicted:?}");

    let query = Descriptor::from_values(vec![0.0f64.cos(), 0.0f64.sin(), 0.1]);
    let best = memory::select_memory(&query, &pool).expect("pool is not empty");
    let w = memory::blend_weights(&query, best);
    let current = FeatureMap::new(1, 1, 3, vec![0.0, 0.0, 1.0])?;
    let x_hat = memory::compose_appearance(Some(best), &w, &current, 0.15)?;
    println!("selected memory {} (frames {}..={}), blended appearance {:?}", best.id, best.begin, best.end, x_hat.data);
    Ok(())
}
