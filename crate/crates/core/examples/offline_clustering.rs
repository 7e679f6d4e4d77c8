//! Segment a descriptor stream with three appearance regimes into temporally
//! contiguous clusters.
//!
//!     cargo run --example offline_clustering

use memtrack::clustering::{self, ClusterParams};
use memtrack::features::Descriptor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> memtrack::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let regimes = [(1, 120), (121, 260), (261, 400)];
    let centers: Vec<Vec<f64>> = (0..regimes.len())
        .map(|_| (0..32).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let stream: Vec<Descriptor> = (1..=400)
        .map(|f| {
            let r = regimes.iter().position(|&(a, b)| a <= f && f <= b).unwrap();
            Descriptor::from_values(centers[r].iter().map(|v| v + 0.05 * (rng.random::<f64>() - 0.5)).collect())
        })
        .collect();

    let d = clustering::distance_matrix(&stream)?;
    let eps_abs = 1.2 * clustering::baseline_scale(&d, 40)?;
    let j = clustering::integral_image(&d);
    let (seg, stats) = clustering::cluster_with_stats(&j, stream.len(), ClusterParams { rho_rel: 0.0, eps_abs });

    println!("eps_abs = {eps_abs:.4}; {} sweeps, {} merges", stats.sweeps, stats.merges);
    for s in seg.intervals() {
        println!("  frames {:>3}..={:<3} cost {:.4}", s.u, s.v, clustering::interval_cost(&j, *s));
    }
    // The pairwise sweeps can leave short fragments next to a true boundary;
    // every true boundary still shows up.
    println!("boundaries: {:?} (true: [121, 261])", seg.boundaries());
    Ok(())
}
