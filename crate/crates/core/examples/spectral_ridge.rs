//! Train a kernelized ridge filter on one patch, check it against the dense
//! solve, then detect a cyclically shifted copy of the patch.
//!
//!     cargo run --example spectral_ridge

use memtrack::features::FeatureMap;
use memtrack::spectral::oracle::{circulant_from_vector, oracle_ridge, to_vector};
use memtrack::spectral::{self, Kernel, SpectralModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> memtrack::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (h, w) = (16, 16);
    let x = FeatureMap::new(2, h, w, (0..2 * h * w).map(|_| rng.random::<f64>()).collect())?;
    let y = spectral::gaussian_target(h, w, 1.0)?;
    let lambda = 1e-3;

    for kernel in [Kernel::Linear, Kernel::Gaussian { sigma: 0.5 }] {
        let k = spectral::kernel_autocorrelation(&x, kernel);
        let alpha = spectral::coefficients(&spectral::ridge_solve(&k, &y, lambda)?);
        let dense = oracle_ridge(&circulant_from_vector(&k)?, &to_vector(&y), lambda)?;
        let diff = alpha
            .data
            .iter()
            .zip(dense.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        let model = SpectralModel::train(&x, &y, kernel, lambda)?;
        let resp = spectral::detect(&model, &x.shifted(3, -5))?;
        println!(
            "{kernel:>14}: max |fft - dense| = {diff:.2e}, peak at {:?}, translation {:?}, value {:.3}",
            resp.peak,
            resp.translation(),
            resp.peak_value
        );
    }
    Ok(())
}
