use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::*;
use super::*;

fn random_fm(rng: &mut ChaCha8Rng, ch: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::new(ch, h, w, (0..ch * h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn impulse(h: usize, w: usize) -> Grid {
    let mut g = Grid::zeros(h, w);
    g.data[0] = 1.0;
    g
}

/// `y[l] = sum_i alpha_i kernel(z, shift(x_hat, l - i))`, evaluated shift by shift.
fn naive_response(alpha: &Grid, z: &FeatureMap, x_hat: &FeatureMap, kernel: Kernel) -> Grid {
    let (h, w) = (z.height, z.width);
    Grid::from_fn(h, w, |lr, lc| {
        let mut acc = 0.0;
        for ir in 0..h {
            for ic in 0..w {
                let dy = lr as isize - ir as isize;
                let dx = lc as isize - ic as isize;
                acc += alpha.get(ir, ic) * kernel.eval(z, &x_hat.shifted(dy, dx));
            }
        }
        acc
    })
}

#[test]
fn impulse_transforms_to_ones() {
    let sp = dft2(&FeatureMap::from_grid(&impulse(4, 6)));
    for v in &sp.data {
        assert!((v.re - 1.0).abs() < 1e-15 && v.im.abs() < 1e-15);
    }
}

#[test]
fn constant_map_concentrates_at_dc() {
    let c = 0.7;
    let sp = dft2(&FeatureMap::from_grid(&Grid::from_fn(5, 4, |_, _| c)));
    assert!((sp.data[0].re - c * 20.0).abs() < 1e-12);
    for v in &sp.data[1..] {
        assert!(v.norm() < 1e-12);
    }
}

#[test]
fn dft_round_trip_and_linearity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_fm(&mut rng, 3, 8, 8);
    let b = random_fm(&mut rng, 3, 8, 8);
    let back = idft2(&dft2(&a));
    let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, y) in a.data.iter().zip(&back.data) {
        assert!((x - y).abs() <= 1e-10 * scale);
    }
    let sum = FeatureMap {
        data: a.data.iter().zip(&b.data).map(|(x, y)| 2.0 * x + y).collect(),
        ..a.clone()
    };
    let (fa, fb, fs) = (dft2(&a), dft2(&b), dft2(&sum));
    for i in 0..fs.data.len() {
        assert!((fs.data[i] - (fa.data[i] * 2.0 + fb.data[i])).norm() < 1e-10);
    }
}

#[test]
fn gaussian_target_shape() {
    let g = gaussian_target(16, 16, 2.0).unwrap();
    assert_eq!(g.get(0, 0), 1.0);
    for r in 0..16 {
        for c in 0..16 {
            let (dy, dx) = (r.min(16 - r) as f64, c.min(16 - c) as f64);
            let direct = (-(dx * dx + dy * dy) / 8.0).exp();
            assert!((g.get(r, c) - direct).abs() < 1e-15);
            assert_eq!(g.get(r, c), g.get((16 - r) % 16, (16 - c) % 16));
        }
    }
    let wide = gaussian_target(8, 8, 1e6).unwrap();
    assert!(wide.data.iter().all(|&v| (v - 1.0).abs() < 1e-9));
    assert!(gaussian_target(4, 4, 0.0).is_err());
}

#[test]
fn linear_autocorrelation_of_impulse_is_impulse() {
    let mut fm = FeatureMap::zeros(2, 5, 5);
    fm.data[25 + 7] = 1.0;
    let k = kernel_autocorrelation(&fm, Kernel::Linear);
    assert!((k.0.get(0, 0) - 1.0 / 50.0).abs() < 1e-15);
    for v in &k.0.data[1..] {
        assert!(v.abs() < 1e-15);
    }
}

#[test]
fn gaussian_autocorrelation_unit_at_zero_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_fm(&mut rng, 4, 7, 9);
    let k = kernel_autocorrelation(&x, Kernel::default());
    assert!((k.0.get(0, 0) - 1.0).abs() < 1e-12);
    assert!(k.0.data.iter().all(|&v| v <= k.0.get(0, 0) + 1e-12));
}

#[test]
fn autocorrelation_matches_all_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kernel in [Kernel::Linear, Kernel::Gaussian { sigma: 0.5 }] {
        let x = random_fm(&mut rng, 1, 6, 6);
        let k = kernel_autocorrelation(&x, kernel);
        for r in 0..6 {
            for c in 0..6 {
                let naive = kernel.eval(&x, &x.shifted(r as isize, c as isize));
                assert!((k.0.get(r, c) - naive).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn crosscorrelation_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_fm(&mut rng, 2, 6, 6);
    let z = random_fm(&mut rng, 2, 6, 6);
    for kernel in [Kernel::Linear, Kernel::Gaussian { sigma: 0.5 }] {
        assert_eq!(
            kernel_crosscorrelation(&x, &x, kernel).unwrap(),
            kernel_autocorrelation(&x, kernel)
        );
        let kt = kernel_crosscorrelation(&z, &x, kernel).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let naive = kernel.eval(&z, &x.shifted(r as isize, c as isize));
                assert!((kt.0.get(r, c) - naive).abs() < 1e-8);
            }
        }
    }
    let shifted = x.shifted(2, 4);
    let kt = kernel_crosscorrelation(&shifted, &x, Kernel::default()).unwrap();
    let best = ResponseMap::from_grid(kt.0);
    assert_eq!(best.peak, (2, 4));
    assert!(kernel_crosscorrelation(&random_fm(&mut rng, 2, 6, 5), &x, Kernel::Linear).is_err());
}

#[test]
fn ridge_with_identity_kernel() {
    let y = gaussian_target(6, 6, 1.0).unwrap();
    let k = KernelVector(impulse(6, 6));
    let lambda = 0.25;
    let alpha = coefficients(&ridge_solve(&k, &y, lambda).unwrap());
    for (a, yv) in alpha.data.iter().zip(&y.data) {
        assert!((a - yv / (1.0 + lambda)).abs() < 1e-12);
    }
    let alpha = coefficients(&ridge_solve(&k, &y, 1e-12).unwrap());
    for (a, yv) in alpha.data.iter().zip(&y.data) {
        assert!((a - yv).abs() < 1e-10);
    }
}

#[test]
fn ridge_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kernel in [Kernel::Linear, Kernel::Gaussian { sigma: 0.5 }] {
        let x = random_fm(&mut rng, 1, 8, 8);
        let y = gaussian_target(8, 8, 1.2).unwrap();
        let k = kernel_autocorrelation(&x, kernel);
        let lambda = 1e-2;
        let alpha = coefficients(&ridge_solve(&k, &y, lambda).unwrap());
        let dense = oracle_ridge(&circulant_from_vector(&k).unwrap(), &to_vector(&y), lambda)
            .unwrap();
        let err = (DVector::from_column_slice(&alpha.data) - &dense).norm() / dense.norm();
        assert!(err < 1e-8, "{kernel}: {err}");
    }
}

#[test]
fn singular_divisor_is_reported() {
    let k = KernelVector(Grid::from_fn(2, 2, |_, _| -0.25));
    // F(k) at DC is -1; with lambda = 1 the divisor vanishes
    let y = gaussian_target(2, 2, 1.0).unwrap();
    assert!(matches!(ridge_solve(&k, &y, 1.0), Err(Error::Singular { .. })));
    assert!(ridge_solve(&k, &y, 0.0).is_err());
}

#[test]
fn blended_degenerate_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_fm(&mut rng, 1, 8, 8);
    let xh = random_fm(&mut rng, 1, 8, 8);
    let y = gaussian_target(8, 8, 1.0).unwrap();
    let kernel = Kernel::default();
    let k = kernel_autocorrelation(&x, kernel);
    let kh = kernel_autocorrelation(&xh, kernel);
    let ridge = ridge_solve(&k, &y, 1e-4).unwrap();
    let close = |a: &Spectrum, b: &Spectrum| {
        a.data
            .iter()
            .zip(&b.data)
            .all(|(p, q)| (p - q).norm() <= 1e-12 * q.norm().max(1.0))
    };
    assert!(close(&blended_solve(&kh, &k, &y, 1.0, 1e-4).unwrap(), &ridge));
    for gamma in [0.1, 0.5, 0.9] {
        assert!(close(&blended_solve(&k, &k, &y, gamma, 1e-4).unwrap(), &ridge));
    }
    assert!(blended_solve(&kh, &k, &y, 0.0, 1e-4).is_err());
    assert!(blended_solve(&kh, &k, &y, 1.5, 1e-4).is_err());
}

#[test]
fn blended_solution_near_exact_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kernel = Kernel::default();
    let (gamma, lambda) = (0.15, 1e-4);
    for _ in 0..10 {
        let x = random_fm(&mut rng, 1, 8, 8);
        let noise: Vec<f64> = (0..64).map(|_| rng.random::<f64>() - 0.5).collect();
        let nn = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = 0.1 * x.norm_sq().sqrt() / nn * rng.random::<f64>();
        let xh = FeatureMap {
            data: x.data.iter().zip(&noise).map(|(a, n)| a + scale * n).collect(),
            ..x.clone()
        };
        let y = gaussian_target(8, 8, 0.8).unwrap();
        let k = kernel_autocorrelation(&x, kernel);
        let kh = kernel_autocorrelation(&xh, kernel);
        let approx = coefficients(&blended_solve(&kh, &k, &y, gamma, lambda).unwrap());
        let (dk, dkh) = (circulant_from_vector(&k).unwrap(), circulant_from_vector(&kh).unwrap());
        let yv = to_vector(&y);
        let exact = oracle_exact_blend(&dkh, &dk, &yv, gamma, lambda).unwrap();
        let f_exact = oracle_blend_cost(&exact, &dkh, &dk, &yv, gamma, lambda).unwrap();
        let f_approx = oracle_blend_cost(
            &DVector::from_column_slice(&approx.data),
            &dkh,
            &dk,
            &yv,
            gamma,
            lambda,
        )
        .unwrap();
        assert!(f_approx <= 1.05 * f_exact, "{f_approx} vs {f_exact}");
    }
}

#[test]
fn detection_peaks_and_naive_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kernel in [Kernel::Linear, Kernel::Gaussian { sigma: 0.5 }] {
        let x = random_fm(&mut rng, 2, 8, 8);
        let y = gaussian_target(8, 8, 0.8).unwrap();
        let model = SpectralModel::train(&x, &y, kernel, 1e-4).unwrap();
        let self_resp = detect(&model, &x).unwrap();
        assert_eq!(self_resp.peak, (0, 0));

        let z = x.shifted(3, 5);
        let resp = detect(&model, &z).unwrap();
        assert_eq!(resp.peak, (3, 5));
        assert_eq!(resp.translation(), (3, -3));

        let naive = naive_response(&coefficients(&model.coeffs), &z, &x, kernel);
        for (a, b) in resp.grid.data.iter().zip(&naive.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn detection_is_shift_covariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_fm(&mut rng, 3, 10, 12);
    let y = gaussian_target(10, 12, 1.0).unwrap();
    let model = SpectralModel::train(&x, &y, Kernel::default(), 1e-4).unwrap();
    let z = random_fm(&mut rng, 3, 10, 12);
    let base = detect(&model, &z).unwrap();
    let moved = detect(&model, &z.shifted(4, 7)).unwrap();
    assert_eq!(moved.peak, ((base.peak.0 + 4) % 10, (base.peak.1 + 7) % 12));
    assert!(detect(&model, &random_fm(&mut rng, 3, 10, 11)).is_err());
}

#[test]
fn response_tie_breaks_row_major() {
    let g = Grid::from_fn(3, 3, |r, c| if (r, c) == (1, 2) || (r, c) == (2, 0) { 5.0 } else { 0.0 });
    let resp = ResponseMap::from_grid(g);
    assert_eq!(resp.peak, (1, 2));
    assert_eq!(resp.peak_value, 5.0);
}

#[test]
fn linear_update_cases() {
    let old = vec![1.0, 2.0, 3.0];
    let new = vec![4.0, 5.0, 6.0];
    assert_eq!(linear_update(&old, &new, 1.0).unwrap(), new);
    for (a, b) in linear_update(&old, &old, 0.3).unwrap().iter().zip(&old) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(linear_update(&old, &new[..2], 0.3).is_err());
    assert!(linear_update(&old, &new, 0.0).is_err());
}

#[test]
fn iterated_update_equals_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let gamma = 0.15;
    let p = 50;
    let samples: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..16).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut model = vec![0.0; 16];
    for s in &samples {
        model = linear_update(&model, s, gamma).unwrap();
    }
    let w = expanded_weights(gamma, p);
    for i in 0..16 {
        let direct: f64 = samples.iter().zip(&w).map(|(s, wj)| wj * s[i]).sum();
        assert!((model[i] - direct).abs() < 1e-12);
    }
}

#[test]
fn expanded_weight_values() {
    let w = expanded_weights(0.15, 30);
    assert_eq!(*w.last().unwrap(), 0.15);
    let sum: f64 = w.iter().sum();
    assert!((sum - (1.0 - 0.85f64.powi(30))).abs() < 1e-12);
    let lag100 = expanded_weights(0.1, 101)[0];
    assert!((lag100 - 2.656e-6).abs() < 1e-9, "{lag100}");
}

#[test]
fn rls_cost_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 9;
    let y = DVector::from_fn(n, |_, _| rng.random::<f64>());
    let k = DMatrix::<f64>::identity(n, n);
    assert!((oracle_rls_cost(&DVector::zeros(n), &k, &y, 0.3).unwrap() - y.dot(&y)).abs() < 1e-15);
    assert!(oracle_rls_cost(&y, &k, &y, 0.0).unwrap().abs() < 1e-15);
    assert!(oracle_rls_cost(&DVector::zeros(n - 1), &k, &y, 0.3).is_err());

    let x = random_fm(&mut rng, 1, 3, 3);
    let kd = circulant_from_vector(&kernel_autocorrelation(&x, Kernel::default())).unwrap();
    let lambda = 0.05;
    let best = oracle_ridge(&kd, &y, lambda).unwrap();
    let f_best = oracle_rls_cost(&best, &kd, &y, lambda).unwrap();
    for _ in 0..100 {
        let pert = DVector::from_fn(n, |_, _| (rng.random::<f64>() - 0.5) * 0.1);
        assert!(f_best <= oracle_rls_cost(&(&best + pert), &kd, &y, lambda).unwrap() + 1e-12);
    }
}

#[test]
fn exact_blend_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let kernel = Kernel::default();
    let x = random_fm(&mut rng, 1, 4, 4);
    let xh = random_fm(&mut rng, 1, 4, 4);
    let kd = circulant_from_vector(&kernel_autocorrelation(&x, kernel)).unwrap();
    let khd = circulant_from_vector(&kernel_autocorrelation(&xh, kernel)).unwrap();
    let y = to_vector(&gaussian_target(4, 4, 0.7).unwrap());
    let lambda = 1e-2;
    let ridge = oracle_ridge(&kd, &y, lambda).unwrap();
    let same = oracle_exact_blend(&kd, &kd, &y, 0.3, lambda).unwrap();
    assert!((&same - &ridge).norm() < 1e-8 * ridge.norm());
    let g1 = oracle_exact_blend(&khd, &kd, &y, 1.0, lambda).unwrap();
    assert!((&g1 - &ridge).norm() < 1e-8 * ridge.norm());

    let gamma = 0.15;
    let alpha = oracle_exact_blend(&khd, &kd, &y, gamma, lambda).unwrap();
    let grad = oracle_blend_gradient(&alpha, &khd, &kd, &y, gamma, lambda);
    assert!(grad.norm() <= 1e-8, "{}", grad.norm());
    let f = oracle_blend_cost(&alpha, &khd, &kd, &y, gamma, lambda).unwrap();
    for _ in 0..100 {
        let pert = DVector::from_fn(16, |_, _| (rng.random::<f64>() - 0.5) * 0.1);
        let fp = oracle_blend_cost(&(&alpha + pert), &khd, &kd, &y, gamma, lambda).unwrap();
        assert!(f <= fp + 1e-12);
    }
}

#[test]
fn circulant_matrix_properties() {
    let id = circulant_from_vector(&KernelVector(impulse(3, 4))).unwrap();
    assert_eq!(id, DMatrix::identity(12, 12));

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let k = KernelVector(Grid::from_fn(4, 4, |_, _| rng.random::<f64>()));
    let c = circulant_from_vector(&k).unwrap();
    let total: f64 = k.0.data.iter().sum();
    for r in 0..16 {
        assert!((c.row(r).sum() - total).abs() < 1e-12);
    }

    // eigenvalues of C(k) equal F(k) as multisets (k is not symmetric here)
    let eig = c.clone().complex_eigenvalues();
    let spec = dft2(&FeatureMap::from_grid(&k.0));
    let mut unmatched: Vec<Complex64> = spec.data.clone();
    for e in eig.iter() {
        let (idx, d) = unmatched
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s - e).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(d < 1e-8, "eigenvalue {e} unmatched ({d})");
        unmatched.swap_remove(idx);
    }

    let big = KernelVector(Grid::zeros(65, 64));
    assert!(matches!(circulant_from_vector(&big), Err(Error::SizeGuard { .. })));
}

#[test]
fn kernel_parsing() {
    assert_eq!("linear".parse::<Kernel>().unwrap(), Kernel::Linear);
    assert_eq!("gaussian".parse::<Kernel>().unwrap(), Kernel::Gaussian { sigma: 0.5 });
    assert_eq!("gaussian:0.2".parse::<Kernel>().unwrap(), Kernel::Gaussian { sigma: 0.2 });
    assert!("poly".parse::<Kernel>().is_err());
    assert!("gaussian:-1".parse::<Kernel>().is_err());
    let k = Kernel::Gaussian { sigma: 0.3 };
    assert_eq!(k.to_string().parse::<Kernel>().unwrap(), k);
}

proptest! {
    #[test]
    fn prop_round_trip(vals in proptest::collection::vec(-10.0f64..10.0, 30)) {
        let fm = FeatureMap::new(2, 3, 5, vals).unwrap();
        let back = idft2(&dft2(&fm));
        for (a, b) in fm.data.iter().zip(&back.data) {
            prop_assert!((a - b).abs() < 1e-10 * 10.0);
        }
    }

    #[test]
    fn prop_gaussian_autocorrelation_in_unit_interval(
        vals in proptest::collection::vec(0.0f64..1.0, 36),
        sigma in 0.1f64..2.0,
    ) {
        let fm = FeatureMap::new(1, 6, 6, vals).unwrap();
        let k = kernel_autocorrelation(&fm, Kernel::Gaussian { sigma });
        for v in &k.0.data {
            prop_assert!(*v > 0.0 && *v <= 1.0 + 1e-12);
        }
    }
}
