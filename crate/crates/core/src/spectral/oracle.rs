//! Dense-matrix references for the spectral solvers. Quadratic or cubic in the
//! number of bins, so only meant for small grids in tests and diagnostics.

use nalgebra::{DMatrix, DVector};

use super::KernelVector;
use crate::error::{Error, Result};

/// Largest grid (in bins) the dense oracles accept.
pub const MAX_DENSE_BINS: usize = 4096;

/// Circulant (block-circulant in 2D) matrix whose row `i` is `k` cyclically
/// shifted by `i`: `C[i][j] = k[j - i]` with 2D wrap-around.
pub fn circulant_from_vector(k: &KernelVector) -> Result<DMatrix<f64>> {
    let g = &k.0;
    let (h, w) = (g.height, g.width);
    let len = h * w;
    if len > MAX_DENSE_BINS {
        return Err(Error::SizeGuard {
            len,
            limit: MAX_DENSE_BINS,
        });
    }
    Ok(DMatrix::from_fn(len, len, |i, j| {
        let (ri, ci) = (i / w, i % w);
        let (rj, cj) = (j / w, j % w);
        let r = (rj + h - ri) % h;
        let c = (cj + w - ci) % w;
        g.get(r, c)
    }))
}

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Regularized least-squares cost `(y - K a)^T (y - K a) + lambda a^T K a`.
pub fn oracle_rls_cost(
    alpha: &DVector<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    let n = y.len();
    check_square("K", k, n)?;
    if alpha.len() != n {
        return Err(Error::Dimension(format!(
            "alpha has {} entries, expected {n}",
            alpha.len()
        )));
    }
    let ka = k * alpha;
    let r = y - &ka;
    Ok(r.dot(&r) + lambda * alpha.dot(&ka))
}

/// Blended cost: `(1 - gamma)` times the cost under `K_hat` plus `gamma` times
/// the cost under `K`.
pub fn oracle_blend_cost(
    alpha: &DVector<f64>,
    k_hat: &DMatrix<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    lambda: f64,
) -> Result<f64> {
    Ok((1.0 - gamma) * oracle_rls_cost(alpha, k_hat, y, lambda)?
        + gamma * oracle_rls_cost(alpha, k, y, lambda)?)
}

/// Gradient of [`oracle_blend_cost`] with respect to `alpha`, valid for
/// symmetric kernel matrices.
pub fn oracle_blend_gradient(
    alpha: &DVector<f64>,
    k_hat: &DMatrix<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    lambda: f64,
) -> DVector<f64> {
    let part = |m: &DMatrix<f64>| -> DVector<f64> {
        let ma = m * alpha;
        // d/da [(y - Ma)^T (y - Ma) + lambda a^T M a] = 2 M (Ma - y) + 2 lambda M a
        (m * (&ma - y)) * 2.0 + ma * (2.0 * lambda)
    };
    part(k_hat) * (1.0 - gamma) + part(k) * gamma
}

fn solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.lu();
    // relative pivot check, LU itself only fails on exact zeros
    let u = lu.u();
    let max = u.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if max == 0.0 || min / max < 1e-14 {
        return Err(Error::Singular { modulus: min });
    }
    lu.solve(b).ok_or(Error::Singular { modulus: 0.0 })
}

/// Dense ridge solution `(K + lambda I)^-1 y`.
pub fn oracle_ridge(k: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let n = y.len();
    check_square("K", k, n)?;
    solve(k + DMatrix::identity(n, n) * lambda, y)
}

/// Exact stationary point of the blended cost:
/// `[(1-g) K_hat (K_hat + lambda I) + g K (K + lambda I)] a = [(1-g) K_hat + g K] y`.
pub fn oracle_exact_blend(
    k_hat: &DMatrix<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    lambda: f64,
) -> Result<DVector<f64>> {
    let n = y.len();
    check_square("K_hat", k_hat, n)?;
    check_square("K", k, n)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = k_hat * (k_hat + &eye * lambda) * (1.0 - gamma) + k * (k + &eye * lambda) * gamma;
    let rhs = (k_hat * (1.0 - gamma) + k * gamma) * y;
    solve(lhs, &rhs)
}

/// Flattens a grid row-major into a column vector.
pub fn to_vector(g: &crate::features::Grid) -> DVector<f64> {
    DVector::from_column_slice(&g.data)
}
