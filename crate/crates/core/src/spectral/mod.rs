//! Fourier-domain kernel ridge regression over all cyclic shifts of a sample.
//!
//! DFT convention: the forward transform is unnormalized and the inverse
//! carries the `1/L` factor, so the transform of the impulse `delta = [1, 0, ..]`
//! is the all-ones spectrum and `C(delta) = I`. Every formula below is written
//! under that convention.
//!
//! Kernels are evaluated with `N = channels * height * width` as the
//! normalizer: `linear(a, b) = <a, b> / N` and
//! `gaussian(a, b) = exp(-|a - b|^2 / (sigma^2 N))`.

pub mod oracle;

use std::cell::RefCell;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, Grid};

/// Divisors with modulus below this make the spectral solve fail.
pub const DIVISOR_GUARD: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place unnormalized 2D FFT of one `h x w` row-major plane.
fn fft2_plane(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let row = plan(w, inverse);
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    if h > 1 {
        let col = plan(h, inverse);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = buf[r * w + c];
            }
            col.process(&mut column);
            for r in 0..h {
                buf[r * w + c] = column[r];
            }
        }
    }
}

/// Complex spectrum of a feature map, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    fn same_shape(&self, other: &Spectrum) -> Result<()> {
        if (self.channels, self.height, self.width) != (other.channels, other.height, other.width)
        {
            return Err(Error::Dimension(format!(
                "spectra differ: {}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        Ok(())
    }
}

pub fn dft2(fm: &FeatureMap) -> Spectrum {
    let (h, w) = (fm.height, fm.width);
    let mut data: Vec<Complex64> = fm.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for plane in data.chunks_exact_mut(h * w) {
        fft2_plane(plane, h, w, false);
    }
    Spectrum {
        channels: fm.channels,
        height: h,
        width: w,
        data,
    }
}

/// Inverse transform, keeping the real part.
pub fn idft2(sp: &Spectrum) -> FeatureMap {
    let (h, w) = (sp.height, sp.width);
    let scale = 1.0 / (h * w) as f64;
    let mut data = sp.data.clone();
    for plane in data.chunks_exact_mut(h * w) {
        fft2_plane(plane, h, w, true);
    }
    FeatureMap {
        channels: sp.channels,
        height: h,
        width: w,
        data: data.into_iter().map(|c| c.re * scale).collect(),
    }
}

fn dft2_grid(g: &Grid) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = g.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_plane(&mut data, g.height, g.width, false);
    data
}

fn idft2_grid(mut data: Vec<Complex64>, h: usize, w: usize) -> Grid {
    fft2_plane(&mut data, h, w, true);
    let scale = 1.0 / (h * w) as f64;
    Grid {
        height: h,
        width: w,
        data: data.into_iter().map(|c| c.re * scale).collect(),
    }
}

/// Kernel function applied between a sample and its cyclic shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Gaussian { sigma: f64 },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Gaussian { sigma: 0.5 }
    }
}

impl Kernel {
    /// Direct evaluation on two equally-shaped maps.
    pub fn eval(&self, a: &FeatureMap, b: &FeatureMap) -> f64 {
        let n = a.data.len() as f64;
        match *self {
            Kernel::Linear => a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>() / n,
            Kernel::Gaussian { sigma } => {
                let d: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d / (sigma * sigma * n)).exp()
            }
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    /// Accepts `linear`, `gaussian` or `gaussian:<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "linear" => Ok(Kernel::Linear),
            "gaussian" | "rbf" => Ok(Kernel::default()),
            _ => {
                let sigma = s
                    .strip_prefix("gaussian:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown kernel {s:?}")))?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!("kernel sigma must be positive: {s}")));
                }
                Ok(Kernel::Gaussian { sigma })
            }
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Linear => write!(f, "linear"),
            Kernel::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
        }
    }
}

/// One kernel value per cyclic shift, laid out on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelVector(pub Grid);

impl KernelVector {
    pub fn grid(&self) -> &Grid {
        &self.0
    }
}

/// `k~[l] = kernel(z, shift(x_hat, l))` for every 2D shift `l`.
pub fn kernel_crosscorrelation(
    z: &FeatureMap,
    x_hat: &FeatureMap,
    kernel: Kernel,
) -> Result<KernelVector> {
    z.same_dims(x_hat)?;
    let (h, w) = (z.height, z.width);
    let zf = dft2(z);
    let xf = dft2(x_hat);
    // sum over channels of conj(X) * Z gives the cross-correlation <z, shift(x, l)>
    let mut acc = vec![Complex64::new(0.0, 0.0); h * w];
    for c in 0..z.channels {
        for ((a, xv), zv) in acc.iter_mut().zip(xf.channel(c)).zip(zf.channel(c)) {
            *a += xv.conj() * zv;
        }
    }
    let corr = idft2_grid(acc, h, w);
    let n = z.data.len() as f64;
    let values = match kernel {
        Kernel::Linear => corr.data.iter().map(|v| v / n).collect(),
        Kernel::Gaussian { sigma } => {
            let zz = z.norm_sq();
            let xx = x_hat.norm_sq();
            corr.data
                .iter()
                .map(|c| (-(zz + xx - 2.0 * c).max(0.0) / (sigma * sigma * n)).exp())
                .collect()
        }
    };
    Ok(KernelVector(Grid {
        height: h,
        width: w,
        data: values,
    }))
}

/// `k[i] = kernel(x, shift(x, i))`.
pub fn kernel_autocorrelation(x: &FeatureMap, kernel: Kernel) -> KernelVector {
    kernel_crosscorrelation(x, x, kernel).expect("a map always matches itself")
}

/// Gaussian pulse `exp(-(dx^2 + dy^2) / (2 s^2))` peaked at zero shift, with
/// cyclically wrapped offsets.
pub fn gaussian_target(height: usize, width: usize, bandwidth: f64) -> Result<Grid> {
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(Error::Config(format!(
            "target bandwidth must be positive, got {bandwidth}"
        )));
    }
    let denom = 2.0 * bandwidth * bandwidth;
    Ok(Grid::from_fn(height, width, |r, c| {
        let dy = r.min(height - r) as f64;
        let dx = c.min(width - c) as f64;
        (-(dx * dx + dy * dy) / denom).exp()
    }))
}

fn guarded_divide(num: &[Complex64], den: &[Complex64]) -> Result<Vec<Complex64>> {
    num.iter()
        .zip(den)
        .map(|(n, d)| {
            let m = d.norm();
            if m < DIVISOR_GUARD || !m.is_finite() {
                Err(Error::Singular { modulus: m })
            } else {
                Ok(n / d)
            }
        })
        .collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(())
}

fn single_channel(h: usize, w: usize, data: Vec<Complex64>) -> Spectrum {
    Spectrum {
        channels: 1,
        height: h,
        width: w,
        data,
    }
}

fn check_grid_dims(a: &Grid, b: &Grid) -> Result<()> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::Dimension(format!(
            "grids differ: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// Closed-form ridge solution `F(alpha) = F(y) / (F(k) + lambda)`.
pub fn ridge_solve(k: &KernelVector, y: &Grid, lambda: f64) -> Result<Spectrum> {
    check_lambda(lambda)?;
    check_grid_dims(&k.0, y)?;
    let kf = dft2_grid(&k.0);
    let yf = dft2_grid(y);
    let den: Vec<Complex64> = kf.iter().map(|v| v + lambda).collect();
    Ok(single_channel(y.height, y.width, guarded_divide(&yf, &den)?))
}

/// Approximate minimizer of the blended cost:
/// `F(alpha) = F(y) / ((1 - gamma) F(k_hat) + gamma F(k) + lambda)`.
pub fn blended_solve(
    k_hat: &KernelVector,
    k: &KernelVector,
    y: &Grid,
    gamma: f64,
    lambda: f64,
) -> Result<Spectrum> {
    check_gamma(gamma)?;
    check_lambda(lambda)?;
    check_grid_dims(&k_hat.0, y)?;
    check_grid_dims(&k.0, y)?;
    let khf = dft2_grid(&k_hat.0);
    let kf = dft2_grid(&k.0);
    let yf = dft2_grid(y);
    let den: Vec<Complex64> = khf
        .iter()
        .zip(&kf)
        .map(|(a, b)| a * (1.0 - gamma) + b * gamma + lambda)
        .collect();
    Ok(single_channel(y.height, y.width, guarded_divide(&yf, &den)?))
}

/// Dual coefficients `alpha` recovered from their spectrum.
pub fn coefficients(sp: &Spectrum) -> Grid {
    let fm = idft2(sp);
    Grid {
        height: fm.height,
        width: fm.width,
        data: fm.data,
    }
}

/// Learned appearance plus classifier spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub appearance: FeatureMap,
    pub coeffs: Spectrum,
    pub kernel: Kernel,
    pub gamma: f64,
    pub lambda: f64,
}

impl SpectralModel {
    /// Plain ridge model on a single appearance (no blending).
    pub fn train(x: &FeatureMap, y: &Grid, kernel: Kernel, lambda: f64) -> Result<Self> {
        let k = kernel_autocorrelation(x, kernel);
        let coeffs = ridge_solve(&k, y, lambda)?;
        Ok(Self {
            appearance: x.clone(),
            coeffs,
            kernel,
            gamma: 1.0,
            lambda,
        })
    }

    /// Model whose appearance is `x_hat` and whose coefficients fit both the
    /// learned appearance and the current sample `x`.
    pub fn train_blended(
        x_hat: &FeatureMap,
        x: &FeatureMap,
        y: &Grid,
        kernel: Kernel,
        gamma: f64,
        lambda: f64,
    ) -> Result<Self> {
        x_hat.same_dims(x)?;
        let k_hat = kernel_autocorrelation(x_hat, kernel);
        let k = kernel_autocorrelation(x, kernel);
        let coeffs = blended_solve(&k_hat, &k, y, gamma, lambda)?;
        Ok(Self {
            appearance: x_hat.clone(),
            coeffs,
            kernel,
            gamma,
            lambda,
        })
    }
}

/// Detection response over all cyclic shifts of the search patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub grid: Grid,
    /// `(row, col)` of the maximum; ties go to the smallest row, then column.
    pub peak: (usize, usize),
    pub peak_value: f64,
}

impl ResponseMap {
    pub fn from_grid(grid: Grid) -> Self {
        let mut best = 0;
        for (i, v) in grid.data.iter().enumerate() {
            if *v > grid.data[best] {
                best = i;
            }
        }
        let peak = (best / grid.width, best % grid.width);
        let peak_value = grid.data[best];
        Self {
            grid,
            peak,
            peak_value,
        }
    }

    /// Peak index as a signed `(dy, dx)` translation; indices past half the
    /// extent wrap to negative shifts.
    pub fn translation(&self) -> (isize, isize) {
        (
            signed_shift(self.peak.0, self.grid.height),
            signed_shift(self.peak.1, self.grid.width),
        )
    }
}

pub(crate) fn signed_shift(idx: usize, dim: usize) -> isize {
    if idx > dim / 2 {
        idx as isize - dim as isize
    } else {
        idx as isize
    }
}

/// Response `y = F^-1(A . F(k~))` with `k~` taken against the learned appearance.
pub fn detect(model: &SpectralModel, z: &FeatureMap) -> Result<ResponseMap> {
    let kt = kernel_crosscorrelation(z, &model.appearance, model.kernel)?;
    let ktf = dft2_grid(&kt.0);
    if ktf.len() != model.coeffs.data.len() {
        return Err(Error::Dimension("model coefficients do not match patch".into()));
    }
    let prod: Vec<Complex64> = ktf.iter().zip(&model.coeffs.data).map(|(a, b)| a * b).collect();
    Ok(ResponseMap::from_grid(idft2_grid(prod, z.height, z.width)))
}

/// Values that can be convexly blended.
pub trait Blend: Copy {
    fn blend(old: Self, new: Self, gamma: f64) -> Self;
}

impl Blend for f64 {
    fn blend(old: f64, new: f64, gamma: f64) -> f64 {
        (1.0 - gamma) * old + gamma * new
    }
}

impl Blend for Complex64 {
    fn blend(old: Complex64, new: Complex64, gamma: f64) -> Complex64 {
        old * (1.0 - gamma) + new * gamma
    }
}

/// Fixed learning-rate update `(1 - gamma) old + gamma new`.
pub fn linear_update<T: Blend>(old: &[T], new: &[T], gamma: f64) -> Result<Vec<T>> {
    check_gamma(gamma)?;
    if old.len() != new.len() {
        return Err(Error::Dimension(format!(
            "update shapes differ: {} vs {}",
            old.len(),
            new.len()
        )));
    }
    Ok(old
        .iter()
        .zip(new)
        .map(|(&o, &n)| T::blend(o, n, gamma))
        .collect())
}

pub fn linear_update_map(old: &FeatureMap, new: &FeatureMap, gamma: f64) -> Result<FeatureMap> {
    old.same_dims(new)?;
    Ok(FeatureMap {
        data: linear_update(&old.data, &new.data, gamma)?,
        ..old.clone()
    })
}

pub fn linear_update_spectrum(old: &Spectrum, new: &Spectrum, gamma: f64) -> Result<Spectrum> {
    old.same_shape(new)?;
    Ok(Spectrum {
        data: linear_update(&old.data, &new.data, gamma)?,
        ..old.clone()
    })
}

/// Weights `gamma (1 - gamma)^(p - j)` for `j = 1..=p` of the unrolled update.
pub fn expanded_weights(gamma: f64, p: usize) -> Vec<f64> {
    (1..=p)
        .map(|j| gamma * (1.0 - gamma).powi((p - j) as i32))
        .collect()
}

#[cfg(test)]
mod tests;
