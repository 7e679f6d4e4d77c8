//! HOG feature maps, cosine tapers and pooled unit-norm descriptors.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

/// Regularizer inside the L2-hys block norm.
const BLOCK_EPS: f64 = 1e-9;
/// L2-hys clipping level.
const HYS_CLIP: f64 = 0.2;
/// Descriptors pool each channel to at most this many cells per side.
pub const DESCRIPTOR_POOL: usize = 8;

/// Dense row-major grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Multi-channel spatial feature grid, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Single-channel map from a grid.
    pub fn from_grid(grid: &Grid) -> Self {
        Self {
            channels: 1,
            height: grid.height,
            width: grid.width,
            data: grid.data.clone(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.height + r) * self.width + col]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn same_dims(&self, other: &FeatureMap) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "feature maps differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// 2D cyclic shift: `out[r][c] = self[r - dy][c - dx]` on every channel.
    pub fn shifted(&self, dy: isize, dx: isize) -> FeatureMap {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut out = FeatureMap::zeros(self.channels, self.height, self.width);
        for ch in 0..self.channels {
            for r in 0..h {
                for c in 0..w {
                    let sr = (r - dy).rem_euclid(h) as usize;
                    let sc = (c - dx).rem_euclid(w) as usize;
                    out.data[(ch * self.height + r as usize) * self.width + c as usize] =
                        self.get(ch, sr, sc);
                }
            }
        }
        out
    }
}

/// HOG parameters. Channels of the output map equal `n_orientations`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogParams {
    pub cell_size: usize,
    pub n_orientations: usize,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            cell_size: 4,
            n_orientations: 9,
        }
    }
}

/// Per-cell orientation histograms before block normalization.
///
/// Central-difference gradients (edge-replicated), unsigned orientation in
/// `[0, pi)`, bin `k` centered at `k * pi / n`. Votes are split linearly
/// between the two nearest bins and bilinearly between the four nearest
/// cell centers.
pub(crate) fn cell_histograms(patch: &GrayImage, params: HogParams) -> Result<FeatureMap> {
    let HogParams {
        cell_size,
        n_orientations,
    } = params;
    if cell_size == 0 || n_orientations < 2 {
        return Err(Error::Config(format!(
            "invalid HOG parameters cell={cell_size} orientations={n_orientations}"
        )));
    }
    let (w, h) = (patch.width(), patch.height());
    if w < cell_size || h < cell_size {
        return Err(Error::Dimension(format!(
            "patch {w}x{h} smaller than one {cell_size}px cell"
        )));
    }
    let (ncx, ncy) = (w / cell_size, h / cell_size);
    let mut hist = FeatureMap::zeros(n_orientations, ncy, ncx);
    let bin_width = PI / n_orientations as f64;
    let cs = cell_size as f64;
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as i64, y as i64);
            let gx = patch.get_clamped(xi + 1, yi) - patch.get_clamped(xi - 1, yi);
            let gy = patch.get_clamped(xi, yi + 1) - patch.get_clamped(xi, yi - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(PI);
            let b = theta / bin_width;
            let b0 = b.floor();
            let fb = b - b0;
            let b0 = (b0 as usize) % n_orientations;
            let b1 = (b0 + 1) % n_orientations;

            let u = (x as f64 + 0.5) / cs - 0.5;
            let v = (y as f64 + 0.5) / cs - 0.5;
            let (u0, v0) = (u.floor(), v.floor());
            let (fu, fv) = (u - u0, v - v0);
            for (cy, wy) in [(v0 as i64, 1.0 - fv), (v0 as i64 + 1, fv)] {
                if cy < 0 || cy >= ncy as i64 || wy == 0.0 {
                    continue;
                }
                for (cx, wx) in [(u0 as i64, 1.0 - fu), (u0 as i64 + 1, fu)] {
                    if cx < 0 || cx >= ncx as i64 || wx == 0.0 {
                        continue;
                    }
                    let base = cy as usize * ncx + cx as usize;
                    let m = mag * wy * wx;
                    hist.data[b0 * ncy * ncx + base] += m * (1.0 - fb);
                    hist.data[b1 * ncy * ncx + base] += m * fb;
                }
            }
        }
    }
    Ok(hist)
}

/// Histogram-of-oriented-gradients feature map.
///
/// Output is `n_orientations x floor(h / cell) x floor(w / cell)`. Each cell is
/// the average of its slices from every 2x2 block containing it, after L2-hys
/// normalization of the block (clip at 0.2, renormalize). Dimensions with a
/// single cell use 1-wide blocks.
pub fn hog(patch: &GrayImage, params: HogParams) -> Result<FeatureMap> {
    let hist = cell_histograms(patch, params)?;
    let (n, ncy, ncx) = hist.dims();
    let by = 2.min(ncy);
    let bx = 2.min(ncx);
    let mut out = FeatureMap::zeros(n, ncy, ncx);
    let mut counts = vec![0usize; ncy * ncx];
    let mut block = Vec::with_capacity(by * bx * n);
    for r0 in 0..=(ncy - by) {
        for c0 in 0..=(ncx - bx) {
            block.clear();
            for r in r0..r0 + by {
                for c in c0..c0 + bx {
                    for o in 0..n {
                        block.push(hist.get(o, r, c));
                    }
                }
            }
            l2_hys(&mut block);
            let mut k = 0;
            for r in r0..r0 + by {
                for c in c0..c0 + bx {
                    counts[r * ncx + c] += 1;
                    for o in 0..n {
                        out.data[(o * ncy + r) * ncx + c] += block[k];
                        k += 1;
                    }
                }
            }
        }
    }
    for o in 0..n {
        for (i, &cnt) in counts.iter().enumerate() {
            out.data[o * ncy * ncx + i] /= cnt as f64;
        }
    }
    Ok(out)
}

fn l2_hys(v: &mut [f64]) {
    let normalize = |v: &mut [f64]| {
        let norm = (v.iter().map(|x| x * x).sum::<f64>() + BLOCK_EPS * BLOCK_EPS).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    normalize(v);
    v.iter_mut().for_each(|x| *x = x.min(HYS_CLIP));
    normalize(v);
}

/// Outer product of 1D Hann windows. A dimension of length 1 uses the value 1.
pub fn cosine_window(height: usize, width: usize) -> Grid {
    let hann = |n: usize| -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        (0..n)
            .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos()))
            .collect()
    };
    let (wy, wx) = (hann(height), hann(width));
    Grid::from_fn(height, width, |r, c| wy[r] * wx[c])
}

pub fn apply_window(fm: &FeatureMap, win: &Grid) -> Result<FeatureMap> {
    if fm.height != win.height || fm.width != win.width {
        return Err(Error::Dimension(format!(
            "window {}x{} does not match feature map {}x{}",
            win.height, win.width, fm.height, fm.width
        )));
    }
    let plane = fm.plane_len();
    let data = fm
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| v * win.data[i % plane])
        .collect();
    Ok(FeatureMap {
        channels: fm.channels,
        height: fm.height,
        width: fm.width,
        data,
    })
}

/// Unit-norm appearance descriptor used for clustering distances.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
    zero: bool,
}

impl Descriptor {
    /// Normalizes `values`; an all-zero input yields the flagged zero descriptor.
    pub fn from_values(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            values.iter_mut().for_each(|v| *v = 0.0);
            return Self { values, zero: true };
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Self {
            values,
            zero: false,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn distance_sq(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Average-pools each channel to at most 8x8 cells, flattens and L2-normalizes.
pub fn descriptor(fm: &FeatureMap) -> Descriptor {
    let ph = fm.height.min(DESCRIPTOR_POOL);
    let pw = fm.width.min(DESCRIPTOR_POOL);
    let mut values = Vec::with_capacity(fm.channels * ph * pw);
    for ch in 0..fm.channels {
        for i in 0..ph {
            let (r0, r1) = (i * fm.height / ph, (i + 1) * fm.height / ph);
            for j in 0..pw {
                let (c0, c1) = (j * fm.width / pw, (j + 1) * fm.width / pw);
                let mut sum = 0.0;
                for r in r0..r1 {
                    for c in c0..c1 {
                        sum += fm.get(ch, r, c);
                    }
                }
                values.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
            }
        }
    }
    Descriptor::from_values(values)
}
