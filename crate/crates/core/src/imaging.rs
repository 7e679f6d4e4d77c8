//! Grayscale frames, Netpbm decoding and padded sub-window extraction.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image dims must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Format(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the nearest edge pixel.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let cx = x.clamp(0, self.width as i64 - 1) as usize;
        let cy = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(cx, cy)
    }

    /// Multiplies every pixel by `factor`, clamping into `[0, 1]`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|v| (v * factor).clamp(0.0, 1.0))
                .collect(),
        }
    }
}

/// Axis-aligned target box in pixel coordinates (top-left corner plus extent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidBox(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Same extent, moved so that its center is `(cx, cy)`.
    pub fn with_center(&self, cx: f64, cy: f64) -> Self {
        Self {
            x: cx - self.w / 2.0,
            y: cy - self.h / 2.0,
            ..*self
        }
    }

    /// Moves the box so that it lies inside a `width` x `height` frame.
    /// Boxes larger than the frame are pinned to the top-left corner.
    pub fn clamped_to(&self, width: usize, height: usize) -> Self {
        let max_x = (width as f64 - self.w).max(0.0);
        let max_y = (height as f64 - self.h).max(0.0);
        Self {
            x: self.x.clamp(0.0, max_x),
            y: self.y.clamp(0.0, max_y),
            ..*self
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Loads a frame as normalized grayscale.
///
/// Binary PGM (`P5`) and PPM (`P6`) are decoded natively. Color pixels are
/// reduced with luma weights `0.299 R + 0.587 G + 0.114 B`. PNG and JPEG are
/// available with the `raster` feature.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return decode_netpbm(&bytes);
    }
    decode_raster(path, &bytes)
}

#[cfg(feature = "raster")]
fn decode_raster(_path: &Path, bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::Format(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| luma(p[0], p[1], p[2], 255))
        .collect();
    GrayImage::new(w as usize, h as usize, data)
}

#[cfg(not(feature = "raster"))]
fn decode_raster(path: &Path, _bytes: &[u8]) -> Result<GrayImage> {
    Err(Error::Format(format!(
        "{}: unsupported format (only binary PGM/PPM without the `raster` feature)",
        path.display()
    )))
}

fn luma(r: u16, g: u16, b: u16, maxval: u16) -> f64 {
    let m = maxval as f64;
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / m
}

/// Decodes binary PGM/PPM bytes.
pub fn decode_netpbm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor.token()?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported magic {other:?}"))),
    };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if width == 0 || height == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("invalid maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::Format("truncated header".into())),
    }
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * channels * sample_bytes;
    let raster = &bytes[cursor.pos..];
    if raster.len() < needed {
        return Err(Error::Format(format!(
            "truncated raster: need {needed} bytes, have {}",
            raster.len()
        )));
    }
    let sample = |i: usize| -> u16 {
        if sample_bytes == 1 {
            raster[i] as u16
        } else {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]])
        }
    };
    let maxval = maxval as u16;
    let data = (0..width * height)
        .map(|p| {
            if channels == 1 {
                (sample(p).min(maxval)) as f64 / maxval as f64
            } else {
                let r = sample(3 * p).min(maxval);
                let g = sample(3 * p + 1).min(maxval);
                let b = sample(3 * p + 2).min(maxval);
                luma(r, g, b, maxval).min(1.0)
            }
        })
        .collect();
    GrayImage::new(width, height, data)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Format(format!("bad header field {tok:?}")))
    }
}

/// Encodes an image as binary PGM with maxval 255.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Cuts a `size = (width, height)` window centered at `center = (x, y)`.
///
/// The center is rounded to the nearest pixel; the window's top-left pixel is
/// `round(center) - size / 2`. Pixels outside the frame replicate the nearest
/// edge pixel.
pub fn extract_window(img: &GrayImage, center: (f64, f64), size: (usize, usize)) -> GrayImage {
    let (w, h) = size;
    let x0 = center.0.round() as i64 - (w / 2) as i64;
    let y0 = center.1.round() as i64 - (h / 2) as i64;
    let mut data = Vec::with_capacity(w * h);
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            data.push(img.get_clamped(x0 + c, y0 + r));
        }
    }
    GrayImage {
        width: w,
        height: h,
        data,
    }
}
