//! Frame-by-frame tracking: detect, update the model from the sample and
//! memory pools, periodically cluster the sample pool into memories, and fall
//! back to a full-frame rescan when the peak looks unreliable.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::clustering::{self, ClusterParams};
use crate::error::{Error, Result};
use crate::features::{self, Descriptor, FeatureMap, Grid, HogParams};
use crate::imaging::{self, BBox, GrayImage};
use crate::memory::{self, IngestParams, MemoryPool, Sample};
use crate::spectral::{self, Kernel, ResponseMap, SpectralModel, Spectrum};

/// Returned by [`psr`] when the sidelobe is flat.
pub const PSR_SENTINEL: f64 = 1e6;
/// Side of the square excluded around the peak when measuring the sidelobe.
pub const PSR_EXCLUSION: usize = 11;
/// Smallest search window, in cells, along either axis.
pub const MIN_WINDOW_CELLS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Memory,
    BaselineMosse,
    BaselineCsk,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Memory, Mode::BaselineMosse, Mode::BaselineCsk];

    pub fn is_baseline(self) -> bool {
        self != Mode::Memory
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "memory" => Ok(Mode::Memory),
            "baseline_mosse" | "mosse" => Ok(Mode::BaselineMosse),
            "baseline_csk" | "csk" => Ok(Mode::BaselineCsk),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Memory => "memory",
            Mode::BaselineMosse => "baseline_mosse",
            Mode::BaselineCsk => "baseline_csk",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub mode: Mode,
    pub gamma: f64,
    pub lambda: f64,
    pub kernel: Kernel,
    pub hog: HogParams,
    /// Search window size relative to the target.
    pub padding: f64,
    /// Regression target bandwidth relative to `sqrt(w * h)` of the target.
    pub output_sigma: f64,
    pub cluster_interval: usize,
    pub pool_capacity: usize,
    pub rho_rel: f64,
    pub n0: usize,
    pub eps_factor: f64,
    pub max_memories: usize,
    pub max_memory_samples: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub psr_threshold: f64,
    /// Rescan stride in pixels; `None` means half the window.
    pub rescan_stride: Option<usize>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Memory,
            gamma: 0.15,
            lambda: 1e-4,
            kernel: Kernel::default(),
            hog: HogParams::default(),
            padding: 2.0,
            output_sigma: 0.1,
            cluster_interval: 50,
            pool_capacity: 400,
            rho_rel: 0.0,
            n0: 40,
            eps_factor: 1.2,
            max_memories: 10,
            max_memory_samples: 100,
            sigma1: 1e-3,
            sigma2: 1e-2,
            psr_threshold: 30.0,
            rescan_stride: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

impl TrackerConfig {
    /// Field names accepted by [`TrackerConfig::set`].
    pub const KEYS: [&'static str; 19] = [
        "mode",
        "gamma",
        "lambda",
        "kernel",
        "cell_size",
        "n_orientations",
        "padding",
        "output_sigma",
        "cluster_interval",
        "pool_capacity",
        "rho_rel",
        "n0",
        "eps_factor",
        "max_memories",
        "max_memory_samples",
        "sigma1",
        "sigma2",
        "psr_threshold",
        "rescan_stride",
    ];

    /// Sets one field by name. Dashes and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "mode" => self.mode = v.parse()?,
            "gamma" => self.gamma = parse_num(&key, v)?,
            "lambda" => self.lambda = parse_num(&key, v)?,
            "kernel" => self.kernel = v.parse()?,
            "cell_size" => self.hog.cell_size = parse_num(&key, v)?,
            "n_orientations" => self.hog.n_orientations = parse_num(&key, v)?,
            "padding" => self.padding = parse_num(&key, v)?,
            "output_sigma" => self.output_sigma = parse_num(&key, v)?,
            "cluster_interval" => self.cluster_interval = parse_num(&key, v)?,
            "pool_capacity" => self.pool_capacity = parse_num(&key, v)?,
            "rho_rel" => self.rho_rel = parse_num(&key, v)?,
            "n0" => self.n0 = parse_num(&key, v)?,
            "eps_factor" => self.eps_factor = parse_num(&key, v)?,
            "max_memories" => self.max_memories = parse_num(&key, v)?,
            "max_memory_samples" => self.max_memory_samples = parse_num(&key, v)?,
            "sigma1" => self.sigma1 = parse_num(&key, v)?,
            "sigma2" => self.sigma2 = parse_num(&key, v)?,
            "psr_threshold" => self.psr_threshold = parse_num(&key, v)?,
            "rescan_stride" => {
                self.rescan_stride = match v {
                    "" | "auto" => None,
                    _ => Some(parse_num(&key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", n + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(text)?;
        c.validate()?;
        Ok(c)
    }

    /// `key = value` rendering that [`TrackerConfig::from_kv`] reads back.
    pub fn to_kv(&self) -> String {
        let stride = self
            .rescan_stride
            .map_or_else(|| "auto".to_string(), |s| s.to_string());
        format!(
            "mode = {}\ngamma = {}\nlambda = {}\nkernel = {}\ncell_size = {}\n\
             n_orientations = {}\npadding = {}\noutput_sigma = {}\ncluster_interval = {}\n\
             pool_capacity = {}\nrho_rel = {}\nn0 = {}\neps_factor = {}\nmax_memories = {}\n\
             max_memory_samples = {}\nsigma1 = {}\nsigma2 = {}\npsr_threshold = {}\n\
             rescan_stride = {}\n",
            self.mode,
            self.gamma,
            self.lambda,
            self.kernel,
            self.hog.cell_size,
            self.hog.n_orientations,
            self.padding,
            self.output_sigma,
            self.cluster_interval,
            self.pool_capacity,
            self.rho_rel,
            self.n0,
            self.eps_factor,
            self.max_memories,
            self.max_memory_samples,
            self.sigma1,
            self.sigma2,
            self.psr_threshold,
            stride,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.padding.is_nan() || self.padding < 1.0 {
            return bad(format!("padding must be >= 1, got {}", self.padding));
        }
        if self.output_sigma.is_nan() || self.output_sigma <= 0.0 {
            return bad("output_sigma must be positive".into());
        }
        if self.hog.cell_size == 0 || self.hog.n_orientations < 2 {
            return bad("cell_size must be >= 1 and n_orientations >= 2".into());
        }
        for (name, v) in [
            ("cluster_interval", self.cluster_interval),
            ("pool_capacity", self.pool_capacity),
            ("max_memories", self.max_memories),
            ("max_memory_samples", self.max_memory_samples),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.n0 < 2 {
            return bad(format!("n0 must be >= 2, got {}", self.n0));
        }
        if !(self.rho_rel >= 0.0 && self.eps_factor >= 0.0) {
            return bad("rho_rel and eps_factor must be non-negative".into());
        }
        if !(self.sigma1 >= 0.0 && self.sigma2 >= 0.0) {
            return bad("sigma1 and sigma2 must be non-negative".into());
        }
        if !self.psr_threshold.is_finite() {
            return bad("psr_threshold must be finite".into());
        }
        if self.rescan_stride == Some(0) {
            return bad("rescan_stride must be >= 1".into());
        }
        Ok(())
    }

    /// Kernel actually used by the configured mode: MOSSE is linear, the
    /// others use the configured kernel.
    pub fn effective_kernel(&self) -> Kernel {
        match self.mode {
            Mode::BaselineMosse => Kernel::Linear,
            _ => self.kernel,
        }
    }
}

/// Per-frame output.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    /// 1-based frame number.
    pub frame: usize,
    pub bbox: BBox,
    pub peak: f64,
    pub psr: f64,
    pub active_memory: Option<usize>,
    pub rescanned: bool,
}

impl TrackResult {
    pub const CSV_HEADER: &'static str = "frame,x,y,w,h,peak,psr,active_memory,rescanned";

    /// One CSV row; floats use the shortest exact representation and an
    /// absent memory is an empty field.
    pub fn to_csv_row(&self) -> String {
        let mem = self.active_memory.map_or_else(String::new, |m| m.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.frame,
            self.bbox.x,
            self.bbox.y,
            self.bbox.w,
            self.bbox.h,
            self.peak,
            self.psr,
            mem,
            u8::from(self.rescanned)
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse(format!("expected 9 fields, got {}: '{line}'", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number '{}'", f[i])))
        };
        let frame = f[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad frame '{}'", f[0])))?;
        let active_memory = match f[7].trim() {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Parse(format!("bad memory id '{s}'")))?),
        };
        let rescanned = match f[8].trim() {
            "0" | "false" => false,
            "1" | "true" => true,
            s => return Err(Error::Parse(format!("bad flag '{s}'"))),
        };
        Ok(Self {
            frame,
            bbox: BBox {
                x: num(1)?,
                y: num(2)?,
                w: num(3)?,
                h: num(4)?,
            },
            peak: num(5)?,
            psr: num(6)?,
            active_memory,
            rescanned,
        })
    }
}

/// Writes results as CSV with a header line.
pub fn results_csv(results: &[TrackResult]) -> String {
    let mut out = String::from(TrackResult::CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_results_csv(text: &str) -> Result<Vec<TrackResult>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == TrackResult::CSV_HEADER => {}
        _ => return Err(Error::Parse("missing results header".into())),
    }
    lines.map(TrackResult::from_csv_row).collect()
}

/// Peak-to-sidelobe ratio. The sidelobe is every cell outside the
/// `11 x 11` square centered on the peak; the square wraps cyclically like
/// the response itself. A flat sidelobe gives [`PSR_SENTINEL`].
pub fn psr(resp: &ResponseMap) -> Result<f64> {
    let g = &resp.grid;
    if g.height < PSR_EXCLUSION || g.width < PSR_EXCLUSION {
        return Err(Error::Dimension(format!(
            "response {}x{} is smaller than the {PSR_EXCLUSION}x{PSR_EXCLUSION} exclusion",
            g.height, g.width
        )));
    }
    let half = (PSR_EXCLUSION / 2) as isize;
    let (pr, pc) = (resp.peak.0 as isize, resp.peak.1 as isize);
    let mut excluded = vec![false; g.len()];
    for dr in -half..=half {
        for dc in -half..=half {
            let r = (pr + dr).rem_euclid(g.height as isize) as usize;
            let c = (pc + dc).rem_euclid(g.width as isize) as usize;
            excluded[r * g.width + c] = true;
        }
    }
    let side: Vec<f64> = g
        .data
        .iter()
        .zip(&excluded)
        .filter(|(_, &e)| !e)
        .map(|(&v, _)| v)
        .collect();
    if side.is_empty() {
        return Ok(PSR_SENTINEL);
    }
    let n = side.len() as f64;
    let mean = side.iter().sum::<f64>() / n;
    let var = side.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-12 {
        return Ok(PSR_SENTINEL);
    }
    Ok((resp.peak_value - mean) / sd)
}

/// Sub-cell offset of a peak, in `[-0.5, 0.5]`. Fits a gaussian (a parabola
/// through the logs) when all three samples are positive, which is unbiased
/// for the gaussian-shaped peaks the filter is trained to produce.
fn peak_offset(left: f64, mid: f64, right: f64) -> f64 {
    if left > 0.0 && mid > 0.0 && right > 0.0 {
        return parabolic_offset(left.ln(), mid.ln(), right.ln());
    }
    parabolic_offset(left, mid, right)
}

/// Vertex offset of a parabola through three equally spaced samples.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let den = left - 2.0 * mid + right;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / den).clamp(-0.5, 0.5)
}

/// Peak translation in cells with sub-cell refinement, as `(dy, dx)`.
fn refined_translation(resp: &ResponseMap) -> (f64, f64) {
    let g = &resp.grid;
    let (r, c) = resp.peak;
    let (h, w) = (g.height, g.width);
    let (dy, dx) = resp.translation();
    let oy = if h >= 3 {
        peak_offset(g.get((r + h - 1) % h, c), resp.peak_value, g.get((r + 1) % h, c))
    } else {
        0.0
    };
    let ox = if w >= 3 {
        peak_offset(g.get(r, (c + w - 1) % w), resp.peak_value, g.get(r, (c + 1) % w))
    } else {
        0.0
    };
    (dy as f64 + oy, dx as f64 + ox)
}

/// Fixed geometry of the search window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGeometry {
    /// Window size in pixels.
    pub width: usize,
    pub height: usize,
    pub cell_size: usize,
    pub cosine: Grid,
    pub target: Grid,
}

impl WindowGeometry {
    pub fn new(target_w: f64, target_h: f64, config: &TrackerConfig) -> Result<Self> {
        let cell = config.hog.cell_size;
        let cells = |extent: f64| -> usize {
            ((config.padding * extent / cell as f64).ceil() as usize).max(MIN_WINDOW_CELLS)
        };
        let (cw, ch) = (cells(target_w), cells(target_h));
        let bandwidth = config.output_sigma * (target_w * target_h).sqrt() / cell as f64;
        Ok(Self {
            width: cw * cell,
            height: ch * cell,
            cell_size: cell,
            cosine: features::cosine_window(ch, cw),
            target: spectral::gaussian_target(ch, cw, bandwidth)?,
        })
    }

    /// Windowed HOG features of the search window centered at `center`.
    pub fn features(&self, frame: &GrayImage, center: (f64, f64), hog: HogParams) -> Result<FeatureMap> {
        let patch = imaging::extract_window(frame, center, (self.width, self.height));
        features::apply_window(&features::hog(&patch, hog)?, &self.cosine)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    /// Memory mode and CSK keep a dual model directly.
    Dual(SpectralModel),
    /// MOSSE keeps numerator and denominator spectra separately.
    Split {
        appearance: FeatureMap,
        num: Spectrum,
        den: Spectrum,
        lambda: f64,
    },
}

impl Model {
    fn appearance(&self) -> &FeatureMap {
        match self {
            Model::Dual(m) => &m.appearance,
            Model::Split { appearance, .. } => appearance,
        }
    }

    fn detect(&self, z: &FeatureMap) -> Result<ResponseMap> {
        match self {
            Model::Dual(m) => spectral::detect(m, z),
            Model::Split {
                appearance,
                num,
                den,
                lambda,
            } => {
                let data = num
                    .data
                    .iter()
                    .zip(&den.data)
                    .map(|(a, b)| {
                        if b.norm() < spectral::DIVISOR_GUARD {
                            return Err(Error::Singular { modulus: b.norm() });
                        }
                        Ok(a / b)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let m = SpectralModel {
                    appearance: appearance.clone(),
                    coeffs: Spectrum { data, ..num.clone() },
                    kernel: Kernel::Linear,
                    gamma: 1.0,
                    lambda: *lambda,
                };
                spectral::detect(&m, z)
            }
        }
    }
}

fn grid_spectrum(g: &Grid) -> Spectrum {
    spectral::dft2(&FeatureMap::from_grid(g))
}

/// MOSSE-style numerator and denominator for one sample.
fn split_terms(x: &FeatureMap, y: &Grid, lambda: f64) -> (Spectrum, Spectrum) {
    let k = spectral::kernel_autocorrelation(x, Kernel::Linear);
    let mut den = grid_spectrum(&k.0);
    den.data.iter_mut().for_each(|v| *v += lambda);
    (grid_spectrum(y), den)
}

/// Full tracker state. Owned by one thread and advanced by [`Tracker::step`].
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    geometry: WindowGeometry,
    frame_size: (usize, usize),
    bbox: BBox,
    model: Model,
    samples: VecDeque<Sample>,
    memories: MemoryPool,
    scale: Option<f64>,
    frame: usize,
    active: Option<usize>,
    detections: Vec<(BBox, f64)>,
    rescan_model: Option<(usize, SpectralModel)>,
    initial: TrackResult,
}

impl Tracker {
    /// Starts tracking `bbox` on `frame`, which becomes frame 1.
    pub fn init(frame: &GrayImage, bbox: BBox, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        bbox.validate()?;
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        if bbox.x < 0.0 || bbox.y < 0.0 || bbox.x + bbox.w > fw || bbox.y + bbox.h > fh {
            return Err(Error::InvalidBox(format!(
                "box {bbox:?} is not inside the {fw}x{fh} frame"
            )));
        }
        let geometry = WindowGeometry::new(bbox.w, bbox.h, &config)?;
        let x = geometry.features(frame, bbox.center(), config.hog)?;
        let kernel = config.effective_kernel();
        let model = match config.mode {
            Mode::BaselineMosse => {
                let (num, den) = split_terms(&x, &geometry.target, config.lambda);
                Model::Split {
                    appearance: x.clone(),
                    num,
                    den,
                    lambda: config.lambda,
                }
            }
            _ => Model::Dual(SpectralModel::train(&x, &geometry.target, kernel, config.lambda)?),
        };
        let resp = model.detect(&x)?;
        let initial = TrackResult {
            frame: 1,
            bbox,
            peak: resp.peak_value,
            psr: psr(&resp)?,
            active_memory: None,
            rescanned: false,
        };
        let mut samples = VecDeque::new();
        if config.mode == Mode::Memory {
            samples.push_back(Sample {
                frame: 1,
                descriptor: features::descriptor(&x),
                features: x,
            });
        }
        Ok(Self {
            frame_size: (frame.width(), frame.height()),
            config,
            geometry,
            bbox,
            model,
            samples,
            memories: MemoryPool::new(),
            scale: None,
            frame: 1,
            active: None,
            detections: Vec::new(),
            rescan_model: None,
            initial,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn geometry(&self) -> &WindowGeometry {
        &self.geometry
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Number of the last processed frame.
    pub fn frame(&self) -> usize {
        self.frame
    }

    /// Result for the initialization frame: the given box and the
    /// self-detection peak.
    pub fn initial_result(&self) -> &TrackResult {
        &self.initial
    }

    pub fn samples(&self) -> &VecDeque<Sample> {
        &self.samples
    }

    pub fn memories(&self) -> &MemoryPool {
        &self.memories
    }

    pub fn active_memory(&self) -> Option<usize> {
        self.active
    }

    /// Distance scale measured on the first `n0` samples, once available.
    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    /// Learned appearance the next detection correlates against.
    pub fn appearance(&self) -> &FeatureMap {
        self.model.appearance()
    }

    /// Response of the current model on a window centered at `center`.
    pub fn respond(&self, frame: &GrayImage, center: (f64, f64)) -> Result<ResponseMap> {
        let z = self.geometry.features(frame, center, self.config.hog)?;
        self.model.detect(&z)
    }

    /// Queues coarse detections for the next step. They are consulted only if
    /// the local peak is unreliable.
    pub fn external_detections(&mut self, detections: &[(BBox, f64)]) -> Result<()> {
        for (b, s) in detections {
            b.validate()?;
            if !s.is_finite() {
                return Err(Error::InvalidBox(format!("non-finite detection score {s}")));
            }
        }
        if !detections.is_empty() {
            self.detections = detections.to_vec();
        }
        Ok(())
    }

    fn check_frame(&self, frame: &GrayImage) -> Result<()> {
        if (frame.width(), frame.height()) != self.frame_size {
            return Err(Error::Dimension(format!(
                "frame is {}x{}, tracker was initialized on {}x{}",
                frame.width(),
                frame.height(),
                self.frame_size.0,
                self.frame_size.1
            )));
        }
        Ok(())
    }

    /// Box obtained by moving a window centered at `center` by the peak of
    /// `resp`. The move is rounded to whole pixels.
    fn moved_box(&self, center: (f64, f64), resp: &ResponseMap) -> BBox {
        let (dy, dx) = refined_translation(resp);
        let cell = self.geometry.cell_size as f64;
        let cx = center.0.round() + (dx * cell).round();
        let cy = center.1.round() + (dy * cell).round();
        self.bbox
            .with_center(cx, cy)
            .clamped_to(self.frame_size.0, self.frame_size.1)
    }

    /// Local detection at the previous box, then external candidates and the
    /// rescan when the peak is weak.
    fn locate(&mut self, frame: &GrayImage) -> Result<(BBox, f64, f64, bool)> {
        let center = self.bbox.center();
        let resp = self.respond(frame, center)?;
        let mut best = (self.moved_box(center, &resp), resp.peak_value, psr(&resp)?);
        let threshold = self.config.psr_threshold;

        let candidates = std::mem::take(&mut self.detections);
        if best.2 < threshold {
            let top = candidates
                .iter()
                .fold(None::<&(BBox, f64)>, |acc, d| match acc {
                    Some(a) if a.1 >= d.1 => Some(a),
                    _ => Some(d),
                });
            if let Some((b, _)) = top {
                let c = b.center();
                let resp = self.respond(frame, c)?;
                best = (self.moved_box(c, &resp), resp.peak_value, psr(&resp)?);
            }
        }
        if best.2 < threshold && !self.config.mode.is_baseline() {
            if let Some((b, peak, p)) = self.rescan(frame)? {
                return Ok((b, peak, p, true));
            }
        }
        Ok((best.0, best.1, best.2, false))
    }

    /// Processes the next frame in the configured mode.
    pub fn step(&mut self, frame: &GrayImage) -> Result<TrackResult> {
        if self.config.mode.is_baseline() {
            return self.baseline_step(frame);
        }
        self.check_frame(frame)?;
        let (bbox, peak, p, rescanned) = self.locate(frame)?;
        self.frame += 1;
        self.bbox = bbox;

        let x = self.geometry.features(frame, bbox.center(), self.config.hog)?;
        let desc = features::descriptor(&x);
        self.samples.push_back(Sample {
            frame: self.frame,
            descriptor: desc.clone(),
            features: x.clone(),
        });
        while self.samples.len() > self.config.pool_capacity {
            self.samples.pop_front();
        }
        self.update_model(&x, &desc)?;

        if self.frame == self.config.n0 {
            self.calibrate()?;
        }
        if self.frame.is_multiple_of(self.config.cluster_interval) {
            self.update_memories()?;
        }
        Ok(TrackResult {
            frame: self.frame,
            bbox,
            peak,
            psr: p,
            active_memory: self.active,
            rescanned,
        })
    }

    fn update_model(&mut self, x: &FeatureMap, desc: &Descriptor) -> Result<()> {
        let cfg = &self.config;
        let y = &self.geometry.target;
        let prev = features::descriptor(self.model.appearance());
        let model = match memory::select_memory(&prev, &self.memories) {
            None => {
                self.active = None;
                SpectralModel::train(x, y, cfg.kernel, cfg.lambda)?
            }
            Some(m) => {
                self.active = Some(m.id);
                let beta = memory::blend_weights(desc, m);
                let x_hat = memory::compose_appearance(Some(m), &beta, x, cfg.gamma)?;
                SpectralModel::train_blended(&x_hat, x, y, cfg.kernel, cfg.gamma, cfg.lambda)?
            }
        };
        self.model = Model::Dual(model);
        Ok(())
    }

    fn calibrate(&mut self) -> Result<()> {
        let n = self.config.n0.min(self.samples.len());
        if n < 2 {
            return Ok(());
        }
        let descs: Vec<Descriptor> = self.samples.iter().take(n).map(|s| s.descriptor.clone()).collect();
        let d = clustering::distance_matrix(&descs)?;
        self.scale = Some(clustering::baseline_scale(&d, n)?);
        Ok(())
    }

    fn update_memories(&mut self) -> Result<()> {
        let Some(scale) = self.scale else {
            return Ok(());
        };
        let descs: Vec<Descriptor> = self.samples.iter().map(|s| s.descriptor.clone()).collect();
        let d = clustering::distance_matrix(&descs)?;
        let j = clustering::integral_image(&d);
        let params = ClusterParams {
            rho_rel: self.config.rho_rel,
            eps_abs: self.config.eps_factor * scale,
        };
        let seg = clustering::cluster(&j, descs.len(), params);
        memory::ingest_clusters(
            &seg,
            &mut self.samples,
            &mut self.memories,
            IngestParams {
                current_frame: self.frame,
                max_samples: self.config.max_memory_samples,
                sigma1: self.config.sigma1,
                sigma2: self.config.sigma2,
            },
        )?;
        memory::evict(&mut self.memories, self.config.max_memories);
        if self.active.is_some_and(|id| self.memories.get(id).is_none()) {
            self.active = None;
        }
        Ok(())
    }

    /// Centers of the rescan windows in row-major order.
    fn scan_centers(&self) -> Vec<(f64, f64)> {
        let (fw, fh) = self.frame_size;
        let (ww, wh) = (self.geometry.width, self.geometry.height);
        let axis = |extent: usize, win: usize, stride: usize| -> Vec<usize> {
            let first = win / 2;
            let last = extent.saturating_sub(win / 2).max(first);
            let mut v: Vec<usize> = (first..=last).step_by(stride.max(1)).collect();
            if *v.last().expect("non-empty range") != last {
                v.push(last);
            }
            v
        };
        let xs = axis(fw, ww, self.config.rescan_stride.unwrap_or(ww / 2));
        let ys = axis(fh, wh, self.config.rescan_stride.unwrap_or(wh / 2));
        ys.iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x as f64, y as f64)))
            .collect()
    }

    /// Scans the whole frame against a model of the most confident memory's
    /// mean appearance. Returns the best-peaked box with its peak and PSR when
    /// that PSR clears the threshold.
    pub fn rescan(&mut self, frame: &GrayImage) -> Result<Option<(BBox, f64, f64)>> {
        self.check_frame(frame)?;
        let Some(top) = self.memories.most_confident() else {
            return Ok(None);
        };
        let stale = self.rescan_model.as_ref().is_none_or(|(id, _)| *id != top.id);
        if stale {
            let m = SpectralModel::train(
                &top.mean_appearance,
                &self.geometry.target,
                self.config.kernel,
                self.config.lambda,
            )?;
            self.rescan_model = Some((top.id, m));
        }
        let model = &self.rescan_model.as_ref().expect("model cached above").1;
        let mut best: Option<((f64, f64), ResponseMap)> = None;
        for c in self.scan_centers() {
            let z = self.geometry.features(frame, c, self.config.hog)?;
            let resp = spectral::detect(model, &z)?;
            if best.as_ref().is_none_or(|(_, b)| resp.peak_value > b.peak_value) {
                best = Some((c, resp));
            }
        }
        let (c, resp) = best.expect("at least one scan window");
        let p = psr(&resp)?;
        if p < self.config.psr_threshold {
            return Ok(None);
        }
        Ok(Some((self.moved_box(c, &resp), resp.peak_value, p)))
    }

    /// Learning-rate update without pools or clustering.
    pub fn baseline_step(&mut self, frame: &GrayImage) -> Result<TrackResult> {
        if !self.config.mode.is_baseline() {
            return Err(Error::Config("baseline_step needs a baseline mode".into()));
        }
        self.check_frame(frame)?;
        let (bbox, peak, p, _) = self.locate(frame)?;
        self.frame += 1;
        self.bbox = bbox;
        let x = self.geometry.features(frame, bbox.center(), self.config.hog)?;
        let (y, gamma, lambda) = (&self.geometry.target, self.config.gamma, self.config.lambda);
        self.model = match &self.model {
            Model::Dual(old) => {
                let fresh = SpectralModel::train(&x, y, old.kernel, lambda)?;
                Model::Dual(SpectralModel {
                    appearance: spectral::linear_update_map(&old.appearance, &x, gamma)?,
                    coeffs: spectral::linear_update_spectrum(&old.coeffs, &fresh.coeffs, gamma)?,
                    ..fresh
                })
            }
            Model::Split {
                appearance,
                num,
                den,
                ..
            } => {
                let (n, d) = split_terms(&x, y, lambda);
                Model::Split {
                    appearance: spectral::linear_update_map(appearance, &x, gamma)?,
                    num: spectral::linear_update_spectrum(num, &n, gamma)?,
                    den: spectral::linear_update_spectrum(den, &d, gamma)?,
                    lambda,
                }
            }
        };
        Ok(TrackResult {
            frame: self.frame,
            bbox,
            peak,
            psr: p,
            active_memory: None,
            rescanned: false,
        })
    }
}

/// Runs a tracker over `frames` starting from `init` on the first frame.
/// Returns one result per frame, the first being the initialization.
pub fn track_frames(frames: &[GrayImage], init: BBox, config: &TrackerConfig) -> Result<Vec<TrackResult>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::CountMismatch("no frames to track".into()))?;
    let mut t = Tracker::init(first, init, config.clone())?;
    let mut out = Vec::with_capacity(frames.len());
    out.push(t.initial_result().clone());
    for f in &frames[1..] {
        out.push(t.step(f)?);
    }
    Ok(out)
}
