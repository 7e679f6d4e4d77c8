//! Sequences, one-pass evaluation metrics, synthetic sequence generation and
//! report files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{self, BBox, GrayImage};
use crate::tracker::TrackResult;

/// Ground-truth file name inside a sequence directory.
pub const GROUND_TRUTH_FILE: &str = "groundtruth_rect.txt";
const IMAGE_EXTENSIONS: [&str; 8] = ["pgm", "ppm", "pnm", "jpg", "jpeg", "png", "bmp", "tif"];

/// Overlap thresholds `0, 0.05, ..., 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Center-error thresholds `0, 1, ..., 50` pixels.
pub fn precision_thresholds() -> Vec<f64> {
    (0..=50).map(f64::from).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<PathBuf>,
    /// One entry per frame; `None` marks an absent target.
    pub ground_truth: Vec<Option<BBox>>,
    /// Set when the directory had no ground-truth file.
    pub missing_ground_truth: bool,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn load_frame(&self, i: usize) -> Result<GrayImage> {
        imaging::load_image(&self.frames[i])
    }

    pub fn load_frames(&self) -> Result<Vec<GrayImage>> {
        self.frames.iter().map(imaging::load_image).collect()
    }

    /// First annotated box, used to initialize a tracker.
    pub fn initial_box(&self) -> Result<BBox> {
        self.ground_truth
            .first()
            .copied()
            .flatten()
            .ok_or_else(|| Error::InvalidBox(format!("{}: first frame has no ground truth", self.name)))
    }
}

/// Parses one ground-truth line. Commas, tabs and spaces all separate
/// fields. Non-finite values or a non-positive size mark an absent target.
pub fn parse_ground_truth_line(line: &str) -> Result<Option<BBox>> {
    let fields: Vec<&str> = line
        .split([',', '\t', ' ', ';'])
        .filter(|f| !f.is_empty())
        .collect();
    if fields.len() != 4 {
        return Err(Error::Parse(format!("expected 4 fields in '{line}'")));
    }
    let mut v = [0.0f64; 4];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f
            .parse()
            .map_err(|_| Error::Parse(format!("bad number '{f}' in '{line}'")))?;
    }
    if v.iter().any(|x| !x.is_finite()) || v[2] <= 0.0 || v[3] <= 0.0 {
        return Ok(None);
    }
    Ok(Some(BBox {
        x: v[0],
        y: v[1],
        w: v[2],
        h: v[3],
    }))
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<Option<BBox>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_ground_truth_line(l.trim()))
        .collect()
}

pub fn format_ground_truth(boxes: &[BBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        let _ = writeln!(out, "{},{},{},{}", b.x, b.y, b.w, b.h);
    }
    out
}

/// Loads an OTB-style directory: frames under `img/` (or the directory
/// itself) sorted by file name, plus `groundtruth_rect.txt`.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<Sequence> {
    let dir = dir.as_ref();
    let img_dir = if dir.join("img").is_dir() {
        dir.join("img")
    } else {
        dir.to_path_buf()
    };
    let mut frames: Vec<PathBuf> = std::fs::read_dir(&img_dir)
        .map_err(|e| Error::io(&img_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(Error::CountMismatch(format!("no frames in {}", img_dir.display())));
    }
    let name = dir
        .file_name()
        .map_or_else(|| "sequence".to_string(), |n| n.to_string_lossy().into_owned());
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    if !gt_path.is_file() {
        return Ok(Sequence {
            name,
            ground_truth: vec![None; frames.len()],
            frames,
            missing_ground_truth: true,
        });
    }
    let text = std::fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let ground_truth = parse_ground_truth(&text)?;
    if ground_truth.len() != frames.len() {
        return Err(Error::CountMismatch(format!(
            "{}: {} frames but {} ground-truth lines",
            name,
            frames.len(),
            ground_truth.len()
        )));
    }
    Ok(Sequence {
        name,
        frames,
        ground_truth,
        missing_ground_truth: false,
    })
}

/// Euclidean distance between box centers.
pub fn center_error(pred: &BBox, gt: &BBox) -> f64 {
    let (a, b) = (pred.center(), gt.center());
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Intersection over union.
pub fn overlap(pred: &BBox, gt: &BBox) -> f64 {
    let iw = (pred.x + pred.w).min(gt.x + gt.w) - pred.x.max(gt.x);
    let ih = (pred.y + pred.h).min(gt.y + gt.h) - pred.y.max(gt.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = pred.area() + gt.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// One-pass evaluation of a tracker on one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sequence: String,
    pub tracker: String,
    /// 1-based frame numbers that carry ground truth.
    pub frames: Vec<usize>,
    pub center_errors: Vec<f64>,
    pub overlaps: Vec<f64>,
    /// Fraction of frames with center error strictly below each threshold.
    pub precision: Vec<f64>,
    /// Fraction of frames with overlap strictly above each threshold.
    pub success: Vec<f64>,
    pub auc: f64,
    pub mean_cle: f64,
}

impl EvalReport {
    /// Builds the curves from per-frame numbers.
    pub fn from_metrics(
        sequence: &str,
        tracker: &str,
        frames: Vec<usize>,
        center_errors: Vec<f64>,
        overlaps: Vec<f64>,
    ) -> Result<Self> {
        if frames.is_empty() || frames.len() != center_errors.len() || frames.len() != overlaps.len() {
            return Err(Error::CountMismatch(format!(
                "{sequence}: {} frames, {} errors, {} overlaps",
                frames.len(),
                center_errors.len(),
                overlaps.len()
            )));
        }
        let n = frames.len() as f64;
        let success: Vec<f64> = success_thresholds()
            .iter()
            .map(|&t| overlaps.iter().filter(|&&o| o > t).count() as f64 / n)
            .collect();
        let precision = precision_thresholds()
            .iter()
            .map(|&t| center_errors.iter().filter(|&&e| e < t).count() as f64 / n)
            .collect();
        let auc = success.iter().sum::<f64>() / success.len() as f64;
        let mean_cle = center_errors.iter().sum::<f64>() / n;
        Ok(Self {
            sequence: sequence.to_string(),
            tracker: tracker.to_string(),
            frames,
            center_errors,
            overlaps,
            precision,
            success,
            auc,
            mean_cle,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `frame,center_error,overlap` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,center_error,overlap\n");
        for ((f, e), o) in self.frames.iter().zip(&self.center_errors).zip(&self.overlaps) {
            let _ = writeln!(out, "{f},{e},{o}");
        }
        out
    }
}

/// Parses [`EvalReport::to_csv`] output back into `(frame, error, overlap)`.
pub fn parse_report_csv(text: &str) -> Result<Vec<(usize, f64, f64)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("frame,center_error,overlap") {
        return Err(Error::Parse("missing report header".into()));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad report row '{l}'")));
            }
            let bad = || Error::Parse(format!("bad report row '{l}'"));
            Ok((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// Scores `results` against the sequence's ground truth. Frames without
/// ground truth are skipped.
pub fn evaluate(results: &[TrackResult], seq: &Sequence, tracker: &str) -> Result<EvalReport> {
    evaluate_boxes(results, &seq.ground_truth, &seq.name, tracker)
}

pub fn evaluate_boxes(
    results: &[TrackResult],
    ground_truth: &[Option<BBox>],
    sequence: &str,
    tracker: &str,
) -> Result<EvalReport> {
    if results.len() != ground_truth.len() {
        return Err(Error::CountMismatch(format!(
            "{sequence}: {} results for {} frames",
            results.len(),
            ground_truth.len()
        )));
    }
    let mut frames = Vec::new();
    let mut errs = Vec::new();
    let mut ious = Vec::new();
    for (i, (r, gt)) in results.iter().zip(ground_truth).enumerate() {
        if let Some(gt) = gt {
            frames.push(i + 1);
            errs.push(center_error(&r.bbox, gt));
            ious.push(overlap(&r.bbox, gt));
        }
    }
    EvalReport::from_metrics(sequence, tracker, frames, errs, ious)
}

/// Frame-weighted aggregate of several reports of one tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub tracker: String,
    pub sequences: usize,
    pub frames: usize,
    pub mean_cle: f64,
    pub auc: f64,
    pub success: Vec<f64>,
}

/// Groups reports by tracker (in first-seen order) and weights every mean by
/// the number of evaluated frames.
pub fn aggregate(reports: &[EvalReport]) -> Vec<Aggregate> {
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.tracker.as_str()) {
            order.push(&r.tracker);
        }
    }
    order
        .into_iter()
        .map(|t| {
            let group: Vec<&EvalReport> = reports.iter().filter(|r| r.tracker == t).collect();
            let frames: usize = group.iter().map(|r| r.len()).sum();
            let w = |f: &dyn Fn(&EvalReport) -> f64| -> f64 {
                group.iter().map(|r| f(r) * r.len() as f64).sum::<f64>() / frames as f64
            };
            let success = (0..success_thresholds().len())
                .map(|i| w(&|r: &EvalReport| r.success[i]))
                .collect();
            Aggregate {
                tracker: t.to_string(),
                sequences: group.len(),
                frames,
                mean_cle: w(&|r: &EvalReport| r.mean_cle),
                auc: w(&|r: &EvalReport| r.auc),
                success,
            }
        })
        .collect()
}

pub fn summary_json(reports: &[EvalReport]) -> serde_json::Value {
    let trackers: Vec<serde_json::Value> = aggregate(reports)
        .into_iter()
        .map(|a| {
            serde_json::json!({
                "tracker": a.tracker,
                "sequences": a.sequences,
                "frames": a.frames,
                "mean_cle": a.mean_cle,
                "auc": a.auc,
            })
        })
        .collect();
    let sequences: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "sequence": r.sequence,
                "tracker": r.tracker,
                "frames": r.len(),
                "mean_cle": r.mean_cle,
                "auc": r.auc,
            })
        })
        .collect();
    serde_json::json!({ "trackers": trackers, "sequences": sequences })
}

/// SVG 1.1 line plot of the frame-weighted success curve of each tracker.
pub fn success_plot_svg(reports: &[EvalReport]) -> String {
    const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let (w, h, m) = (480.0, 360.0, 50.0);
    let px = |t: f64| m + t * (w - 2.0 * m);
    let py = |v: f64| h - m - v * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect width="{w}" height="{h}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">Success plot (OPE)</text>
<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">Overlap threshold</text>
<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">Success rate</text>"#,
        w / 2.0,
        h - m,
        w - m,
        h - m,
        h - m,
        w / 2.0,
        h - 12.0,
        h / 2.0,
        h / 2.0,
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{t}</text>
<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{t}</text>"#,
            px(t),
            h - m + 14.0,
            m - 4.0,
            py(t) + 3.0
        );
    }
    let thresholds = success_thresholds();
    for (k, a) in aggregate(reports).iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = thresholds
            .iter()
            .zip(&a.success)
            .map(|(t, v)| format!("{:.2},{:.2}", px(*t), py(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>
<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{} [{:.3}]</text>"#,
            points.join(" "),
            w - m - 110.0,
            m + 14.0 + 14.0 * k as f64,
            a.tracker,
            a.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

/// File stem used for a report's CSV.
pub fn report_stem(r: &EvalReport) -> String {
    format!("{}_{}", r.sequence, r.tracker)
}

/// Writes `<sequence>_<tracker>.csv` per report, `summary.json` and
/// `success.svg` into `dir`.
pub fn report(reports: &[EvalReport], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    for r in reports {
        write(format!("{}.csv", report_stem(r)), r.to_csv())?;
    }
    let json = serde_json::to_string_pretty(&summary_json(reports))
        .map_err(|e| Error::Format(e.to_string()))?;
    write("summary.json".into(), json + "\n")?;
    write("success.svg".into(), success_plot_svg(reports))
}

/// What the target looks like during a regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Appearance {
    /// Procedural texture number `id`.
    Texture(u32),
    /// Target is not drawn; it takes on the background.
    Hidden,
}

/// Frames `start..=end` (1-based) share one appearance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regime {
    pub start: usize,
    pub end: usize,
    pub appearance: Appearance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub target_w: usize,
    pub target_h: usize,
    pub frames: usize,
    pub background_seed: u64,
    pub target_seed: u64,
    /// Top-left corners the target visits in order.
    pub waypoints: Vec<(f64, f64)>,
    /// Pixels per frame along the waypoint path. The target rests at the
    /// last waypoint once it gets there.
    pub speed: f64,
    pub schedule: Vec<Regime>,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    pub seed: u64,
}

/// Preset names accepted by [`SynthSpec::preset`].
pub const PRESETS: [&str; 3] = ["drift_recovery", "translation", "static"];

impl SynthSpec {
    /// Rectangular loop through a 320x240 frame, one lap in 400 frames at
    /// 2 px/frame.
    fn loop_base(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            width: 320,
            height: 240,
            target_w: 32,
            target_h: 32,
            frames: 400,
            background_seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x0b,
            target_seed: seed.wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ 0x7a,
            waypoints: vec![
                (24.0, 24.0),
                (264.0, 24.0),
                (264.0, 184.0),
                (24.0, 184.0),
                (24.0, 24.0),
            ],
            speed: 2.0,
            schedule: vec![Regime {
                start: 1,
                end: 400,
                appearance: Appearance::Texture(0),
            }],
            noise: 0.02,
            seed,
        }
    }

    /// Fixed appearance, 2 px/frame motion, noise 0.02.
    pub fn translation(seed: u64) -> Self {
        Self::loop_base("translation", seed)
    }

    /// Appearance A on frames 1-200, B on 201-260 and A again on 261-400.
    /// During B the target blends into the background while it keeps moving.
    pub fn drift_recovery(seed: u64) -> Self {
        Self {
            schedule: vec![
                Regime {
                    start: 1,
                    end: 200,
                    appearance: Appearance::Texture(0),
                },
                Regime {
                    start: 201,
                    end: 260,
                    appearance: Appearance::Hidden,
                },
                Regime {
                    start: 261,
                    end: 400,
                    appearance: Appearance::Texture(0),
                },
            ],
            ..Self::loop_base("drift_recovery", seed)
        }
    }

    /// Target that never moves.
    pub fn static_scene(seed: u64, frames: usize) -> Self {
        Self {
            frames,
            waypoints: vec![(144.0, 104.0)],
            schedule: vec![Regime {
                start: 1,
                end: frames,
                appearance: Appearance::Texture(0),
            }],
            ..Self::loop_base("static", seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name.replace('-', "_").as_str() {
            "drift_recovery" | "drift" => Ok(Self::drift_recovery(seed)),
            "translation" => Ok(Self::translation(seed)),
            "static" => Ok(Self::static_scene(seed, 100)),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Appearance at a 1-based frame.
    pub fn appearance_at(&self, frame: usize) -> Option<Appearance> {
        self.schedule
            .iter()
            .find(|r| r.start <= frame && frame <= r.end)
            .map(|r| r.appearance)
    }

    /// Top-left corner of the target at each frame, on whole pixels.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let mut segs = Vec::new();
        for w in self.waypoints.windows(2) {
            let len = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            segs.push((w[0], w[1], len));
        }
        (0..self.frames)
            .map(|i| {
                let mut d = self.speed * i as f64;
                for &(a, b, len) in &segs {
                    if d <= len && len > 0.0 {
                        let t = d / len;
                        return ((a.0 + t * (b.0 - a.0)).round(), (a.1 + t * (b.1 - a.1)).round());
                    }
                    d -= len;
                }
                let last = *self.waypoints.last().expect("validated non-empty");
                (last.0.round(), last.1.round())
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::Config("frames and frame size must be positive".into()));
        }
        if self.target_w == 0 || self.target_h == 0 {
            return Err(Error::Config("target size must be positive".into()));
        }
        if self.waypoints.is_empty() {
            return Err(Error::Config("trajectory needs at least one waypoint".into()));
        }
        if !(self.speed >= 0.0 && self.noise >= 0.0) {
            return Err(Error::Config("speed and noise must be non-negative".into()));
        }
        for f in 1..=self.frames {
            let n = self
                .schedule
                .iter()
                .filter(|r| r.start <= f && f <= r.end)
                .count();
            if n != 1 {
                return Err(Error::Config(format!(
                    "frame {f} is covered by {n} regimes, expected exactly one"
                )));
            }
        }
        let (tw, th) = (self.target_w as f64, self.target_h as f64);
        for (i, &(x, y)) in self.positions().iter().enumerate() {
            if x < 0.0 || y < 0.0 || x + tw > self.width as f64 || y + th > self.height as f64 {
                return Err(Error::InvalidBox(format!(
                    "trajectory leaves the frame at frame {}: ({x}, {y})",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Smooth value-noise background with a faint finer octave.
fn background(w: usize, h: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octave = |rng: &mut ChaCha8Rng, spacing: f64, lo: f64, hi: f64| -> Vec<f64> {
        let gw = (w as f64 / spacing).ceil() as usize + 2;
        let gh = (h as f64 / spacing).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(lo..hi)).collect();
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x as f64 / spacing, y as f64 / spacing);
                let (i, j) = (u.floor() as usize, v.floor() as usize);
                let (fu, fv) = (smooth(u.fract()), smooth(v.fract()));
                let at = |a: usize, b: usize| lattice[b * gw + a];
                let top = at(i, j) * (1.0 - fu) + at(i + 1, j) * fu;
                let bottom = at(i, j + 1) * (1.0 - fu) + at(i + 1, j + 1) * fu;
                out.push(top * (1.0 - fv) + bottom * fv);
            }
        }
        out
    };
    let coarse = octave(&mut rng, 24.0, 0.25, 0.75);
    let fine = octave(&mut rng, 6.0, -0.06, 0.06);
    coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a + b).clamp(0.0, 1.0))
        .collect()
}

/// Procedural target texture: an oriented grating whose orientation depends
/// on `id`, plus random light and dark discs.
pub fn target_texture(w: usize, h: usize, seed: u64, id: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(id) << 32 | u64::from(id)));
    let golden = 0.618_033_988_749_895;
    let theta = ((rng.random::<f64>() + golden * f64::from(id)) % 1.0) * std::f64::consts::PI;
    let period = rng.random_range(6.0..9.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (c, s) = (theta.cos(), theta.sin());
    let mut tex: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x as f64, y as f64)))
        .map(|(x, y)| 0.5 + 0.25 * ((x * c + y * s) * std::f64::consts::TAU / period + phase).sin())
        .collect();
    for _ in 0..6 {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let r = rng.random_range(2.0..5.5);
        let v = if rng.random::<bool>() { 0.95 } else { 0.05 };
        for y in 0..h {
            for x in 0..w {
                if (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy) <= r {
                    tex[y * w + x] = v;
                }
            }
        }
    }
    tex.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    tex
}

/// Renders a synthetic sequence and its exact ground truth.
pub fn synth_sequence(spec: &SynthSpec) -> Result<(Vec<GrayImage>, Vec<BBox>)> {
    spec.validate()?;
    let (w, h, tw, th) = (spec.width, spec.height, spec.target_w, spec.target_h);
    let bg = background(w, h, spec.background_seed);
    let mut textures: Vec<(u32, Vec<f64>)> = Vec::new();
    for r in &spec.schedule {
        if let Appearance::Texture(id) = r.appearance {
            if !textures.iter().any(|(t, _)| *t == id) {
                textures.push((id, target_texture(tw, th, spec.target_seed, id)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = (spec.noise > 0.0)
        .then(|| Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string())))
        .transpose()?;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt = Vec::with_capacity(spec.frames);
    for (i, &(x, y)) in spec.positions().iter().enumerate() {
        let mut data = bg.clone();
        if let Some(Appearance::Texture(id)) = spec.appearance_at(i + 1) {
            let tex = &textures.iter().find(|(t, _)| *t == id).expect("texture built").1;
            let (x0, y0) = (x as usize, y as usize);
            for r in 0..th {
                data[(y0 + r) * w + x0..(y0 + r) * w + x0 + tw].copy_from_slice(&tex[r * tw..(r + 1) * tw]);
            }
        }
        if let Some(n) = &normal {
            data.iter_mut()
                .for_each(|v| *v = (*v + n.sample(&mut rng)).clamp(0.0, 1.0));
        }
        frames.push(GrayImage::new(w, h, data)?);
        gt.push(BBox {
            x,
            y,
            w: tw as f64,
            h: th as f64,
        });
    }
    Ok((frames, gt))
}

/// Writes frames as `img/0001.pgm ...` plus the ground-truth file.
pub fn write_sequence(dir: impl AsRef<Path>, frames: &[GrayImage], gt: &[BBox]) -> Result<()> {
    let dir = dir.as_ref();
    let img = dir.join("img");
    std::fs::create_dir_all(&img).map_err(|e| Error::io(&img, e))?;
    for (i, f) in frames.iter().enumerate() {
        imaging::save_pgm(f, img.join(format!("{:04}.pgm", i + 1)))?;
    }
    let p = dir.join(GROUND_TRUTH_FILE);
    std::fs::write(&p, format_ground_truth(gt)).map_err(|e| Error::io(&p, e))
}
