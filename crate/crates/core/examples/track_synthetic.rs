//! Track the translation preset with every mode and report the center error.
//!
//!     cargo run --release --example track_synthetic [seed]

use memtrack::bench::{self, SynthSpec};
use memtrack::tracker::{self, Mode, TrackerConfig};

fn main() -> memtrack::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (frames, gt) = bench::synth_sequence(&SynthSpec::translation(seed))?;
    for mode in Mode::ALL {
        let cfg = TrackerConfig { mode, ..TrackerConfig::default() };
        let t0 = std::time::Instant::now();
        let results = tracker::track_frames(&frames, gt[0], &cfg)?;
        let fps = frames.len() as f64 / t0.elapsed().as_secs_f64();
        let errs: Vec<f64> = results.iter().zip(&gt).map(|(r, g)| bench::center_error(&r.bbox, g)).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let within = errs.iter().filter(|e| **e <= 2.0).count();
        println!("{mode:>15}: mean error {mean:.2} px, {within}/{} frames within 2 px, {fps:.0} fps", errs.len());
    }
    Ok(())
}
