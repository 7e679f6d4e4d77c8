//! The target is visible on frames 1-200, hidden on 201-260 and visible again
//! afterwards. Learning-rate baselines absorb the background while the target
//! is hidden; the memory tracker re-detects it from an old memory.
//!
//!     cargo run --release --example drift_recovery [seed]

use memtrack::bench::{self, SynthSpec};
use memtrack::tracker::{Mode, Tracker, TrackerConfig};

fn main() -> memtrack::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (frames, gt) = bench::synth_sequence(&SynthSpec::drift_recovery(seed))?;

    for mode in Mode::ALL {
        let mut t = Tracker::init(&frames[0], gt[0], TrackerConfig { mode, ..TrackerConfig::default() })?;
        let mut errs = vec![0.0];
        let mut events = Vec::new();
        for (i, f) in frames.iter().enumerate().skip(1) {
            let r = t.step(f)?;
            errs.push(bench::center_error(&r.bbox, &gt[i]));
            if r.rescanned {
                events.push(format!("rescan at frame {} (psr {:.1})", r.frame, r.psr));
            }
        }
        let mean = |a: usize, b: usize| errs[a - 1..b].iter().sum::<f64>() / (b - a + 1) as f64;
        println!(
            "{mode:>15}: error 1-200 {:6.1}  201-260 {:6.1}  300-400 {:6.1}",
            mean(1, 200),
            mean(201, 260),
            mean(300, 400)
        );
        for e in events {
            println!("{:>17}{e}", "");
        }
        if mode == Mode::Memory {
            print!("{}", t.memories().snapshot_csv());
        }
    }
    Ok(())
}
