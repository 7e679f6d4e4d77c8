//! One-pass evaluation on sequences in the OTB layout (`img/` plus
//! `groundtruth_rect.txt`). Without arguments a synthetic sequence is written
//! to a temporary directory first.
//!
//!     cargo run --release --example otb_evaluation [SEQ_DIR...] 

use memtrack::bench::{self, SynthSpec};
use memtrack::tracker::{self, Mode, TrackerConfig};

fn main() -> memtrack::Result<()> {
    let tmp = std::env::temp_dir().join("memtrack_otb_example");
    let mut dirs: Vec<std::path::PathBuf> = std::env::args().skip(1).map(Into::into).collect();
    if dirs.is_empty() {
        let (frames, gt) = bench::synth_sequence(&SynthSpec::drift_recovery(1))?;
        let seq_dir = tmp.join("drift");
        bench::write_sequence(&seq_dir, &frames, &gt)?;
        dirs.push(seq_dir);
    }

    let mut reports = Vec::new();
    for dir in &dirs {
        let seq = bench::load_sequence(dir)?;
        let frames = seq.load_frames()?;
        for mode in [Mode::Memory, Mode::BaselineCsk] {
            let cfg = TrackerConfig { mode, ..TrackerConfig::default() };
            let results = tracker::track_frames(&frames, seq.initial_box()?, &cfg)?;
            reports.push(bench::evaluate(&results, &seq, &mode.to_string())?);
        }
    }

    let out = tmp.join("report");
    bench::report(&reports, &out)?;
    for a in bench::aggregate(&reports) {
        println!("{:>13}: AUC {:.3}, mean CLE {:.1} px over {} frames", a.tracker, a.auc, a.mean_cle, a.frames);
    }
    println!("reports and success plot in {}", out.display());
    Ok(())
}
