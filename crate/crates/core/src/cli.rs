//! The `memtrack` command line: `track`, `bench`, `cluster` and `synth`.
//!
//! Tracker settings layer as built-in defaults, then `--config` (`key = value`
//! lines, `#` comments), then explicit flags. Progress goes to stderr; result
//! files go to `--out` and short summaries to stdout.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, EvalReport, Sequence, SynthSpec};
use crate::clustering::{self, ClusterParams, Interval};
use crate::error::{Error, Result};
use crate::features::Descriptor;
use crate::imaging::{BBox, GrayImage};
use crate::tracker::{self, Mode, TrackResult, TrackerConfig};

#[derive(Debug, Parser)]
#[command(name = "memtrack", version, about = "Correlation-filter tracking with appearance memories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track one sequence and write per-frame results.
    Track(TrackArgs),
    /// Run one or more modes over sequences (or a synthetic preset) and write OPE reports.
    Bench(BenchArgs),
    /// Segment a CSV of descriptors (one row per frame) into contiguous clusters.
    Cluster(ClusterArgs),
    /// Write a synthetic sequence in the OTB layout.
    Synth(SynthArgs),
}

/// Tracker flags shared by `track` and `bench`. Unset flags fall through to
/// the config file, then to the defaults shown.
#[derive(Debug, Clone, Default, Args)]
pub struct TrackerFlags {
    /// `key = value` config file applied before the flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model learning rate [default: 0.15]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Ridge regularizer [default: 0.0001]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// linear, gaussian or gaussian:<sigma> [default: gaussian:0.5]
    #[arg(long)]
    pub kernel: Option<String>,
    /// HOG cell size in pixels [default: 4]
    #[arg(long)]
    pub cell_size: Option<usize>,
    /// Search window size relative to the target [default: 2]
    #[arg(long)]
    pub padding: Option<f64>,
    /// Frames between clustering runs [default: 50]
    #[arg(long)]
    pub cluster_interval: Option<usize>,
    /// Capacity of the sample pool [default: 400]
    #[arg(long)]
    pub pool_capacity: Option<usize>,
    /// Relative merge slack [default: 0]
    #[arg(long)]
    pub rho_rel: Option<f64>,
    /// Absolute merge slack as a multiple of the baseline distance [default: 1.2]
    #[arg(long)]
    pub eps_factor: Option<f64>,
    /// Maximum number of memories [default: 10]
    #[arg(long)]
    pub max_memories: Option<usize>,
    /// Samples kept per memory [default: 100]
    #[arg(long)]
    pub max_memory_samples: Option<usize>,
    /// Confidence penalty per frame of memory age [default: 0.001]
    #[arg(long)]
    pub sigma1: Option<f64>,
    /// Confidence bonus per memory member [default: 0.01]
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Peak-to-sidelobe ratio below which re-detection runs [default: 30]
    #[arg(long)]
    pub psr_threshold: Option<f64>,
}

impl TrackerFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("gamma", self.gamma.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("kernel", self.kernel.clone());
        put("cell_size", self.cell_size.map(|v| v.to_string()));
        put("padding", self.padding.map(|v| v.to_string()));
        put("cluster_interval", self.cluster_interval.map(|v| v.to_string()));
        put("pool_capacity", self.pool_capacity.map(|v| v.to_string()));
        put("rho_rel", self.rho_rel.map(|v| v.to_string()));
        put("eps_factor", self.eps_factor.map(|v| v.to_string()));
        put("max_memories", self.max_memories.map(|v| v.to_string()));
        put("max_memory_samples", self.max_memory_samples.map(|v| v.to_string()));
        put("sigma1", self.sigma1.map(|v| v.to_string()));
        put("sigma2", self.sigma2.map(|v| v.to_string()));
        put("psr_threshold", self.psr_threshold.map(|v| v.to_string()));
        out
    }

    /// Defaults, then the config file, then the flags; validated.
    pub fn resolve(&self, mode: Option<Mode>) -> Result<TrackerConfig> {
        let mut cfg = TrackerConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_kv(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for (k, v) in self.pairs() {
            cfg.set(k, &v)
                .map_err(|e| Error::Config(format!("--{}: {e}", k.replace('_', "-"))))?;
        }
        if let Some(m) = mode {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Sequence directory (frames in img/ or the directory itself)
    pub sequence: PathBuf,
    /// memory, baseline_mosse or baseline_csk [default: memory]
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Results CSV
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sequence directories; omit when using --preset
    pub sequences: Vec<PathBuf>,
    /// Modes to run, repeated or comma separated [default: memory]
    #[arg(long, value_parser = parse_mode, value_delimiter = ',')]
    pub mode: Vec<Mode>,
    /// Synthetic preset to generate in memory instead of reading sequences
    #[arg(long, conflicts_with = "sequences")]
    pub preset: Option<String>,
    /// Seed for --preset
    #[arg(long, default_value_t = 0, requires = "preset")]
    pub seed: u64,
    /// Report directory
    #[arg(long, default_value = "bench_out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// CSV with one descriptor per row; a non-numeric first row is a header
    pub input: PathBuf,
    /// Segmentation CSV; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` config file (rho_rel, eps_factor, n0)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Relative merge slack [default: 0]
    #[arg(long)]
    pub rho_rel: Option<f64>,
    /// Absolute merge slack as a multiple of the baseline distance [default: 1.2]
    #[arg(long)]
    pub eps_factor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// drift_recovery, translation or static
    #[arg(long)]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on a runtime error, 2 on bad usage.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Track(a) => cmd_track(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Cluster(a) => cmd_cluster(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Loads a sequence and its frames, failing early on missing ground truth for
/// the first frame.
fn load(dir: &Path) -> Result<(Sequence, Vec<GrayImage>, BBox)> {
    let seq = bench::load_sequence(dir)?;
    let init = seq.initial_box()?;
    let frames = seq.load_frames()?;
    Ok((seq, frames, init))
}

pub fn cmd_track(a: &TrackArgs) -> Result<()> {
    let cfg = a.tracker.resolve(a.mode)?;
    let (seq, frames, init) = load(&a.sequence)?;
    eprintln!("{}: {} frames, mode {}", seq.name, frames.len(), cfg.mode);
    let t0 = Instant::now();
    let results = tracker::track_frames(&frames, init, &cfg)?;
    let secs = t0.elapsed().as_secs_f64();
    write_file(&a.out, &tracker::results_csv(&results))?;
    println!("fps {:.1}", frames.len() as f64 / secs.max(1e-9));
    if !seq.missing_ground_truth {
        let r = bench::evaluate(&results, &seq, &cfg.mode.to_string())?;
        println!("mean_cle {:.3}", r.mean_cle);
    }
    Ok(())
}

/// Results file name, tracked boxes and report for one (sequence, mode) run.
type BenchRun = (String, Vec<TrackResult>, EvalReport);

/// A loaded benchmark input.
struct BenchInput {
    name: String,
    frames: Vec<GrayImage>,
    ground_truth: Vec<Option<BBox>>,
    init: BBox,
}

fn bench_inputs(a: &BenchArgs) -> Result<Vec<BenchInput>> {
    if let Some(p) = &a.preset {
        let spec = SynthSpec::preset(p, a.seed)?;
        let (frames, gt) = bench::synth_sequence(&spec)?;
        return Ok(vec![BenchInput {
            name: spec.name,
            init: gt[0],
            ground_truth: gt.into_iter().map(Some).collect(),
            frames,
        }]);
    }
    if a.sequences.is_empty() {
        return Err(Error::Config("bench needs sequence directories or --preset".into()));
    }
    a.sequences
        .iter()
        .map(|d| {
            let (seq, frames, init) = load(d)?;
            if seq.missing_ground_truth {
                return Err(Error::Config(format!("{}: no ground truth to evaluate", seq.name)));
            }
            Ok(BenchInput {
                name: seq.name,
                frames,
                ground_truth: seq.ground_truth,
                init,
            })
        })
        .collect()
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let base = a.tracker.resolve(None)?;
    let modes = if a.mode.is_empty() { vec![base.mode] } else { a.mode.clone() };
    let inputs = bench_inputs(a)?;

    // Sequences are independent, so each gets its own thread; outputs are
    // collected in input order to keep the files deterministic.
    let per_seq: Vec<Result<Vec<BenchRun>>> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .iter()
            .map(|inp| {
                let modes = &modes;
                let base = &base;
                s.spawn(move || {
                    let mut out = Vec::new();
                    for &m in modes {
                        let cfg = TrackerConfig { mode: m, ..base.clone() };
                        let t0 = Instant::now();
                        let res = tracker::track_frames(&inp.frames, inp.init, &cfg)?;
                        let fps = inp.frames.len() as f64 / t0.elapsed().as_secs_f64().max(1e-9);
                        let rep = bench::evaluate_boxes(&res, &inp.ground_truth, &inp.name, &m.to_string())?;
                        eprintln!("{} / {m}: auc {:.3}, mean cle {:.2}, {fps:.1} fps", inp.name, rep.auc, rep.mean_cle);
                        out.push((format!("{}_{m}_results.csv", inp.name), res, rep));
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("bench worker panicked".into()))))
            .collect()
    });

    let mut reports = Vec::new();
    for seq in per_seq {
        for (name, res, rep) in seq? {
            write_file(&a.out.join(name), &tracker::results_csv(&res))?;
            reports.push(rep);
        }
    }
    bench::report(&reports, &a.out)?;
    println!("tracker,sequences,frames,auc,mean_cle");
    for g in bench::aggregate(&reports) {
        println!("{},{},{},{:.4},{:.3}", g.tracker, g.sequences, g.frames, g.auc, g.mean_cle);
    }
    Ok(())
}

/// Reads one descriptor per row. Blank lines and `#` lines are skipped; a
/// first row that does not parse as numbers is taken as a header.
pub fn parse_descriptor_csv(text: &str) -> Result<Vec<Descriptor>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seen_first = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let first = !seen_first;
        seen_first = true;
        let vals = match parsed {
            Ok(v) => v,
            Err(_) if first => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", n + 1))),
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("line {}: non-finite value", n + 1)));
        }
        if let Some(prev) = rows.first() {
            if prev.len() != vals.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} columns, expected {}",
                    n + 1,
                    vals.len(),
                    prev.len()
                )));
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no descriptor rows".into()));
    }
    Ok(rows.into_iter().map(Descriptor::from_values).collect())
}

/// Offline clustering of a descriptor stream, rendered as
/// `cluster_id,first_frame,last_frame,cost` with 1-based frames.
pub fn cluster_csv(descriptors: &[Descriptor], rho_rel: f64, eps_factor: f64, n0: usize) -> Result<String> {
    let p = descriptors.len();
    let d = clustering::distance_matrix(descriptors)?;
    let eps_abs = if p >= 2 {
        eps_factor * clustering::baseline_scale(&d, n0.min(p))?
    } else {
        0.0
    };
    let j = clustering::integral_image(&d);
    let seg = clustering::cluster(&j, p, ClusterParams { rho_rel, eps_abs });
    let mut out = String::from("cluster_id,first_frame,last_frame,cost\n");
    for (id, &Interval { u, v }) in seg.intervals().iter().enumerate() {
        let cost = clustering::interval_cost(&j, Interval { u, v });
        out.push_str(&format!("{id},{u},{v},{cost}\n"));
    }
    Ok(out)
}

pub fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let mut cfg = TrackerConfig::default();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_kv(&text)?;
    }
    if let Some(v) = a.rho_rel {
        cfg.rho_rel = v;
    }
    if let Some(v) = a.eps_factor {
        cfg.eps_factor = v;
    }
    cfg.validate()?;
    let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let descriptors = parse_descriptor_csv(&text)?;
    eprintln!("{} descriptors of length {}", descriptors.len(), descriptors[0].len());
    let out = cluster_csv(&descriptors, cfg.rho_rel, cfg.eps_factor, cfg.n0)?;
    match &a.out {
        Some(p) => write_file(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec::preset(&a.preset, a.seed)?;
    let (frames, gt) = bench::synth_sequence(&spec)?;
    bench::write_sequence(&a.out, &frames, &gt)?;
    eprintln!("wrote {} frames to {}", frames.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn documented_defaults_match_config() {
        let cmd = Cli::command();
        let track = cmd.find_subcommand("track").unwrap();
        let mut checked = 0;
        for arg in track.get_arguments() {
            let Some(help) = arg.get_help().map(|h| h.to_string()) else { continue };
            let Some(start) = help.find("[default: ") else { continue };
            let value = help[start + 10..].trim_end_matches(']');
            let key = arg.get_id().as_str();
            let mut cfg = TrackerConfig::default();
            cfg.set(key, value).unwrap();
            assert_eq!(cfg, TrackerConfig::default(), "--{key} documents {value}");
            checked += 1;
        }
        // every tracker flag plus --mode
        assert_eq!(checked, 15);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "# tuned\ngamma = 0.3\nlambda = 0.01\n").unwrap();
        let flags = TrackerFlags {
            config: Some(path),
            gamma: Some(0.2),
            ..Default::default()
        };
        let cfg = flags.resolve(None).unwrap();
        assert_eq!(cfg.gamma, 0.2);
        assert_eq!(cfg.lambda, 0.01);
        assert_eq!(cfg.psr_threshold, TrackerConfig::default().psr_threshold);
    }

    #[test]
    fn bad_usage_exits_two() {
        assert_eq!(run(["memtrack", "track"]), 2);
        assert_eq!(run(["memtrack", "track", "x", "--bogus", "1"]), 2);
        assert_eq!(run(["memtrack", "track", "x", "--mode", "memory", "--mode", "memory"]), 2);
        assert_eq!(run(["memtrack", "track", "x", "--mode", "nope"]), 2);
        assert_eq!(run(["memtrack", "--help"]), 0);
    }

    #[test]
    fn invalid_values_fail_before_io() {
        // gamma outside [0, 1] is rejected even though the sequence is missing
        let flags = TrackerFlags {
            gamma: Some(1.5),
            ..Default::default()
        };
        assert!(matches!(flags.resolve(None), Err(Error::Config(_))));
    }

    #[test]
    fn descriptor_csv_header_and_errors() {
        let d = parse_descriptor_csv("a,b\n1,0\n0,1\n").unwrap();
        assert_eq!(d.len(), 2);
        assert!(parse_descriptor_csv("1,0\n0\n").is_err());
        assert!(parse_descriptor_csv("1,0\nx,1\n").is_err());
        assert!(parse_descriptor_csv("h\n").is_err());
    }

    #[test]
    fn identical_rows_form_one_cluster() {
        let rows = vec![Descriptor::from_values(vec![1.0, 2.0, 3.0]); 30];
        let csv = cluster_csv(&rows, 0.0, 1.2, 40).unwrap();
        assert_eq!(csv, "cluster_id,first_frame,last_frame,cost\n0,1,30,0\n");
    }
}
