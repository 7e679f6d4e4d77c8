//! Correlation-filter visual tracking with reliable appearance memories.
//!
//! The tracker learns a kernelized ridge-regression filter in the Fourier
//! domain. Instead of a fixed exponential forgetting rate, past target samples
//! are segmented into temporally contiguous clusters ("memories"). The active
//! memory most similar to the current appearance anchors the model, which lets
//! the tracker recover after drifting onto the wrong region.
//!
//! Module map:
//!
//! * [`imaging`]: grayscale frames, Netpbm I/O and padded window extraction.
//! * [`features`]: HOG feature maps, cosine windows and pooled descriptors.
//! * [`spectral`]: DFT kernels, the closed-form and blended ridge solvers,
//!   detection, learning-rate baselines and dense oracles.
//! * [`clustering`]: temporally-constrained clustering over an integral image.
//! * [`memory`]: memory confidence, blend weights, ingestion and eviction.
//! * [`tracker`]: the per-frame workflow plus baseline modes and re-detection.
//! * [`bench`]: sequence loading, OPE metrics, synthetic sequences, reports.
//! * [`cli`]: the `memtrack` command-line front end.

pub mod bench;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod features;
pub mod imaging;
pub mod memory;
pub mod spectral;
pub mod tracker;

pub use error::{Error, Result};
