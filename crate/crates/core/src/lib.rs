//! Streaming ear-ECG processing.
//!
//! The crate turns single-ear or cross-ear biopotentials into an R-peak
//! stream and rolling HR/HRV estimates:
//!
//! - [`dsp`]: filter design and application, resampling, normalization and
//!   arm-ECG ground-truth extraction.
//! - [`nn`]: a small 1D convolutional inference engine with float and int8
//!   execution paths.
//! - [`stream`]: the rolling-window engine that merges overlapping
//!   inferences into a committed probability stream and a peak stream.
//! - [`vitals`]: RR correction and HR/HRV computation.
//! - [`eval`]: detection scoring, threshold sweeps and waveform averaging.
//! - [`synth`]: synthetic recordings with exact R-peak ground truth.
//! - [`io`]: text and binary file formats.
//! - [`pipeline`]: the end-to-end composition used by the command line tool.

pub mod dsp;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod stream;
pub mod synth;
pub mod vitals;

pub use error::{Error, Result};

/// Sample rate every model-facing signal is brought to.
pub const MODEL_FS: f64 = 250.0;

/// Samples in one inference window (2 s at [`MODEL_FS`]).
pub const WINDOW_LEN: usize = 500;
