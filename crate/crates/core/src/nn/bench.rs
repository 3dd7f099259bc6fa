//! Per-inference latency measurement.

use std::time::{Duration, Instant};

use super::{ModelGraph, QuantizedModel, Tensor1D};
use crate::{Error, Result, WINDOW_LEN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub iterations: usize,
    pub mean: Duration,
    pub min: Duration,
    pub max: Duration,
    pub p50: Duration,
    pub p99: Duration,
    pub macs_per_inference: u64,
}

impl BenchReport {
    fn from_samples(mut samples: Vec<Duration>, macs: u64) -> Self {
        samples.sort();
        let n = samples.len();
        let total: Duration = samples.iter().sum();
        let pct = |q: f64| samples[(((n - 1) as f64) * q).round() as usize];
        BenchReport {
            iterations: n,
            mean: total / n as u32,
            min: samples[0],
            max: samples[n - 1],
            p50: pct(0.5),
            p99: pct(0.99),
            macs_per_inference: macs,
        }
    }

    pub fn macs_per_second(&self) -> f64 {
        self.macs_per_inference as f64 / self.mean.as_secs_f64()
    }
}

/// Deterministic ECG-like test window.
pub fn bench_window() -> Tensor1D {
    let x: Vec<f32> = (0..WINDOW_LEN)
        .map(|i| {
            let t = i as f32 / 250.0;
            let phase = (t * 1.2).fract();
            (-(phase - 0.3).powi(2) / 0.0008).exp() * 3.0 + 0.2 * (t * 37.0).sin() - 0.3
        })
        .collect();
    Tensor1D::from_signal(&x)
}

fn run(n: usize, warmup: usize, mut f: impl FnMut() -> Result<()>) -> Result<Vec<Duration>> {
    if n == 0 {
        return Err(Error::Argument("iteration count must be positive".into()));
    }
    for _ in 0..warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed());
    }
    Ok(samples)
}

/// Times `n` classifier-path float inferences (after a short warm-up).
pub fn bench_float(model: &ModelGraph, n: usize) -> Result<BenchReport> {
    let x = bench_window();
    let samples = run(n, n.min(20), || {
        std::hint::black_box(model.classify(std::hint::black_box(&x))?);
        Ok(())
    })?;
    Ok(BenchReport::from_samples(samples, model.metadata().mac_count))
}

/// Times `n` classifier-path int8 inferences, input quantization included.
pub fn bench_quantized(model: &QuantizedModel, n: usize) -> Result<BenchReport> {
    let x = bench_window();
    let mut macs = 0;
    let samples = run(n, n.min(20), || {
        let q = model.quantize_input(std::hint::black_box(&x));
        let (p, m) = model.classify_counted(&q)?;
        std::hint::black_box(p);
        macs = m;
        Ok(())
    })?;
    Ok(BenchReport::from_samples(samples, macs))
}
