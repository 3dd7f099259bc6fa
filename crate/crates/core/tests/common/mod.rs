#![allow(dead_code)]

use ear_ecg::dsp::BiquadCascade;
use ear_ecg::nn::{LayerKind, LayerSpec, Tensor1D};
use ear_ecg::stream::{RollingDetector, StepOutcome, StreamConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// |H(e^{jw})| evaluated directly from the section coefficients.
pub fn gain_db(c: &BiquadCascade, f: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f / c.fs();
    let (cos1, sin1, cos2, sin2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
    let mut mag2 = 1.0;
    for s in c.sections() {
        let nr = s.b[0] + s.b[1] * cos1 + s.b[2] * cos2;
        let ni = -(s.b[1] * sin1 + s.b[2] * sin2);
        let dr = 1.0 + s.a[0] * cos1 + s.a[1] * cos2;
        let di = -(s.a[0] * sin1 + s.a[1] * sin2);
        mag2 *= (nr * nr + ni * ni) / (dr * dr + di * di);
    }
    10.0 * mag2.log10()
}

/// Direct-form I recursion, section after section.
pub fn df1(c: &BiquadCascade, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in c.sections() {
        let input = y.clone();
        for n in 0..input.len() {
            let xm1 = if n >= 1 { input[n - 1] } else { 0.0 };
            let xm2 = if n >= 2 { input[n - 2] } else { 0.0 };
            let ym1 = if n >= 1 { y[n - 1] } else { 0.0 };
            let ym2 = if n >= 2 { y[n - 2] } else { 0.0 };
            y[n] = s.b[0] * input[n] + s.b[1] * xm1 + s.b[2] * xm2 - s.a[0] * ym1 - s.a[1] * ym2;
        }
    }
    y
}

/// Frequency where the response crosses -3 dB between `lo` and `hi`.
pub fn corner(c: &BiquadCascade, mut lo: f64, mut hi: f64) -> f64 {
    let rising = gain_db(c, lo) < gain_db(c, hi);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let below = gain_db(c, mid) < -3.0103;
        if below == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sliding dot product over the zero-padded input.
pub fn conv_oracle(x: &Tensor1D, l: &LayerSpec) -> Vec<f64> {
    let (cin, cout, k, s, p) = (l.in_channels, l.out_channels, l.kernel_size, l.stride, l.padding);
    let len = x.length();
    let lout = (len + 2 * p - k) / s + 1;
    let mut out = vec![0.0; cout * lout];
    for oc in 0..cout {
        for t in 0..lout {
            let mut acc = l.bias[oc] as f64;
            for ic in 0..cin {
                for kk in 0..k {
                    let pos = (t * s + kk) as i64 - p as i64;
                    if pos >= 0 && (pos as usize) < len {
                        acc += l.weights[(oc * cin + ic) * k + kk] as f64
                            * x.channel(ic)[pos as usize] as f64;
                    }
                }
            }
            out[oc * lout + t] = acc;
        }
    }
    out
}

/// Scatter-add of every input sample through the kernel, then cropping.
pub fn conv_transpose_oracle(x: &Tensor1D, l: &LayerSpec) -> Vec<f64> {
    let (cin, cout, k, s, p) = (l.in_channels, l.out_channels, l.kernel_size, l.stride, l.padding);
    let len = x.length();
    let full = (len - 1) * s + k;
    let mut acc = vec![0.0; cout * full];
    for ic in 0..cin {
        for i in 0..len {
            for oc in 0..cout {
                for kk in 0..k {
                    acc[oc * full + i * s + kk] +=
                        x.channel(ic)[i] as f64 * l.weights[(ic * cout + oc) * k + kk] as f64;
                }
            }
        }
    }
    let lout = full - 2 * p;
    let mut out = Vec::with_capacity(cout * lout);
    for oc in 0..cout {
        for t in 0..lout {
            out.push(acc[oc * full + t + p] + l.bias[oc] as f64);
        }
    }
    out
}

pub fn random_layer(rng: &mut ChaCha8Rng, kind: LayerKind) -> LayerSpec {
    let cin = rng.random_range(1..5);
    let cout = rng.random_range(1..5);
    let k = rng.random_range(1..8);
    let s = rng.random_range(1..4);
    let p = rng.random_range(0..k);
    let w = (0..cin * cout * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
    LayerSpec::conv(kind, cin, cout, k, s, p, w, b).unwrap()
}

pub fn random_input(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> Tensor1D {
    let data = (0..channels * len).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor1D::new(channels, len, data).unwrap()
}

pub fn assert_close(got: &Tensor1D, want: &[f64]) {
    assert_eq!(got.data().len(), want.len());
    for (a, b) in got.data().iter().zip(want) {
        assert!((*a as f64 - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
    }
}


/// Largest relative error over `n` random layers of `kind`.
pub fn conv_case_error(kind: LayerKind, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < n {
        let l = random_layer(&mut rng, kind);
        let len = rng.random_range(1..40);
        let fits = match kind {
            LayerKind::ConvTranspose1d => (len - 1) * l.stride + l.kernel_size > 2 * l.padding,
            _ => len + 2 * l.padding >= l.kernel_size,
        };
        if !fits {
            continue;
        }
        let x = random_input(&mut rng, l.in_channels, len);
        let (got, want) = match kind {
            LayerKind::ConvTranspose1d => {
                (ear_ecg::nn::conv_transpose1d(&x, &l).unwrap(), conv_transpose_oracle(&x, &l))
            }
            _ => (ear_ecg::nn::conv1d(&x, &l).unwrap(), conv_oracle(&x, &l)),
        };
        assert_eq!(got.data().len(), want.len());
        for (a, b) in got.data().iter().zip(&want) {
            worst = worst.max((*a as f64 - b).abs() / (1.0 + b.abs()));
        }
        done += 1;
    }
    worst
}

/// Deterministic value in [0, 1) keyed by window and position.
fn unit_hash(m: usize, j: usize) -> f32 {
    let mut z = ((m as u64) << 32 | j as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ((z ^ (z >> 31)) >> 40) as f32 / (1u64 << 24) as f32
}

/// Probabilities produced for window `m`: the input scaled by a per-window,
/// per-position factor so overlapping windows disagree.
pub fn window_probs(m: usize, window: &[f32]) -> Vec<f32> {
    window
        .iter()
        .enumerate()
        .map(|(j, &x)| (x * (0.75 + 0.25 * unit_hash(m, j))).clamp(0.0, 1.0))
        .collect()
}

/// Pulse train in [0, 1] with noise and occasional close doublets.
pub fn synthetic_prob_input(seed: u64, len: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f32> = (0..len).map(|_| rng.random_range(0.0..0.15)).collect();
    let mut c = rng.random_range(20..200usize);
    while c < len {
        let h: f32 = rng.random_range(0.35..1.0);
        let w: f32 = rng.random_range(1.5..5.0);
        let mut centers = vec![c];
        if rng.random_bool(0.15) {
            centers.push(c + rng.random_range(10..60));
        }
        for &cc in &centers {
            for (i, v) in x.iter_mut().enumerate().skip(cc.saturating_sub(20)).take(41) {
                let d = (i as f32 - cc as f32) / w;
                *v = v.max(h * (-0.5 * d * d).exp());
            }
        }
        c += rng.random_range(120..320usize);
    }
    x
}

/// All windows materialized at once, max-merged over their kept regions.
pub fn offline_merged(input: &[f32], cfg: &StreamConfig) -> Vec<f32> {
    let (w, s, kept) = (cfg.window, cfg.shift, cfg.window - cfg.trim);
    if input.len() < w {
        return Vec::new();
    }
    let n = (input.len() - w) / s + 1;
    let mut merged = vec![0.0f32; n * s];
    for m in 0..n {
        let probs = window_probs(m, &input[m * s..m * s + w]);
        for (j, &p) in probs.iter().enumerate().take(kept) {
            if let Some(slot) = merged.get_mut(m * s + j) {
                *slot = slot.max(p);
            }
        }
    }
    merged
}

/// Rising edge at or above threshold whose plateau ends in a strict drop,
/// then time-ordered thinning against the last kept peak.
pub fn offline_peaks(p: &[f32], threshold: f64, min_distance: usize) -> Vec<usize> {
    let th = threshold as f32;
    let mut out: Vec<usize> = Vec::new();
    for i in 1..p.len() {
        if !(p[i] > p[i - 1] && p[i] >= th) {
            continue;
        }
        let mut j = i + 1;
        while j < p.len() && p[j] == p[i] {
            j += 1;
        }
        if j == p.len() || p[j] > p[i] {
            continue;
        }
        if out.last().is_none_or(|&l| i - l >= min_distance) {
            out.push(i);
        }
    }
    out
}

/// Streams `input` in random chunk sizes through a detector whose inference
/// is `window_probs`.
pub fn streamed(input: &[f32], cfg: StreamConfig, chunk_seed: u64) -> (Vec<usize>, Vec<StepOutcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed);
    let mut det = RollingDetector::new(cfg).unwrap();
    let mut calls = 0;
    let mut infer = |w: &[f32]| {
        let p = window_probs(calls, w);
        calls += 1;
        Ok(p)
    };
    let mut outcomes = Vec::new();
    let mut at = 0;
    while at < input.len() {
        let n = rng.random_range(1..700).min(input.len() - at);
        outcomes.extend(det.push(&input[at..at + n], &mut infer).unwrap());
        at += n;
    }
    (det.emitted().to_vec(), outcomes)
}

pub fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference.epw")
}

/// The trained reference model shipped with the tests.
pub fn fixture() -> ear_ecg::nn::ModelGraph {
    match ear_ecg::io::load_model(&fixture_path()).unwrap() {
        ear_ecg::io::LoadedModel::Float(m) => m,
        ear_ecg::io::LoadedModel::Quantized(_) => panic!("fixture must be EPW1"),
    }
}
