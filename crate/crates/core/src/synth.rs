//! Synthetic recordings with exactly known R-peaks.
//!
//! Beats are sums of Gaussian bumps (P, Q, R, S, T) placed on the 250 Hz
//! grid so truth indices are exact at the model rate. The arm electrodes
//! see the full ECG plus common-mode interference; the ear channels see an
//! attenuated ECG buried in pink noise at a requested SNR plus mains.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dsp::{Channel, ChannelRole, Recording, MAINS_HZ};
use crate::vitals::PeakTrain;
use crate::{Error, Result, MODEL_FS};

/// One Gaussian wave of the beat template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    /// Offset from the R peak in seconds.
    pub offset_s: f64,
    pub amplitude: f64,
    pub width_s: f64,
}

/// Beat template. Amplitudes are in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Morphology {
    pub waves: [Wave; 5],
}

impl Default for Morphology {
    fn default() -> Self {
        let w = |offset_s, amplitude, width_s| Wave {
            offset_s,
            amplitude,
            width_s,
        };
        Morphology {
            waves: [
                w(-0.20, 0.15, 0.025),
                w(-0.028, -0.12, 0.010),
                w(0.0, 1.0, 0.010),
                w(0.030, -0.25, 0.011),
                w(0.28, 0.30, 0.045),
            ],
        }
    }
}

impl Morphology {
    const T_WAVE: usize = 4;

    /// Widths scaled by `width`, amplitudes by `gain`, T amplitude set to `t_amp`.
    pub fn perturbed(&self, width: f64, gain: f64, t_amp: f64) -> Morphology {
        let mut m = self.clone();
        for wv in &mut m.waves {
            wv.width_s *= width;
            wv.amplitude *= gain;
        }
        m.waves[Self::T_WAVE].amplitude = t_amp * gain;
        m
    }

    fn with_damped_t(&self, factor: f64) -> Morphology {
        let mut m = self.clone();
        m.waves[Self::T_WAVE].amplitude *= factor;
        m
    }

    /// Longest support of any wave relative to R, in seconds.
    fn reach_s(&self) -> f64 {
        self.waves
            .iter()
            .map(|w| w.offset_s.abs() + 5.0 * w.width_s)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub fs: u32,
    /// Piecewise-linear `(time_s, bpm)` knots, held constant outside.
    pub hr_profile: Vec<(f64, f64)>,
    /// Standard deviation of the per-beat RR perturbation (ms).
    pub hrv_jitter_ms: f64,
    pub snr_cross_db: f64,
    pub snr_single_db: f64,
    /// 50 Hz amplitude relative to each channel's ECG RMS.
    pub mains_amp: f64,
    pub seed: u64,
    pub morphology: Morphology,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            duration_s: 60.0,
            fs: 500,
            hr_profile: vec![(0.0, 70.0)],
            hrv_jitter_ms: 20.0,
            snr_cross_db: -6.0,
            snr_single_db: -12.0,
            mains_amp: 0.5,
            seed: 0,
            morphology: Morphology::default(),
        }
    }
}

/// Ear attenuation relative to the arm lead.
const CROSS_GAIN: f64 = 0.08;
const SINGLE_GAIN: f64 = 0.04;
const SINGLE_T_DAMPING: f64 = 0.3;
const ARM_NOISE_MV: f64 = 0.01;
const BASELINE_MV: f64 = 0.2;
const COMMON_MAINS_MV: f64 = 0.3;
const MIN_RR_S: f64 = 0.25;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Argument(m));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return fail(format!("duration {} must be positive", self.duration_s));
        }
        if self.fs == 0 || !self.fs.is_multiple_of(250) {
            return fail(format!("fs {} must be a positive multiple of 250", self.fs));
        }
        if self.hr_profile.is_empty() {
            return fail("hr_profile needs at least one knot".into());
        }
        if let Some(&(_, bpm)) = self
            .hr_profile
            .iter()
            .find(|(_, b)| !(30.0..=220.0).contains(b))
        {
            return fail(format!("heart rate {bpm} outside [30, 220] bpm"));
        }
        if self.hr_profile.windows(2).any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater)) {
            return fail("hr_profile times must be strictly increasing".into());
        }
        if !(self.hrv_jitter_ms >= 0.0 && self.hrv_jitter_ms.is_finite()) {
            return fail(format!("hrv_jitter {} must be non-negative", self.hrv_jitter_ms));
        }
        if !(self.snr_cross_db.is_finite() && self.snr_single_db.is_finite()) {
            return fail("SNRs must be finite".into());
        }
        if !(self.mains_amp >= 0.0 && self.mains_amp.is_finite()) {
            return fail(format!("mains_amp {} must be non-negative", self.mains_amp));
        }
        Ok(())
    }

    /// Heart rate at `t` by linear interpolation between knots.
    pub fn bpm_at(&self, t: f64) -> f64 {
        let k = &self.hr_profile;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((t0, b0), (t1, b1)) = (w[0], w[1]);
            if t <= t1 {
                return b0 + (b1 - b0) * (t - t0) / (t1 - t0);
            }
        }
        k[k.len() - 1].1
    }
}

/// Generated recording with its truth and the separate ear components.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub recording: Recording,
    /// R-peak indices at 250 Hz.
    pub truth: PeakTrain,
    /// Lead-I ECG at the recording rate (arm_left - arm_right, noise free).
    pub ecg: Vec<f64>,
    pub cross: EarComponents,
    pub single: EarComponents,
}

/// Additive parts of one ear channel.
#[derive(Debug, Clone)]
pub struct EarComponents {
    pub ecg: Vec<f64>,
    pub noise: Vec<f64>,
    pub mains: Vec<f64>,
}

impl EarComponents {
    /// Measured ECG-to-noise power ratio in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (mean_square(&self.ecg) / mean_square(&self.noise)).log10()
    }

    fn sum(&self) -> Vec<f32> {
        self.ecg
            .iter()
            .zip(&self.noise)
            .zip(&self.mains)
            .map(|((e, n), m)| (e + n + m) as f32)
            .collect()
    }
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// R times on the 250 Hz grid.
fn beat_indices(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let jitter = Normal::new(0.0, spec.hrv_jitter_ms / 1000.0).expect("finite jitter");
    let edge = 0.15;
    let mut t = 0.5 * 60.0 / spec.bpm_at(0.0);
    let mut out = Vec::new();
    while t < spec.duration_s - edge {
        let idx = (t * MODEL_FS).round() as usize;
        if out.last().is_none_or(|&last| idx > last) {
            out.push(idx);
        }
        let rr = 60.0 / spec.bpm_at(t) + jitter.sample(rng);
        t += rr.max(MIN_RR_S);
    }
    out
}

fn render(morph: &Morphology, beats: &[usize], fs: f64, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let reach = (morph.reach_s() * fs).ceil() as usize;
    for &b in beats {
        let r = b as f64 / MODEL_FS;
        let centre = (r * fs).round() as usize;
        let lo = centre.saturating_sub(reach);
        let hi = (centre + reach + 1).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let dt = i as f64 / fs - r;
            for w in &morph.waves {
                let z = (dt - w.offset_s) / w.width_s;
                *v += w.amplitude * (-0.5 * z * z).exp();
            }
        }
    }
    x
}

/// Unit-variance pink noise (Paul Kellet's refined filter on white noise).
fn pink_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        out.push(b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362);
        b[6] = w * 0.115926;
    }
    let mean = out.iter().sum::<f64>() / n.max(1) as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    out
}

fn ear_channel(
    ecg: Vec<f64>,
    snr_db: f64,
    mains_amp: f64,
    fs: f64,
    rng: &mut ChaCha8Rng,
) -> EarComponents {
    let n = ecg.len();
    let mut noise = pink_noise(rng, n);
    let p_sig = mean_square(&ecg);
    let p_noise = mean_square(&noise);
    let gain = if p_noise > 0.0 {
        (p_sig / p_noise / 10f64.powf(snr_db / 10.0)).sqrt()
    } else {
        0.0
    };
    noise.iter_mut().for_each(|v| *v *= gain);
    let amp = mains_amp * p_sig.sqrt() * std::f64::consts::SQRT_2;
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mains = (0..n)
        .map(|i| amp * (std::f64::consts::TAU * MAINS_HZ * i as f64 / fs + phase).sin())
        .collect();
    EarComponents { ecg, noise, mains }
}

/// Arm-left, arm-right, ear-single and ear-cross channels plus exact truth.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fs = f64::from(spec.fs);
    let n = (spec.duration_s * fs).round() as usize;
    let beats = beat_indices(spec, &mut rng);
    let ecg = render(&spec.morphology, &beats, fs, n);

    let wander_f = rng.random_range(0.15..0.35);
    let wander_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mains_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let white = Normal::new(0.0, ARM_NOISE_MV).expect("finite noise");
    let tau = std::f64::consts::TAU;
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for (i, &e) in ecg.iter().enumerate() {
        let t = i as f64 / fs;
        let common = BASELINE_MV * (tau * wander_f * t + wander_phase).sin()
            + COMMON_MAINS_MV * (tau * MAINS_HZ * t + mains_phase).sin();
        left.push((0.5 * e + common + white.sample(&mut rng)) as f32);
        right.push((-0.5 * e + common + white.sample(&mut rng)) as f32);
    }

    let cross_ecg = ecg.iter().map(|v| v * CROSS_GAIN).collect();
    let cross = ear_channel(cross_ecg, spec.snr_cross_db, spec.mains_amp, fs, &mut rng);
    let single_morph = spec.morphology.with_damped_t(SINGLE_T_DAMPING);
    let single_ecg = render(&single_morph, &beats, fs, n)
        .into_iter()
        .map(|v| v * SINGLE_GAIN)
        .collect();
    let single = ear_channel(single_ecg, spec.snr_single_db, spec.mains_amp, fs, &mut rng);

    let ch = |name: &str, role, samples| Channel {
        name: name.to_string(),
        role: Some(role),
        samples,
    };
    let recording = Recording::new(
        spec.fs,
        vec![
            ch("arm_l", ChannelRole::ArmLeft, left),
            ch("arm_r", ChannelRole::ArmRight, right),
            ch("ear_s", ChannelRole::EarSingle, single.sum()),
            ch("ear_x", ChannelRole::EarCross, cross.sum()),
        ],
    )?;
    Ok(SynthOutput {
        recording,
        truth: PeakTrain::new(beats, MODEL_FS)?,
        ecg,
        cross,
        single,
    })
}

/// Corpus layout parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_subjects: usize,
    pub sessions_per_subject: usize,
    pub template: SynthSpec,
}

/// Per-subject morphology and heart-rate offset.
pub fn subject_variant(template: &SynthSpec, subject: usize) -> (Morphology, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(
        template.seed ^ (subject as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    let width = rng.random_range(0.85..1.15);
    let gain = rng.random_range(0.8..1.2);
    let t_amp = rng.random_range(0.2..0.4);
    let hr_offset = rng.random_range(-10.0..10.0);
    (template.morphology.perturbed(width, gain, t_amp), hr_offset)
}

/// Spec for one recording of the corpus (subjects and sessions 1-based).
pub fn session_spec(template: &SynthSpec, subject: usize, session: usize) -> SynthSpec {
    let (morphology, hr_offset) = subject_variant(template, subject);
    SynthSpec {
        hr_profile: template
            .hr_profile
            .iter()
            .map(|&(t, b)| (t, (b + hr_offset).clamp(30.0, 220.0)))
            .collect(),
        seed: template
            .seed
            .wrapping_add((subject as u64) << 32)
            .wrapping_add(session as u64),
        morphology,
        ..template.clone()
    }
}

/// Writes `subject{i}_session{j}.csv` recordings with `.peaks` truth files
/// into `dir`; returns the recording paths.
pub fn make_corpus(dir: &Path, corpus: &CorpusSpec) -> Result<Vec<PathBuf>> {
    if corpus.n_subjects < 2 {
        return Err(Error::Argument(format!(
            "a corpus needs at least 2 subjects, got {}",
            corpus.n_subjects
        )));
    }
    if corpus.sessions_per_subject == 0 {
        return Err(Error::Argument("sessions_per_subject must be positive".into()));
    }
    corpus.template.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for subject in 1..=corpus.n_subjects {
        for session in 1..=corpus.sessions_per_subject {
            let spec = session_spec(&corpus.template, subject, session);
            let mut out = generate(&spec)?;
            out.recording
                .metadata
                .insert("subject".into(), subject.to_string());
            out.recording
                .metadata
                .insert("session".into(), session.to_string());
            let stem = format!("subject{subject}_session{session}");
            let rec_path = dir.join(format!("{stem}.csv"));
            crate::io::write_recording(&rec_path, &out.recording)?;
            crate::io::write_peaks(&dir.join(format!("{stem}.peaks")), &out.truth)?;
            paths.push(rec_path);
        }
    }
    Ok(paths)
}
