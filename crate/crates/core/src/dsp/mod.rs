//! Deterministic signal conditioning: filtering, resampling, normalization,
//! derivative peak picking and label construction.

mod filter;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

pub use filter::{
    design_bandpass, design_lowpass, design_notch, Biquad, BiquadCascade, CascadeState,
    FilterKind, NOTCH_BANDWIDTH_HZ,
};

use crate::vitals::PeakTrain;
use crate::{Error, Result, MODEL_FS};

/// Mains frequency removed by the notch.
pub const MAINS_HZ: f64 = 50.0;
/// ECG band kept by the band-pass.
pub const ECG_BAND_HZ: (f64, f64) = (0.5, 30.0);
/// Minimum height of a derivative peak on the z-scored ECG.
pub const GT_MIN_HEIGHT: f64 = 0.7;
/// Minimum distance between ground-truth R-peaks, in samples at 250 Hz.
pub const GT_MIN_DISTANCE: usize = 80;
/// Width of a label pulse in samples.
pub const LABEL_WIDTH: usize = 3;

const ZSCORE_EPS: f64 = 1e-12;
const ANTI_ALIAS_ORDER: usize = 6;
/// Anti-alias cutoff as a fraction of the output Nyquist rate.
const ANTI_ALIAS_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelRole {
    ArmLeft,
    ArmRight,
    EarSingle,
    EarCross,
}

impl ChannelRole {
    pub const ALL: [ChannelRole; 4] = [
        ChannelRole::ArmLeft,
        ChannelRole::ArmRight,
        ChannelRole::EarSingle,
        ChannelRole::EarCross,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelRole::ArmLeft => "arm_left",
            ChannelRole::ArmRight => "arm_right",
            ChannelRole::EarSingle => "ear_single",
            ChannelRole::EarCross => "ear_cross",
        }
    }
}

impl fmt::Display for ChannelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown channel role `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub role: Option<ChannelRole>,
    pub samples: Vec<f32>,
}

/// A multichannel biopotential recording.
///
/// Samples are stored as `f32` (acquisition precision); processing runs in
/// `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    fs: u32,
    channels: Vec<Channel>,
    /// Free-form header entries such as subject and session.
    pub metadata: BTreeMap<String, String>,
}

impl Recording {
    pub fn new(fs: u32, channels: Vec<Channel>) -> Result<Self> {
        if fs == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some(first) = channels.first() {
            let n = first.samples.len();
            if let Some(c) = channels.iter().find(|c| c.samples.len() != n) {
                return Err(Error::Validation(format!(
                    "channel `{}` has {} samples, expected {n}",
                    c.name,
                    c.samples.len()
                )));
            }
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Validation(format!("duplicate channel `{}`", c.name)));
            }
            if let Some(role) = c.role {
                if channels[..i].iter().any(|o| o.role == Some(role)) {
                    return Err(Error::Validation(format!("role `{role}` assigned twice")));
                }
            }
        }
        Ok(Recording {
            fs,
            channels,
            metadata: BTreeMap::new(),
        })
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / f64::from(self.fs)
    }

    pub fn by_role(&self, role: ChannelRole) -> Option<&Channel> {
        self.channels.iter().find(|c| c.role == Some(role))
    }

    fn role_as_f64(&self, role: ChannelRole) -> Result<Vec<f64>> {
        self.by_role(role)
            .map(|c| c.samples.iter().map(|&v| f64::from(v)).collect())
            .ok_or_else(|| Error::Configuration(format!("recording has no `{role}` channel")))
    }
}

/// Binary R-peak labels aligned to a 250 Hz window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub values: Vec<u8>,
    pub width: usize,
}

/// The notch + band-pass chain applied to every channel before anything else.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    notch: BiquadCascade,
    bandpass: BiquadCascade,
}

impl Preprocessor {
    pub fn new(fs: f64) -> Result<Self> {
        Ok(Preprocessor {
            notch: design_notch(MAINS_HZ, fs)?,
            bandpass: design_bandpass(ECG_BAND_HZ.0, ECG_BAND_HZ.1, fs)?,
        })
    }

    pub fn notch(&self) -> &BiquadCascade {
        &self.notch
    }

    pub fn bandpass(&self) -> &BiquadCascade {
        &self.bandpass
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        filter_apply(&self.bandpass, &filter_apply(&self.notch, x)?)
    }
}

/// Causal evaluation of a cascade from zero initial state.
pub fn filter_apply(cascade: &BiquadCascade, x: &[f64]) -> Result<Vec<f64>> {
    cascade.apply(x)
}

/// Anti-alias low-pass followed by integer decimation.
pub fn resample_to(x: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>> {
    let factor = decimation_factor(fs_in, fs_out)?;
    if factor == 1 {
        return Ok(x.to_vec());
    }
    let lp = design_lowpass(ANTI_ALIAS_FRACTION * fs_out / 2.0, ANTI_ALIAS_ORDER, fs_in)?;
    Ok(lp.apply(x)?.into_iter().step_by(factor).collect())
}

/// Integer ratio `fs_in / fs_out`, or an unsupported-rate error.
pub fn decimation_factor(fs_in: f64, fs_out: f64) -> Result<usize> {
    let unsupported = |reason| Error::UnsupportedRate {
        fs_in,
        fs_out,
        reason,
    };
    if !(fs_in > 0.0 && fs_out > 0.0 && fs_in.is_finite() && fs_out.is_finite()) {
        return Err(unsupported("rates must be positive"));
    }
    if fs_in < fs_out {
        return Err(unsupported("upsampling is not supported"));
    }
    let ratio = fs_in / fs_out;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-9 {
        return Err(unsupported("only integer decimation is supported"));
    }
    Ok(factor as usize)
}

/// Zero mean, unit population standard deviation.
///
/// A (numerically) constant input maps to all zeros.
pub fn zscore(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Argument("z-score of an empty sequence".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < ZSCORE_EPS {
        return Ok(vec![0.0; x.len()]);
    }
    Ok(x.iter().map(|v| (v - mean) / std).collect())
}

/// In-place `f32` z-score used on model input windows.
pub fn zscore_f32(x: &mut [f32]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = x.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < ZSCORE_EPS {
        x.iter_mut().for_each(|v| *v = 0.0);
    } else {
        x.iter_mut()
            .for_each(|v| *v = ((f64::from(*v) - mean) / std) as f32);
    }
}

/// First difference `x[i+1] - x[i]`.
pub fn derivative(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::Argument(format!(
            "derivative needs at least 2 samples, got {}",
            x.len()
        )));
    }
    Ok(x.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Strict local maxima of height at least `min_height`, thinned so that kept
/// peaks are at least `min_distance` apart.
///
/// Thinning keeps the tallest candidate first; equal heights keep the
/// earlier index.
pub fn find_peaks(x: &[f64], min_height: f64, min_distance: usize) -> Vec<usize> {
    let min_distance = min_distance.max(1);
    let candidates: Vec<usize> = (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] > x[i + 1] && x[i] >= min_height)
        .collect();
    if min_distance == 1 {
        return candidates;
    }
    // Tallest first; the stable sort keeps earlier indices first among ties.
    let mut by_height = candidates;
    by_height.sort_by(|&a, &b| x[b].total_cmp(&x[a]));
    let mut kept = BTreeSet::new();
    for i in by_height {
        let lo = i.saturating_sub(min_distance - 1);
        if kept.range(lo..i + min_distance).next().is_none() {
            kept.insert(i);
        }
    }
    kept.into_iter().collect()
}

/// Ones at every peak and its two neighbours, clipped at the boundaries.
pub fn make_labels(peaks: &[usize], length: usize) -> Result<LabelVector> {
    let mut values = vec![0u8; length];
    for &p in peaks {
        if p >= length {
            return Err(Error::Argument(format!(
                "peak index {p} outside label length {length}"
            )));
        }
        let lo = p.saturating_sub(LABEL_WIDTH / 2);
        let hi = (p + LABEL_WIDTH / 2).min(length - 1);
        values[lo..=hi].iter_mut().for_each(|v| *v = 1);
    }
    Ok(LabelVector {
        values,
        width: LABEL_WIDTH,
    })
}

/// Arm-ECG reference: notch, band-pass, Lead I, z-score, 250 Hz, derivative
/// peak picking.
///
/// Returns the normalized 250 Hz ECG and its R-peak train.
pub fn ground_truth_pipeline(rec: &Recording) -> Result<(Vec<f64>, PeakTrain)> {
    let left = rec.role_as_f64(ChannelRole::ArmLeft)?;
    let right = rec.role_as_f64(ChannelRole::ArmRight)?;
    let fs = f64::from(rec.fs());
    decimation_factor(fs, MODEL_FS)?;
    if left.len() < 2 {
        return Ok((zscore_or_empty(&left), PeakTrain::empty(MODEL_FS)));
    }
    let pre = Preprocessor::new(fs)?;
    let left = pre.apply(&left)?;
    let right = pre.apply(&right)?;
    let lead_i: Vec<f64> = left.iter().zip(&right).map(|(l, r)| l - r).collect();
    let ecg = resample_to(&zscore(&lead_i)?, fs, MODEL_FS)?;
    if ecg.len() < 2 {
        return Ok((ecg, PeakTrain::empty(MODEL_FS)));
    }
    let peaks = find_peaks(&derivative(&ecg)?, GT_MIN_HEIGHT, GT_MIN_DISTANCE);
    Ok((ecg, PeakTrain::new(peaks, MODEL_FS)?))
}

fn zscore_or_empty(x: &[f64]) -> Vec<f64> {
    zscore(x).unwrap_or_default()
}

/// Filters one channel and brings it to the model rate.
pub fn condition_channel(samples: &[f32], fs: f64) -> Result<Vec<f64>> {
    let x: Vec<f64> = samples.iter().map(|&v| f64::from(v)).collect();
    let pre = Preprocessor::new(fs)?;
    resample_to(&pre.apply(&x)?, fs, MODEL_FS)
}
