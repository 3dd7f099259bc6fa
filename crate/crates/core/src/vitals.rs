//! RR-interval correction and HR/HRV estimation over the rolling window.

use std::collections::VecDeque;

use crate::{Error, Result, MODEL_FS};

/// Fewer peaks than this in the vitals window yields an invalid sample.
pub const MIN_PEAKS_FOR_VITALS: usize = 4;
/// Length of the vitals window in samples at 250 Hz (10 s).
pub const VITALS_SPAN: usize = 2500;

/// R-peak sample indices at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakTrain {
    indices: Vec<usize>,
    fs: f64,
}

impl PeakTrain {
    /// Fails unless `indices` is strictly increasing and `fs` is positive.
    pub fn new(indices: Vec<usize>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Argument(format!("peak train rate {fs} must be positive")));
        }
        if let Some(w) = indices.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Argument(format!(
                "peak indices must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(PeakTrain { indices, fs })
    }

    pub fn empty(fs: f64) -> Self {
        PeakTrain {
            indices: Vec::new(),
            fs,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Smallest gap between consecutive peaks, if there are at least two.
    pub fn min_gap(&self) -> Option<usize> {
        self.indices.windows(2).map(|w| w[1] - w[0]).min()
    }
}

/// Successive R-R durations in milliseconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RrSeries {
    pub intervals_ms: Vec<f64>,
}

impl RrSeries {
    pub fn new(intervals_ms: Vec<f64>) -> Result<Self> {
        if let Some(v) = intervals_ms.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Argument(format!("RR interval {v} ms is not positive")));
        }
        Ok(RrSeries { intervals_ms })
    }

    pub fn len(&self) -> usize {
        self.intervals_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals_ms.is_empty()
    }

    pub fn total_ms(&self) -> f64 {
        self.intervals_ms.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionResult {
    pub corrected: RrSeries,
    /// Spurious peaks removed.
    pub n_extra: usize,
    /// Missed peaks inserted.
    pub n_missed: usize,
    /// Median the final expectations were computed against.
    pub rr_median: f64,
}

/// One HR/HRV estimate. Invalid samples carry zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VitalsSample {
    pub t: f64,
    pub hr: f64,
    pub hrv: f64,
    pub valid: bool,
}

impl VitalsSample {
    pub fn invalid(t: f64) -> Self {
        VitalsSample {
            t,
            hr: 0.0,
            hrv: 0.0,
            valid: false,
        }
    }
}

pub fn rr_intervals(peaks: &PeakTrain) -> RrSeries {
    let ms_per_sample = 1000.0 / peaks.fs;
    RrSeries {
        intervals_ms: peaks
            .indices
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 * ms_per_sample)
            .collect(),
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// `f64::round` rounds half away from zero.
fn expectations(rr: &[f64], med: f64) -> Vec<u64> {
    rr.iter().map(|v| (v / med).round() as u64).collect()
}

/// Folds the smallest zero-expectation interval into its smaller neighbour.
///
/// Returns the input unchanged when no interval rounds to zero.
pub fn correct_extra(rr: &RrSeries) -> RrSeries {
    let v = &rr.intervals_ms;
    if v.len() < 2 {
        return rr.clone();
    }
    let med = median(v);
    let exp = expectations(v, med);
    let Some(target) = (0..v.len())
        .filter(|&i| exp[i] == 0)
        .min_by(|&a, &b| v[a].total_cmp(&v[b]))
    else {
        return rr.clone();
    };
    let neighbour = match (target.checked_sub(1), v.get(target + 1)) {
        (Some(l), Some(&r)) => {
            if v[l] <= r {
                l
            } else {
                target + 1
            }
        }
        (Some(l), None) => l,
        (None, _) => target + 1,
    };
    let (lo, hi) = (target.min(neighbour), target.max(neighbour));
    let mut out = Vec::with_capacity(v.len() - 1);
    out.extend_from_slice(&v[..lo]);
    out.push(v[lo] + v[hi]);
    out.extend_from_slice(&v[hi + 1..]);
    RrSeries { intervals_ms: out }
}

const MAX_PASSES: usize = 32;

/// Removes spurious and inserts missed beats against the running median.
///
/// Series with fewer than three intervals are returned uncorrected.
pub fn correct_rr(rr: &RrSeries) -> CorrectionResult {
    if rr.len() < 3 {
        return CorrectionResult {
            corrected: rr.clone(),
            n_extra: 0,
            n_missed: 0,
            rr_median: median(&rr.intervals_ms),
        };
    }
    let mut current = rr.clone();
    let (mut n_extra, mut n_missed) = (0, 0);
    let mut med = median(&current.intervals_ms);
    // A split can move the median, so passes repeat until every interval
    // has expectation 1 against the median of the result.
    for _ in 0..MAX_PASSES {
        let mut exp = expectations(&current.intervals_ms, med);
        while exp.contains(&0) {
            let next = correct_extra(&current);
            if next.len() == current.len() {
                break;
            }
            current = next;
            med = median(&current.intervals_ms);
            exp = expectations(&current.intervals_ms, med);
            n_extra += 1;
        }
        if exp.iter().all(|&k| k == 1) {
            break;
        }
        let mut split = Vec::with_capacity(current.len());
        for (&v, &k) in current.intervals_ms.iter().zip(&exp) {
            if k > 1 {
                n_missed += (k - 1) as usize;
                split.extend(std::iter::repeat_n(v / k as f64, k as usize));
            } else {
                split.push(v);
            }
        }
        current = RrSeries { intervals_ms: split };
        med = median(&current.intervals_ms);
    }
    let corrected = current.intervals_ms;
    CorrectionResult {
        corrected: RrSeries {
            intervals_ms: corrected,
        },
        n_extra,
        n_missed,
        rr_median: med,
    }
}

/// Peak count scaled to one minute over the first-to-last peak span.
///
/// `None` when fewer than four peaks are available.
pub fn compute_hr(peaks: &PeakTrain) -> Option<f64> {
    let idx = peaks.indices();
    if idx.len() < MIN_PEAKS_FOR_VITALS {
        return None;
    }
    let span_s = (idx[idx.len() - 1] - idx[0]) as f64 / peaks.fs;
    Some(hr_from_count_and_span(idx.len(), span_s))
}

fn hr_from_count_and_span(n_peaks: usize, span_s: f64) -> f64 {
    n_peaks as f64 * 60.0 / span_s
}

/// RMSSD in milliseconds; `None` with fewer than two intervals.
pub fn compute_hrv(rr: &RrSeries) -> Option<f64> {
    let v = &rr.intervals_ms;
    if v.len() < 2 {
        return None;
    }
    let sum_sq: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Some((sum_sq / (v.len() - 1) as f64).sqrt())
}

/// HR/HRV for the peaks of the current window, after RR correction.
pub fn vitals_tick(t: f64, recent: &PeakTrain) -> VitalsSample {
    if recent.len() < MIN_PEAKS_FOR_VITALS {
        return VitalsSample::invalid(t);
    }
    let fixed = correct_rr(&rr_intervals(recent));
    let n_peaks = fixed.corrected.len() + 1;
    let span_s = fixed.corrected.total_ms() / 1000.0;
    match compute_hrv(&fixed.corrected) {
        Some(hrv) if span_s > 0.0 => VitalsSample {
            t,
            hr: hr_from_count_and_span(n_peaks, span_s),
            hrv,
            valid: true,
        },
        _ => VitalsSample::invalid(t),
    }
}

/// Holds emitted peaks for the trailing vitals window.
#[derive(Debug, Clone)]
pub struct VitalsWindow {
    span: usize,
    fs: f64,
    peaks: VecDeque<usize>,
}

impl VitalsWindow {
    pub fn new(span: usize, fs: f64) -> Self {
        VitalsWindow {
            span,
            fs,
            peaks: VecDeque::new(),
        }
    }

    pub fn push_peak(&mut self, index: usize) {
        if self.peaks.back().is_none_or(|&last| index > last) {
            self.peaks.push_back(index);
        }
    }

    /// Vitals over peaks in `[cursor - span, cursor)`. Invalid until a full
    /// span of input has been seen.
    pub fn tick(&mut self, cursor: usize) -> VitalsSample {
        let start = cursor.saturating_sub(self.span);
        while self.peaks.front().is_some_and(|&p| p < start) {
            self.peaks.pop_front();
        }
        let t = cursor as f64 / self.fs;
        if cursor < self.span {
            return VitalsSample::invalid(t);
        }
        let indices: Vec<usize> = self.peaks.iter().copied().filter(|&p| p < cursor).collect();
        match PeakTrain::new(indices, self.fs) {
            Ok(train) => vitals_tick(t, &train),
            Err(_) => VitalsSample::invalid(t),
        }
    }
}

impl Default for VitalsWindow {
    fn default() -> Self {
        VitalsWindow::new(VITALS_SPAN, MODEL_FS)
    }
}
