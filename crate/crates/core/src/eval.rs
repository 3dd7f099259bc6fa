//! Detection scoring, threshold selection, vitals error and beat averaging.

use crate::stream::threshold_peaks;
use crate::vitals::{PeakTrain, VitalsSample};
use crate::{Error, Result};

/// Default match tolerance in samples (48 ms at 250 Hz).
pub const DEFAULT_TOLERANCE: usize = 12;

/// Detection counts and derived scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tolerance: usize,
}

impl MatchReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tolerance: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MatchReport {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            tolerance,
        }
    }

    /// Pools the counts of two reports.
    pub fn pooled(&self, other: &MatchReport) -> MatchReport {
        MatchReport::from_counts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn_ + other.fn_,
            self.tolerance,
        )
    }
}

/// Greedy time-ordered one-to-one matching: each prediction takes the
/// earliest unmatched truth peak within `tol` samples.
pub fn match_peaks(pred: &PeakTrain, truth: &PeakTrain, tol: usize) -> MatchReport {
    let (p, t) = (pred.indices(), truth.indices());
    let mut j = 0;
    let mut tp = 0;
    for &x in p {
        while j < t.len() && t[j] + tol < x {
            j += 1;
        }
        if j < t.len() && t[j] <= x + tol {
            tp += 1;
            j += 1;
        }
    }
    MatchReport::from_counts(tp, p.len() - tp, t.len() - tp, tol)
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_grid() -> Vec<f64> {
    grid_from_range(0.05, 0.95, 0.05).expect("valid default grid")
}

/// Inclusive arithmetic grid `start, start + step, ..., <= stop`.
pub fn grid_from_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start.is_finite() && stop.is_finite()) || stop < start {
        return Err(Error::Argument(format!(
            "bad grid {start}:{stop}:{step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Rounded to 1e-12 so 0.1 + 0.2 style drift does not leak into labels.
    Ok((0..n)
        .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best_threshold: f64,
    pub best: MatchReport,
    /// One pooled report per grid point, in grid order.
    pub reports: Vec<(f64, MatchReport)>,
}

/// Pools detections over all subjects for every threshold and returns the
/// F1-maximizing one; ties go to the lower threshold.
///
/// Each probability stream starts at global index 0 and is matched against
/// the truth train at the same position.
pub fn sweep_threshold(
    prob_streams: &[Vec<f32>],
    truths: &[PeakTrain],
    grid: &[f64],
    tol: usize,
) -> Result<SweepResult> {
    if grid.is_empty() || prob_streams.is_empty() {
        return Err(Error::Argument("sweep needs a grid and at least one stream".into()));
    }
    if prob_streams.len() != truths.len() {
        return Err(Error::Argument(format!(
            "{} probability streams but {} truth trains",
            prob_streams.len(),
            truths.len()
        )));
    }
    if let Some(&t) = grid.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::Argument(format!("threshold {t} outside (0, 1)")));
    }
    let mut reports = Vec::with_capacity(grid.len());
    for &th in grid {
        let mut total = MatchReport::from_counts(0, 0, 0, tol);
        for (probs, truth) in prob_streams.iter().zip(truths) {
            let pred = PeakTrain::new(threshold_peaks(probs, th, 0), truth.fs())?;
            total = total.pooled(&match_peaks(&pred, truth, tol));
        }
        reports.push((th, total));
    }
    let (best_threshold, best) = reports
        .iter()
        .copied()
        .reduce(|a, b| {
            if b.1.f1 > a.1.f1 || (b.1.f1 == a.1.f1 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("non-empty grid");
    Ok(SweepResult {
        best_threshold,
        best,
        reports,
    })
}

/// Samples closer than this in time are treated as the same tick.
const TIME_EPS: f64 = 1e-6;

/// Mean absolute HR (bpm) and HRV (ms) errors over time-aligned pairs where
/// both samples are valid.
pub fn vitals_error(pred: &[VitalsSample], truth: &[VitalsSample]) -> Result<(f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let (mut n, mut hr, mut hrv) = (0usize, 0.0, 0.0);
    while i < pred.len() && j < truth.len() {
        let (a, b) = (&pred[i], &truth[j]);
        if (a.t - b.t).abs() <= TIME_EPS {
            if a.valid && b.valid {
                n += 1;
                hr += (a.hr - b.hr).abs();
                hrv += (a.hrv - b.hrv).abs();
            }
            i += 1;
            j += 1;
        } else if a.t < b.t {
            i += 1;
        } else {
            j += 1;
        }
    }
    if n == 0 {
        return Err(Error::Undefined("no overlapping valid vitals samples".into()));
    }
    Ok((hr / n as f64, hrv / n as f64))
}

/// Mean of the segments `signal[peak - pre ..= peak + post]` over every peak
/// with full support.
pub fn aligned_average(
    signal: &[f64],
    peaks: &PeakTrain,
    pre: usize,
    post: usize,
) -> Result<Vec<f64>> {
    let len = pre + post + 1;
    let mut acc = vec![0.0; len];
    let mut n = 0usize;
    for &p in peaks.indices() {
        let Some(start) = p.checked_sub(pre) else {
            continue;
        };
        if p + post >= signal.len() {
            continue;
        }
        for (a, &v) in acc.iter_mut().zip(&signal[start..start + len]) {
            *a += v;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Argument(
            "no peak has a complete segment in the signal".into(),
        ));
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(acc)
}
