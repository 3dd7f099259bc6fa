//! Rolling-window R-peak detection.
//!
//! Every `shift` new samples the latest `window` samples are classified.
//! The last `trim` probabilities are dropped, the next `overlap` are merged
//! into the stored tail by element-wise maximum, and the oldest `shift`
//! merged samples are committed. Committed probabilities are final and feed
//! a time-ordered peak picker.
//!
//! ```text
//! window n      |<-------------- 500 -------------->|
//! kept          |<----------- 400 ---------->|trim |
//! merged        |<--- 300 (max with tail) -->|
//! committed     |100|
//! ```

use std::collections::VecDeque;

use crate::dsp::GT_MIN_DISTANCE;
use crate::{Error, Result, WINDOW_LEN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    pub window: usize,
    pub shift: usize,
    pub trim: usize,
    pub threshold: f64,
    pub vitals_span: usize,
    /// Minimum distance between emitted peaks.
    pub min_distance: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            window: WINDOW_LEN,
            shift: 100,
            trim: 100,
            threshold: 0.5,
            vitals_span: crate::vitals::VITALS_SPAN,
            min_distance: GT_MIN_DISTANCE,
        }
    }
}

impl StreamConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        StreamConfig {
            threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shift == 0 || self.trim > self.shift || self.shift > self.window {
            return Err(Error::Configuration(format!(
                "need 0 < trim <= shift <= window, got trim={} shift={} window={}",
                self.trim, self.shift, self.window
            )));
        }
        if self.window < self.trim + 2 * self.shift {
            return Err(Error::Configuration(format!(
                "window {} leaves no overlap after trim {} and shift {}",
                self.window, self.trim, self.shift
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Configuration(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if self.vitals_span == 0 || self.min_distance == 0 {
            return Err(Error::Configuration(
                "vitals_span and min_distance must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Samples kept from each inference.
    pub fn kept(&self) -> usize {
        self.window - self.trim
    }

    /// Length of the merged tail carried between steps.
    pub fn overlap(&self) -> usize {
        self.window - self.trim - self.shift
    }
}

/// Element-wise maximum of two equally long probability runs.
pub fn merge_overlap(prev_tail: &[f32], new_head: &[f32]) -> Result<Vec<f32>> {
    if prev_tail.len() != new_head.len() {
        return Err(Error::Argument(format!(
            "merge of {} and {} samples",
            prev_tail.len(),
            new_head.len()
        )));
    }
    Ok(prev_tail
        .iter()
        .zip(new_head)
        .map(|(&a, &b)| a.max(b))
        .collect())
}

/// Time-ordered peak picker over a committed probability stream.
///
/// A candidate is the first sample of a rise to at least `threshold`; it is
/// confirmed when a later sample is strictly lower (the earliest index of a
/// plateau wins) and emitted unless it lies within `min_distance` of the
/// previously emitted peak. A sample at the very start of the stream cannot
/// be a candidate, and an unconfirmed candidate at the end is never emitted.
#[derive(Debug, Clone)]
pub struct PeakPicker {
    threshold: f32,
    min_distance: usize,
    prev: Option<f32>,
    candidate: Option<(usize, f32)>,
    last_emitted: Option<usize>,
    next_index: usize,
}

impl PeakPicker {
    pub fn new(threshold: f64, min_distance: usize, start_index: usize) -> Self {
        PeakPicker {
            threshold: threshold as f32,
            min_distance,
            prev: None,
            candidate: None,
            last_emitted: None,
            next_index: start_index,
        }
    }

    /// Seeds the dedup state with an already-emitted peak.
    pub fn with_last_emitted(mut self, index: Option<usize>) -> Self {
        self.last_emitted = index;
        self
    }

    pub fn last_emitted(&self) -> Option<usize> {
        self.last_emitted
    }

    pub fn next_index(&self) -> usize {
        self.next_index
    }

    pub fn push(&mut self, p: f32, out: &mut Vec<usize>) {
        let i = self.next_index;
        self.next_index += 1;
        if let Some((ci, cv)) = self.candidate {
            if p < cv {
                self.candidate = None;
                if self.last_emitted.is_none_or(|l| ci - l >= self.min_distance) {
                    self.last_emitted = Some(ci);
                    out.push(ci);
                }
            } else if p > cv {
                self.candidate = None;
            }
        }
        if let Some(prev) = self.prev {
            if p > prev && p >= self.threshold && self.candidate.is_none() {
                self.candidate = Some((i, p));
            }
        }
        self.prev = Some(p);
    }

    pub fn extend(&mut self, probs: &[f32]) -> Vec<usize> {
        let mut out = Vec::new();
        for &p in probs {
            self.push(p, &mut out);
        }
        out
    }
}

/// Peaks of a committed probability run starting at global `base_index`,
/// thinned to the default 80-sample spacing.
pub fn threshold_peaks(committed: &[f32], threshold: f64, base_index: usize) -> Vec<usize> {
    PeakPicker::new(threshold, GT_MIN_DISTANCE, base_index).extend(committed)
}

/// Output of one rolling step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    /// One past the last input sample of this step's window.
    pub cursor: usize,
    /// Global index of `committed[0]`.
    pub committed_start: usize,
    pub committed: Vec<f32>,
    pub peaks: Vec<usize>,
}

/// Streaming state: input ring, merged tail, cursor and peak picker.
#[derive(Debug, Clone)]
pub struct RollingDetector {
    config: StreamConfig,
    buffer: VecDeque<f32>,
    received: usize,
    steps: usize,
    tail: Vec<f32>,
    picker: PeakPicker,
    emitted: Vec<usize>,
}

impl RollingDetector {
    pub fn new(config: StreamConfig) -> Result<Self> {
        config.validate()?;
        Ok(RollingDetector {
            buffer: VecDeque::with_capacity(config.window),
            received: 0,
            steps: 0,
            tail: vec![0.0; config.overlap()],
            picker: PeakPicker::new(config.threshold, config.min_distance, 0),
            emitted: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    /// Input samples consumed so far.
    pub fn received(&self) -> usize {
        self.received
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Global indices of every peak emitted so far.
    pub fn emitted(&self) -> &[usize] {
        &self.emitted
    }

    /// Number of committed probability samples.
    pub fn committed_len(&self) -> usize {
        self.steps * self.config.shift
    }

    /// Buffers `chunk` and runs one inference per completed shift.
    ///
    /// `infer` receives the newest `window` samples and must return as many
    /// probabilities.
    pub fn push<F>(&mut self, chunk: &[f32], mut infer: F) -> Result<Vec<StepOutcome>>
    where
        F: FnMut(&[f32]) -> Result<Vec<f32>>,
    {
        let StreamConfig {
            window, shift, ..
        } = self.config;
        let mut outcomes = Vec::new();
        let mut win = vec![0.0f32; window];
        for &x in chunk {
            if self.buffer.len() == window {
                self.buffer.pop_front();
            }
            self.buffer.push_back(x);
            self.received += 1;
            let due = self.received >= window && (self.received - window).is_multiple_of(shift);
            if !due {
                continue;
            }
            for (d, s) in win.iter_mut().zip(&self.buffer) {
                *d = *s;
            }
            let probs = infer(&win)?;
            if probs.len() != window {
                return Err(Error::Shape(format!(
                    "inference returned {} probabilities for a {window}-sample window",
                    probs.len()
                )));
            }
            outcomes.push(self.step(&probs));
        }
        Ok(outcomes)
    }

    fn step(&mut self, probs: &[f32]) -> StepOutcome {
        let (shift, overlap, kept) = (self.config.shift, self.config.overlap(), self.config.kept());
        let merged = merge_overlap(&self.tail, &probs[..overlap]).expect("tail length");
        let committed = merged[..shift].to_vec();
        self.tail.clear();
        self.tail.extend_from_slice(&merged[shift..]);
        self.tail.extend_from_slice(&probs[overlap..kept]);

        let committed_start = self.steps * shift;
        let peaks = self.picker.extend(&committed);
        self.emitted.extend_from_slice(&peaks);
        let outcome = StepOutcome {
            step: self.steps,
            cursor: committed_start + self.config.window,
            committed_start,
            committed,
            peaks,
        };
        self.steps += 1;
        outcome
    }
}
