//! End-to-end composition: conditioning, rolling inference and vitals.

use crate::dsp::{condition_channel, zscore_f32, ChannelRole, Recording};
use crate::io::LoadedModel;
use crate::nn::{calibrate, ModelGraph, QuantizedModel, Tensor1D};
use crate::stream::{RollingDetector, StreamConfig};
use crate::vitals::{PeakTrain, VitalsSample, VitalsWindow};
use crate::{Error, Result, MODEL_FS, WINDOW_LEN};

/// Samples fed to the rolling detector per `push` call.
const CHUNK: usize = 50;

/// Float or int8 classifier.
#[derive(Debug, Clone)]
pub enum Engine {
    Float(ModelGraph),
    Quantized(QuantizedModel),
}

impl Engine {
    /// Probabilities for one raw (filtered, 250 Hz) window; the window is
    /// z-scored first, as during training.
    pub fn infer(&self, window: &[f32]) -> Result<Vec<f32>> {
        let x = model_input(window);
        let p = match self {
            Engine::Float(m) => m.classify(&x)?,
            Engine::Quantized(q) => q.classify(&q.quantize_input(&x))?,
        };
        Ok(p.into_data())
    }

    pub fn mac_count(&self) -> u64 {
        match self {
            Engine::Float(m) => m.metadata().mac_count,
            Engine::Quantized(q) => q.metadata().mac_count,
        }
    }
}

/// Z-scored copy of a window as a 1 x N tensor.
pub fn model_input(window: &[f32]) -> Tensor1D {
    let mut v = window.to_vec();
    zscore_f32(&mut v);
    Tensor1D::from_signal(&v)
}

/// Filtered 250 Hz samples of the channel with `role`.
pub fn prepare_channel(rec: &Recording, role: ChannelRole) -> Result<Vec<f32>> {
    let ch = rec.by_role(role).ok_or_else(|| {
        Error::Configuration(format!("recording has no `{role}` channel"))
    })?;
    Ok(condition_channel(&ch.samples, f64::from(rec.fs()))?
        .into_iter()
        .map(|v| v as f32)
        .collect())
}

/// Model inputs cut every `stride` samples.
pub fn calibration_windows(signal: &[f32], stride: usize) -> Vec<Tensor1D> {
    if signal.len() < WINDOW_LEN || stride == 0 {
        return Vec::new();
    }
    (0..=signal.len() - WINDOW_LEN)
        .step_by(stride)
        .map(|s| model_input(&signal[s..s + WINDOW_LEN]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutput {
    pub peaks: PeakTrain,
    /// One sample per rolling step.
    pub vitals: Vec<VitalsSample>,
    /// Committed (merged, final) probabilities from global index 0.
    pub probs: Vec<f32>,
}

/// Streams a conditioned 250 Hz signal through the rolling detector and
/// the vitals window.
pub fn run_stream(engine: &Engine, signal: &[f32], config: StreamConfig) -> Result<StreamOutput> {
    let mut det = RollingDetector::new(config)?;
    let mut vitals_win = VitalsWindow::new(config.vitals_span, MODEL_FS);
    let mut vitals = Vec::new();
    let mut probs = Vec::new();
    for chunk in signal.chunks(CHUNK) {
        for step in det.push(chunk, |w| engine.infer(w))? {
            step.peaks.iter().for_each(|&p| vitals_win.push_peak(p));
            vitals.push(vitals_win.tick(step.cursor));
            probs.extend_from_slice(&step.committed);
        }
    }
    Ok(StreamOutput {
        peaks: PeakTrain::new(det.emitted().to_vec(), MODEL_FS)?,
        vitals,
        probs,
    })
}

/// Builds the inference engine. An EPW1 model with `quantized` set is
/// calibrated on `calib` windows.
pub fn engine_for(model: LoadedModel, quantized: bool, calib: &[Tensor1D]) -> Result<Engine> {
    Ok(match (model, quantized) {
        (LoadedModel::Quantized(q), _) => Engine::Quantized(q),
        (LoadedModel::Float(m), false) => Engine::Float(m),
        (LoadedModel::Float(m), true) => Engine::Quantized(calibrate(&m, calib)?),
    })
}

/// Stride of calibration windows cut from a recording.
pub const CALIB_STRIDE: usize = 250;

/// Full pipeline on one recording channel.
pub fn infer_recording(
    model: LoadedModel,
    quantized: bool,
    rec: &Recording,
    role: ChannelRole,
    config: StreamConfig,
) -> Result<StreamOutput> {
    let signal = prepare_channel(rec, role)?;
    let calib = if quantized && matches!(model, LoadedModel::Float(_)) {
        calibration_windows(&signal, CALIB_STRIDE)
    } else {
        Vec::new()
    };
    let engine = engine_for(model, quantized, &calib)?;
    run_stream(&engine, &signal, config)
}

/// Decoder reconstruction over consecutive non-overlapping windows; a
/// trailing partial window is dropped.
pub fn reconstruct_recording(
    model: &LoadedModel,
    rec: &Recording,
    role: ChannelRole,
) -> Result<Vec<f32>> {
    let signal = prepare_channel(rec, role)?;
    let mut out = Vec::with_capacity(signal.len());
    for w in signal.chunks_exact(WINDOW_LEN) {
        let x = model_input(w);
        let r = match model {
            LoadedModel::Float(m) => m.reconstruct(&x)?,
            LoadedModel::Quantized(q) => q.reconstruct(&q.quantize_input(&x))?,
        };
        out.extend_from_slice(r.data());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vitals_cadence() {
        let engine = Engine::Float(ModelGraph::reference_zeros());
        let signal = vec![0.0f32; 250 * 30];
        let out = run_stream(&engine, &signal, StreamConfig::default()).unwrap();
        assert_eq!(out.vitals.len(), (7500 - 500) / 100 + 1);
        assert!(out.vitals.len() as f64 >= (30.0 - 10.0) / 0.4);
        assert_eq!(out.probs.len(), out.vitals.len() * 100);
        // Constant 0.5 probabilities never rise, so nothing is emitted.
        assert!(out.peaks.is_empty());
        assert!(out.vitals.iter().all(|v| !v.valid));
    }

    #[test]
    fn calibration_window_count() {
        assert_eq!(calibration_windows(&[0.0; 1000], 250).len(), 3);
        assert!(calibration_windows(&[0.0; 499], 250).is_empty());
    }
}
