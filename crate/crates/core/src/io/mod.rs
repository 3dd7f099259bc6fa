//! File formats.
//!
//! Text formats for recordings and outputs, little-endian binary for model
//! weights. Every reader reports a location (line or byte offset) on error.

mod config;
mod model;
mod text;

pub use config::{
    corpus_spec_from_config, parse_key_values, read_config, stream_config_from_config,
    synth_spec_from_config, ConfigMap,
};
pub use model::{
    load_model, model_from_bytes, model_to_bytes, quantized_to_bytes, write_model,
    write_quantized, LoadedModel, EPQ_MAGIC, EPW_MAGIC, FORMAT_VERSION,
};
pub use text::{
    parse_recording, read_calibration, read_peaks, read_probs, read_recording, read_vitals,
    recording_to_string, write_calibration, write_peaks, write_probs, write_recording,
    write_vitals,
};
