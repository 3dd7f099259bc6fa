use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dsp::{Channel, ChannelRole, Recording};
use crate::nn::Tensor1D;
use crate::vitals::{PeakTrain, VitalsSample};
use crate::{Error, Result, MODEL_FS, WINDOW_LEN};

const VITALS_HEADER: &str = "t_s,hr_bpm,hrv_ms,valid";
const PEAKS_HEADER: &str = "sample_index";
const PROBS_HEADER: &str = "probability";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Serializes a recording: `key=value` header lines, then one row per sample
/// with nine significant digits per value.
pub fn recording_to_string(rec: &Recording) -> String {
    let mut s = String::new();
    let names: Vec<&str> = rec.channels().iter().map(|c| c.name.as_str()).collect();
    let roles: Vec<String> = rec
        .channels()
        .iter()
        .filter_map(|c| c.role.map(|r| format!("{}:{r}", c.name)))
        .collect();
    let _ = writeln!(s, "fs={}", rec.fs());
    let _ = writeln!(s, "channels={}", names.join(","));
    if !roles.is_empty() {
        let _ = writeln!(s, "roles={}", roles.join(","));
    }
    for (k, v) in &rec.metadata {
        let _ = writeln!(s, "{k}={v}");
    }
    for i in 0..rec.len() {
        for (j, c) in rec.channels().iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{:.8e}", c.samples[i]);
        }
        s.push('\n');
    }
    s
}

pub fn write_recording(path: &Path, rec: &Recording) -> Result<()> {
    write_text(path, &recording_to_string(rec))
}

pub fn read_recording(path: &Path) -> Result<Recording> {
    parse_recording(path, &read_text(path)?)
}

/// Parses recording text; `path` is only used in diagnostics.
pub fn parse_recording(path: &Path, text: &str) -> Result<Recording> {
    let mut fs_hz: Option<u32> = None;
    let mut names: Option<Vec<String>> = None;
    let mut roles: BTreeMap<String, ChannelRole> = BTreeMap::new();
    let mut metadata = BTreeMap::new();
    let mut columns: Vec<Vec<f32>> = Vec::new();
    let mut header_done = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !header_done {
            if let Some((key, value)) = line.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "fs" => {
                        let v = value.parse::<u32>().map_err(|_| {
                            parse_err(path, line_no, format!("fs `{value}` is not an integer"))
                        })?;
                        fs_hz = Some(v);
                    }
                    "channels" => {
                        names = Some(value.split(',').map(|n| n.trim().to_string()).collect());
                    }
                    "roles" => {
                        for item in value.split(',').filter(|s| !s.trim().is_empty()) {
                            let (name, role) = item.split_once(':').ok_or_else(|| {
                                parse_err(path, line_no, format!("role entry `{item}` lacks `:`"))
                            })?;
                            let role: ChannelRole = role
                                .trim()
                                .parse()
                                .map_err(|e: Error| parse_err(path, line_no, e.to_string()))?;
                            roles.insert(name.trim().to_string(), role);
                        }
                    }
                    _ => {
                        metadata.insert(key.to_string(), value.to_string());
                    }
                }
                continue;
            }
            header_done = true;
            let Some(n) = names.as_ref() else {
                return Err(parse_err(path, line_no, "missing `channels=` header"));
            };
            if fs_hz.is_none() {
                return Err(parse_err(path, line_no, "missing `fs=` header"));
            }
            if let Some(unknown) = roles.keys().find(|r| !n.contains(r)) {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("role given for unknown channel `{unknown}`"),
                ));
            }
            columns = vec![Vec::new(); n.len()];
        }
        let mut count = 0;
        for (j, field) in line.split(',').enumerate() {
            count += 1;
            let Some(col) = columns.get_mut(j) else {
                continue;
            };
            let v = field.trim().parse::<f32>().map_err(|_| {
                parse_err(path, line_no, format!("`{}` is not a number", field.trim()))
            })?;
            col.push(v);
        }
        if count != columns.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("{count} columns, expected {}", columns.len()),
            ));
        }
    }

    let names = names.ok_or_else(|| parse_err(path, 1, "missing `channels=` header"))?;
    let fs_hz = fs_hz.ok_or_else(|| parse_err(path, 1, "missing `fs=` header"))?;
    if columns.is_empty() {
        columns = vec![Vec::new(); names.len()];
    }
    let channels = names
        .into_iter()
        .zip(columns)
        .map(|(name, samples)| Channel {
            role: roles.get(&name).copied(),
            name,
            samples,
        })
        .collect();
    let mut rec = Recording::new(fs_hz, channels)?;
    rec.metadata = metadata;
    Ok(rec)
}

pub fn write_vitals(path: &Path, series: &[VitalsSample]) -> Result<()> {
    let mut s = format!("{VITALS_HEADER}\n");
    for v in series {
        let (hr, hrv) = if v.valid { (v.hr, v.hrv) } else { (0.0, 0.0) };
        let _ = writeln!(s, "{},{hr},{hrv},{}", v.t, u8::from(v.valid));
    }
    write_text(path, &s)
}

/// Iterates non-empty data lines after the expected header.
fn data_lines<'a>(
    path: &'a Path,
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(parse_err(path, 1, format!("expected header `{header}`"))),
    }
    Ok(lines
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty()))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse `{}`", s.trim())))
}

pub fn read_vitals(path: &Path) -> Result<Vec<VitalsSample>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (line, l) in data_lines(path, &text, VITALS_HEADER)? {
        let parts: Vec<&str> = l.split(',').collect();
        if parts.len() != 4 {
            return Err(parse_err(path, line, format!("{} fields, expected 4", parts.len())));
        }
        let valid = match parts[3].trim() {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(path, line, format!("valid flag `{other}`"))),
        };
        let sample = VitalsSample {
            t: field(path, line, parts[0])?,
            hr: field(path, line, parts[1])?,
            hrv: field(path, line, parts[2])?,
            valid,
        };
        if !valid && (sample.hr != 0.0 || sample.hrv != 0.0) {
            return Err(parse_err(path, line, "invalid sample with nonzero hr/hrv"));
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_peaks(path: &Path, peaks: &PeakTrain) -> Result<()> {
    let mut s = format!("{PEAKS_HEADER}\n");
    for p in peaks.indices() {
        let _ = writeln!(s, "{p}");
    }
    write_text(path, &s)
}

/// Reads a peak file; indices are at the model rate.
pub fn read_peaks(path: &Path) -> Result<PeakTrain> {
    let text = read_text(path)?;
    let mut idx: Vec<usize> = Vec::new();
    for (line, l) in data_lines(path, &text, PEAKS_HEADER)? {
        let v: usize = field(path, line, l)?;
        if idx.last().is_some_and(|&last| v <= last) {
            return Err(parse_err(path, line, "peak indices must be strictly increasing"));
        }
        idx.push(v);
    }
    PeakTrain::new(idx, MODEL_FS)
}

pub fn write_probs(path: &Path, probs: &[f32]) -> Result<()> {
    let mut s = format!("{PROBS_HEADER}\n");
    for p in probs {
        let _ = writeln!(s, "{p}");
    }
    write_text(path, &s)
}

pub fn read_probs(path: &Path) -> Result<Vec<f32>> {
    let text = read_text(path)?;
    let probs = data_lines(path, &text, PROBS_HEADER)?
        .map(|(line, l)| field(path, line, l))
        .collect();
    probs
}

/// One prepared 1 x 500 model input per line.
pub fn write_calibration(path: &Path, windows: &[Tensor1D]) -> Result<()> {
    let mut s = String::new();
    for w in windows {
        let row: Vec<String> = w.data().iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn read_calibration(path: &Path) -> Result<Vec<Tensor1D>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let values = l
            .split(',')
            .map(|f| field::<f32>(path, i + 1, f))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != WINDOW_LEN {
            return Err(parse_err(
                path,
                i + 1,
                format!("window has {} values, expected {WINDOW_LEN}", values.len()),
            ));
        }
        out.push(Tensor1D::from_signal(&values));
    }
    Ok(out)
}
