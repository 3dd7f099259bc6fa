//! `key=value` configuration files for synthesis and streaming.
//!
//! `#` starts a comment. Recognized keys:
//!
//! - synthesis: `duration`, `fs`, `hr_profile` (`t:bpm,t:bpm,...`),
//!   `hrv_jitter`, `snr_cross`, `snr_single`, `mains_amp`, `seed`,
//!   `subjects`, `sessions`
//! - streaming: `window`, `shift`, `trim`, `threshold`, `vitals_span`,
//!   `min_distance`

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::stream::StreamConfig;
use crate::synth::{CorpusSpec, SynthSpec};
use crate::{Error, Result};

/// Values with the line they came from.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigMap {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.parse()
            .map(Some)
            .map_err(|_| self.err(*line, format!("`{key}` value `{v}` is not valid")))
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, (line, _))) => Err(self.err(*line, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

pub fn parse_key_values(path: &Path, text: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap {
        path: path.to_path_buf(),
        entries: BTreeMap::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(map.err(i + 1, format!("expected key=value, got `{line}`")));
        };
        let k = k.trim().to_string();
        if map.entries.contains_key(&k) {
            return Err(map.err(i + 1, format!("duplicate key `{k}`")));
        }
        map.entries.insert(k, (i + 1, v.trim().to_string()));
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<ConfigMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(path, &text)
}

const SYNTH_KEYS: [&str; 10] = [
    "duration",
    "fs",
    "hr_profile",
    "hrv_jitter",
    "snr_cross",
    "snr_single",
    "mains_amp",
    "seed",
    "subjects",
    "sessions",
];

pub fn synth_spec_from_config(map: &ConfigMap) -> Result<SynthSpec> {
    map.check_keys(&SYNTH_KEYS)?;
    let d = SynthSpec::default();
    let hr_profile = match map.entries.get("hr_profile") {
        None => d.hr_profile,
        Some((line, v)) => v
            .split(',')
            .map(|knot| {
                let parsed = knot
                    .split_once(':')
                    .and_then(|(t, b)| Some((t.trim().parse().ok()?, b.trim().parse().ok()?)));
                parsed.ok_or_else(|| map.err(*line, format!("bad hr_profile knot `{knot}`")))
            })
            .collect::<Result<_>>()?,
    };
    let spec = SynthSpec {
        duration_s: map.get("duration")?.unwrap_or(d.duration_s),
        fs: map.get("fs")?.unwrap_or(d.fs),
        hr_profile,
        hrv_jitter_ms: map.get("hrv_jitter")?.unwrap_or(d.hrv_jitter_ms),
        snr_cross_db: map.get("snr_cross")?.unwrap_or(d.snr_cross_db),
        snr_single_db: map.get("snr_single")?.unwrap_or(d.snr_single_db),
        mains_amp: map.get("mains_amp")?.unwrap_or(d.mains_amp),
        seed: map.get("seed")?.unwrap_or(d.seed),
        morphology: d.morphology,
    };
    spec.validate()?;
    Ok(spec)
}

/// Corpus layout; defaults to 4 subjects with 4 sessions each.
pub fn corpus_spec_from_config(map: &ConfigMap) -> Result<CorpusSpec> {
    Ok(CorpusSpec {
        n_subjects: map.get("subjects")?.unwrap_or(4),
        sessions_per_subject: map.get("sessions")?.unwrap_or(4),
        template: synth_spec_from_config(map)?,
    })
}

pub fn stream_config_from_config(map: &ConfigMap) -> Result<StreamConfig> {
    map.check_keys(&[
        "window",
        "shift",
        "trim",
        "threshold",
        "vitals_span",
        "min_distance",
    ])?;
    let d = StreamConfig::default();
    let cfg = StreamConfig {
        window: map.get("window")?.unwrap_or(d.window),
        shift: map.get("shift")?.unwrap_or(d.shift),
        trim: map.get("trim")?.unwrap_or(d.trim),
        threshold: map.get("threshold")?.unwrap_or(d.threshold),
        vitals_span: map.get("vitals_span")?.unwrap_or(d.vitals_span),
        min_distance: map.get("min_distance")?.unwrap_or(d.min_distance),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_config_round() {
        let text = "# corpus\nduration=30\nhr_profile=0:60, 30:90\nseed=7\nsubjects=3\n";
        let map = parse_key_values(Path::new("c"), text).unwrap();
        let c = corpus_spec_from_config(&map).unwrap();
        assert_eq!(c.n_subjects, 3);
        assert_eq!(c.template.duration_s, 30.0);
        assert_eq!(c.template.hr_profile, vec![(0.0, 60.0), (30.0, 90.0)]);
        assert_eq!(c.template.seed, 7);
    }

    #[test]
    fn errors_carry_lines() {
        let map = parse_key_values(Path::new("c"), "fs=500\nbogus=1\n").unwrap();
        assert!(matches!(
            synth_spec_from_config(&map),
            Err(Error::Parse { line: 2, .. })
        ));
        let map = parse_key_values(Path::new("c"), "threshold=abc\n").unwrap();
        assert!(matches!(
            stream_config_from_config(&map),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_key_values(Path::new("c"), "novalue\n").is_err());
    }
}
