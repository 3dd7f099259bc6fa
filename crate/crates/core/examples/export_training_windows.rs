//! Dumps prepared training windows for the offline trainer.
//!
//! Usage: export_training_windows <out_dir> [channel] [subjects] [duration_s]
//!
//! Writes raw little-endian arrays, N windows of 500 samples each:
//! `inputs.f32` (z-scored ear windows), `targets.f32` (arm ECG scaled to
//! [-1, 1]), `labels.u8` (3-sample R-peak labels), `subjects.u32`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use ear_ecg::dsp::{ground_truth_pipeline, make_labels, ChannelRole};
use ear_ecg::pipeline::{model_input, prepare_channel};
use ear_ecg::synth::{generate, session_spec, SynthSpec};
use ear_ecg::WINDOW_LEN;

const STRIDE: usize = 50;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let out = PathBuf::from(args.get(1).ok_or("missing output directory")?);
    let role: ChannelRole = args.get(2).map_or("ear_cross", String::as_str).parse()?;
    let subjects: usize = args.get(3).map_or(Ok(4), |s| s.parse())?;
    let duration_s: f64 = args.get(4).map_or(Ok(120.0), |s| s.parse())?;
    std::fs::create_dir_all(&out)?;

    let template = SynthSpec {
        duration_s,
        hr_profile: vec![(0.0, 60.0), (duration_s / 2.0, 90.0), (duration_s, 70.0)],
        seed: 1000,
        ..SynthSpec::default()
    };
    let mut inputs = BufWriter::new(File::create(out.join("inputs.f32"))?);
    let mut targets = BufWriter::new(File::create(out.join("targets.f32"))?);
    let mut labels = BufWriter::new(File::create(out.join("labels.u8"))?);
    let mut ids = BufWriter::new(File::create(out.join("subjects.u32"))?);
    let mut n = 0;
    for subject in 1..=subjects {
        for session in 1..=2 {
            let synth = generate(&session_spec(&template, subject, session))?;
            let ear = prepare_channel(&synth.recording, role)?;
            let (ecg, gt) = ground_truth_pipeline(&synth.recording)?;
            let lab = make_labels(gt.indices(), ecg.len())?;
            for start in (0..=ear.len() - WINDOW_LEN).step_by(STRIDE) {
                let x = model_input(&ear[start..start + WINDOW_LEN]);
                let t = &ecg[start..start + WINDOW_LEN];
                let peak = t.iter().fold(1e-9f64, |m, v| m.max(v.abs()));
                for v in x.data() {
                    inputs.write_all(&v.to_le_bytes())?;
                }
                for v in t {
                    targets.write_all(&((v / peak) as f32).to_le_bytes())?;
                }
                labels.write_all(&lab.values[start..start + WINDOW_LEN])?;
                ids.write_all(&(subject as u32).to_le_bytes())?;
                n += 1;
            }
        }
    }
    println!("{n} windows");
    Ok(())
}
