use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ear_ecg::dsp::{ground_truth_pipeline, ChannelRole};
use ear_ecg::eval::{grid_from_range, match_peaks, sweep_threshold, DEFAULT_TOLERANCE};
use ear_ecg::io::{self, LoadedModel};
use ear_ecg::nn::bench::{bench_float, bench_quantized, BenchReport};
use ear_ecg::nn::{calibrate, Tensor1D};
use ear_ecg::pipeline::{
    calibration_windows, infer_recording, prepare_channel, reconstruct_recording, CALIB_STRIDE,
};
use ear_ecg::stream::StreamConfig;
use ear_ecg::synth::make_corpus;

#[derive(Parser)]
#[command(name = "ear-ecg", version, about = "Streaming ear-ECG R-peak detection and vitals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from a key=value spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract arm-ECG R-peaks from a recording.
    Groundtruth {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the streaming pipeline on one ear channel.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        channel: ChannelRole,
        #[arg(long)]
        threshold: f64,
        /// Run the int8 path (an EPW1 model is calibrated on the recording).
        #[arg(long)]
        quantized: bool,
        #[arg(long)]
        out_peaks: PathBuf,
        #[arg(long)]
        out_vitals: PathBuf,
        /// Also write the committed probability stream.
        #[arg(long)]
        out_probs: Option<PathBuf>,
        /// key=value stream settings; `--threshold` takes precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Decoder-path ECG reconstruction per 2 s window.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        channel: ChannelRole,
        #[arg(long)]
        out: PathBuf,
    },
    /// Post-training int8 quantization.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        /// Directory of `.calib` window files and/or `.csv` recordings.
        #[arg(long)]
        calib: PathBuf,
        /// Channel used for windows cut from recordings.
        #[arg(long, default_value = "ear_cross")]
        channel: ChannelRole,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted peaks against truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: usize,
    },
    /// Pick the F1-maximizing threshold over `.probs` files.
    Sweep {
        #[arg(long)]
        probs: PathBuf,
        /// Directory holding `<name>.peaks` for every `<name>.probs`.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "0.05:0.95:0.05")]
        grid: String,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: usize,
    },
    /// Per-inference latency of the classifier path.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Benchmark the int8 path (an EPW1 model is calibrated on a
        /// synthetic window).
        #[arg(long)]
        quantized: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Creates the parent directory of an output path.
fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display())),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out } => {
            let corpus = io::corpus_spec_from_config(&io::read_config(&spec)?)?;
            let paths = make_corpus(&out, &corpus)?;
            println!("recordings={} dir={}", paths.len(), out.display());
        }
        Command::Groundtruth { rec, out } => {
            let (_, peaks) = ground_truth_pipeline(&io::read_recording(&rec)?)?;
            ensure_parent(&out)?;
            io::write_peaks(&out, &peaks)?;
            println!("peaks={}", peaks.len());
        }
        Command::Infer {
            model,
            rec,
            channel,
            threshold,
            quantized,
            out_peaks,
            out_vitals,
            out_probs,
            config,
        } => {
            let mut cfg = match config {
                Some(p) => io::stream_config_from_config(&io::read_config(&p)?)?,
                None => StreamConfig::default(),
            };
            cfg.threshold = threshold;
            let recording = io::read_recording(&rec)?;
            let out = infer_recording(io::load_model(&model)?, quantized, &recording, channel, cfg)?;
            ensure_parent(&out_peaks)?;
            ensure_parent(&out_vitals)?;
            io::write_peaks(&out_peaks, &out.peaks)?;
            io::write_vitals(&out_vitals, &out.vitals)?;
            if let Some(p) = out_probs {
                ensure_parent(&p)?;
                io::write_probs(&p, &out.probs)?;
            }
            let valid = out.vitals.iter().filter(|v| v.valid).count();
            println!(
                "peaks={} vitals={} valid={valid}",
                out.peaks.len(),
                out.vitals.len()
            );
        }
        Command::Reconstruct {
            model,
            rec,
            channel,
            out,
        } => {
            let recording = io::read_recording(&rec)?;
            let r = reconstruct_recording(&io::load_model(&model)?, &recording, channel)?;
            let mut s = String::from("reconstruction\n");
            for v in &r {
                let _ = writeln!(s, "{v}");
            }
            ensure_parent(&out)?;
            std::fs::write(&out, s).with_context(|| format!("writing {}", out.display()))?;
            println!("samples={}", r.len());
        }
        Command::Quantize {
            model,
            calib,
            channel,
            out,
        } => {
            let LoadedModel::Float(graph) = io::load_model(&model)? else {
                bail!("{} is already quantized", model.display());
            };
            let mut windows: Vec<Tensor1D> = Vec::new();
            for p in files_with_ext(&calib, "calib")? {
                windows.extend(io::read_calibration(&p)?);
            }
            for p in files_with_ext(&calib, "csv")? {
                let signal = prepare_channel(&io::read_recording(&p)?, channel)?;
                windows.extend(calibration_windows(&signal, CALIB_STRIDE));
            }
            if windows.is_empty() {
                bail!("no calibration windows found in {}", calib.display());
            }
            let q = calibrate(&graph, &windows)?;
            ensure_parent(&out)?;
            io::write_quantized(&out, &q)?;
            let size = std::fs::metadata(&out)?.len();
            println!("windows={} bytes={size}", windows.len());
        }
        Command::Eval { pred, truth, tol } => {
            let r = match_peaks(&io::read_peaks(&pred)?, &io::read_peaks(&truth)?, tol);
            println!(
                "tp={} fp={} fn={} precision={:?} recall={:?} f1={:?} tol={}",
                r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1, r.tolerance
            );
        }
        Command::Sweep {
            probs,
            truth,
            grid,
            tol,
        } => {
            let parts: Vec<f64> = grid
                .split(':')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("grid `{grid}` must be start:stop:step"))?;
            let [start, stop, step] = parts[..] else {
                bail!("grid `{grid}` must be start:stop:step");
            };
            let grid = grid_from_range(start, stop, step)?;
            let mut streams = Vec::new();
            let mut truths = Vec::new();
            for p in files_with_ext(&probs, "probs")? {
                let stem = p.file_stem().expect("file name");
                let t = truth.join(stem).with_extension("peaks");
                streams.push(io::read_probs(&p)?);
                truths.push(io::read_peaks(&t)?);
            }
            if streams.is_empty() {
                bail!("no .probs files in {}", probs.display());
            }
            let r = sweep_threshold(&streams, &truths, &grid, tol)?;
            for (th, m) in &r.reports {
                println!("threshold={th:?} tp={} fp={} fn={} f1={:?}", m.tp, m.fp, m.fn_, m.f1);
            }
            println!("best_threshold={:?} f1={:?}", r.best_threshold, r.best.f1);
        }
        Command::Bench {
            model,
            n,
            quantized,
        } => {
            let (engine, report) = match (io::load_model(&model)?, quantized) {
                (LoadedModel::Float(m), false) => ("float", bench_float(&m, n)?),
                (LoadedModel::Float(m), true) => {
                    let q = calibrate(&m, &[ear_ecg::nn::bench::bench_window()])?;
                    ("int8", bench_quantized(&q, n)?)
                }
                (LoadedModel::Quantized(q), _) => ("int8", bench_quantized(&q, n)?),
            };
            print_bench(engine, &report);
        }
    }
    Ok(())
}

fn print_bench(engine: &str, r: &BenchReport) {
    let us = |d: std::time::Duration| d.as_secs_f64() * 1e6;
    println!(
        "engine={engine} iterations={} mean_us={:.1} p50_us={:.1} p99_us={:.1} min_us={:.1} macs={} macs_per_s={:.3e}",
        r.iterations,
        us(r.mean),
        us(r.p50),
        us(r.p99),
        us(r.min),
        r.macs_per_inference,
        r.macs_per_second()
    );
}
