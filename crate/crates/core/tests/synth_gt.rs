use ear_ecg::dsp::{ground_truth_pipeline, ChannelRole};
use ear_ecg::synth::{generate, make_corpus, CorpusSpec, SynthSpec};
use ear_ecg::Error;
use proptest::prelude::*;

/// Fraction of truth peaks with a detection within `tol` samples.
fn recall(pred: &[usize], truth: &[usize], tol: usize) -> f64 {
    let hit = truth.iter().filter(|&&t| pred.iter().any(|&p| p.abs_diff(t) <= tol)).count();
    hit as f64 / truth.len() as f64
}

#[test]
fn ground_truth_pipeline_recovers_truth() {
    let profiles = [vec![(0.0, 70.0)], vec![(0.0, 55.0), (60.0, 120.0)], vec![(0.0, 150.0)]];
    for (i, hr_profile) in profiles.into_iter().enumerate() {
        for fs in [250, 500, 1000] {
            let spec = SynthSpec {
                duration_s: 90.0,
                fs,
                hr_profile: hr_profile.clone(),
                seed: 31 + i as u64,
                ..SynthSpec::default()
            };
            let out = generate(&spec).unwrap();
            let (_, peaks) = ground_truth_pipeline(&out.recording).unwrap();
            let truth = out.truth.indices();
            let r = recall(peaks.indices(), truth, 3);
            let p = recall(truth, peaks.indices(), 3);
            assert!(r >= 0.99 && p >= 0.99, "profile {i} fs {fs}: recall {r} precision {p}");
        }
    }
}

#[test]
fn metronome_truth_is_exact() {
    let spec = SynthSpec {
        duration_s: 30.0,
        hr_profile: vec![(0.0, 60.0)],
        hrv_jitter_ms: 0.0,
        ..SynthSpec::default()
    };
    let out = generate(&spec).unwrap();
    let idx = out.truth.indices();
    assert!(idx.windows(2).all(|w| w[1] - w[0] == 250));
    assert_eq!(out.recording.len(), 30 * 500);
}

#[test]
fn same_seed_same_bits() {
    let spec = SynthSpec { duration_s: 20.0, seed: 9, ..SynthSpec::default() };
    let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
    assert_eq!(a.recording, b.recording);
    assert_eq!(a.truth, b.truth);
    let c = generate(&SynthSpec { seed: 10, ..spec }).unwrap();
    assert_ne!(a.recording, c.recording);
}

#[test]
fn invalid_specs_are_rejected() {
    let bad = [
        SynthSpec { fs: 441, ..SynthSpec::default() },
        SynthSpec { duration_s: 0.0, ..SynthSpec::default() },
        SynthSpec { hr_profile: vec![(0.0, 20.0)], ..SynthSpec::default() },
        SynthSpec { hr_profile: vec![], ..SynthSpec::default() },
        SynthSpec { hrv_jitter_ms: -1.0, ..SynthSpec::default() },
    ];
    for spec in bad {
        assert!(matches!(generate(&spec), Err(Error::Argument(_))), "{spec:?}");
    }
}

#[test]
fn corpus_layout_and_regeneration() {
    let corpus = CorpusSpec {
        n_subjects: 4,
        sessions_per_subject: 4,
        template: SynthSpec { duration_s: 12.0, seed: 3, ..SynthSpec::default() },
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let paths = make_corpus(a.path(), &corpus).unwrap();
    assert_eq!(paths.len(), 16);
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut want = Vec::new();
    for i in 1..=4 {
        for j in 1..=4 {
            want.push(format!("subject{i}_session{j}.csv"));
            want.push(format!("subject{i}_session{j}.peaks"));
        }
    }
    want.sort();
    assert_eq!(names, want);

    make_corpus(b.path(), &corpus).unwrap();
    for n in &names {
        let x = std::fs::read(a.path().join(n)).unwrap();
        let y = std::fs::read(b.path().join(n)).unwrap();
        assert!(x == y, "{n} differs");
    }

    let one = CorpusSpec { n_subjects: 1, ..corpus };
    assert!(matches!(make_corpus(b.path(), &one), Err(Error::Argument(_))));
}

fn power_db(signal: &[f64], noise: &[f64]) -> f64 {
    let ms = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    10.0 * (ms(signal) / ms(noise)).log10()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ear_snr_matches_spec(
        snr_cross in -20.0f64..10.0,
        snr_single in -20.0f64..10.0,
        bpm in 40.0f64..160.0,
        seed in any::<u64>(),
    ) {
        let spec = SynthSpec {
            duration_s: 30.0,
            hr_profile: vec![(0.0, bpm)],
            snr_cross_db: snr_cross,
            snr_single_db: snr_single,
            seed,
            ..SynthSpec::default()
        };
        let out = generate(&spec).unwrap();
        for (role, parts, want) in [
            (ChannelRole::EarCross, &out.cross, snr_cross),
            (ChannelRole::EarSingle, &out.single, snr_single),
        ] {
            prop_assert!((power_db(&parts.ecg, &parts.noise) - want).abs() <= 1.0);
            // The components are what the channel actually carries.
            let ch = &out.recording.by_role(role).unwrap().samples;
            for (i, &v) in ch.iter().enumerate() {
                let sum = parts.ecg[i] + parts.noise[i] + parts.mains[i];
                prop_assert!((f64::from(v) - sum).abs() <= 1e-6 * (1.0 + sum.abs()));
            }
        }
    }

    #[test]
    fn peak_count_follows_mean_rr(
        bpm in 35.0f64..200.0,
        duration in 20.0f64..120.0,
        jitter in prop::sample::select(vec![0.0, 20.0]),
        seed in any::<u64>(),
    ) {
        let spec = SynthSpec {
            duration_s: duration,
            fs: 250,
            hr_profile: vec![(0.0, bpm)],
            hrv_jitter_ms: jitter,
            seed,
            ..SynthSpec::default()
        };
        let truth = generate(&spec).unwrap().truth;
        let idx = truth.indices();
        let n = idx.len() as i64;
        // Jitter is a random walk on beat times, so the realised mean RR is used.
        let mean_rr = (idx[idx.len() - 1] - idx[0]) as f64 / 250.0 / (n - 1) as f64;
        let expect = (duration / mean_rr).floor() as i64;
        prop_assert!((n - expect).abs() <= 1, "{} peaks, expected {}", n, expect);
    }
}
