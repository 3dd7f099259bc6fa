use ear_ecg::vitals::{
    compute_hr, compute_hrv, correct_extra, correct_rr, rr_intervals, vitals_tick, PeakTrain,
    RrSeries, VitalsWindow,
};
use proptest::prelude::*;

fn rr(v: &[f64]) -> RrSeries {
    RrSeries::new(v.to_vec()).unwrap()
}

#[test]
fn hand_traced_corrections() {
    assert_eq!(correct_extra(&rr(&[800.0, 100.0, 700.0, 800.0])).intervals_ms, vec![800.0; 3]);
    assert_eq!(correct_extra(&rr(&[100.0, 700.0, 800.0, 800.0])).intervals_ms, vec![800.0; 3]);

    let r = correct_rr(&rr(&[800.0, 800.0, 1600.0, 800.0]));
    assert_eq!(r.corrected.intervals_ms, vec![800.0; 5]);
    assert_eq!((r.n_missed, r.n_extra), (1, 0));

    let r = correct_rr(&rr(&[800.0, 100.0, 700.0, 800.0]));
    assert_eq!(r.corrected.intervals_ms, vec![800.0; 3]);
    assert_eq!((r.n_missed, r.n_extra), (0, 1));

    let r = correct_rr(&rr(&[800.0, 800.0, 800.0]));
    assert_eq!(r.corrected.intervals_ms, vec![800.0; 3]);
    assert_eq!((r.n_missed, r.n_extra), (0, 0));
}

#[test]
fn hr_and_hrv_formulas() {
    let ten = PeakTrain::new((0..10).map(|i| i * 250).collect(), 250.0).unwrap();
    assert!((compute_hr(&ten).unwrap() - 600.0 / 9.0).abs() < 1e-9);
    let four = PeakTrain::new(vec![0, 250, 500, 750], 250.0).unwrap();
    assert_eq!(compute_hr(&four).unwrap(), 80.0);
    assert!(compute_hr(&PeakTrain::new(vec![0, 250, 500], 250.0).unwrap()).is_none());
    let hrv = compute_hrv(&rr(&[800.0, 810.0, 790.0])).unwrap();
    assert!((hrv - 250f64.sqrt()).abs() < 1e-12);
    assert_eq!(compute_hrv(&rr(&[800.0; 3])).unwrap(), 0.0);
    assert!(compute_hrv(&rr(&[800.0])).is_none());
}

#[test]
fn rr_examples() {
    let t = |v: Vec<usize>| PeakTrain::new(v, 250.0).unwrap();
    assert_eq!(rr_intervals(&t(vec![0, 250, 500])).intervals_ms, vec![1000.0, 1000.0]);
    assert_eq!(rr_intervals(&t(vec![0, 200])).intervals_ms, vec![800.0]);
    assert!(rr_intervals(&t(vec![7])).is_empty());
}

#[test]
fn empty_and_sparse_windows_are_invalid() {
    let s = vitals_tick(12.0, &PeakTrain::empty(250.0));
    assert_eq!((s.hr, s.hrv, s.valid), (0.0, 0.0, false));
    let s = vitals_tick(12.0, &PeakTrain::new(vec![0, 250, 500], 250.0).unwrap());
    assert_eq!((s.hr, s.hrv, s.valid), (0.0, 0.0, false));
}

#[test]
fn dropped_peak_every_ten_seconds_is_restored() {
    // 72 bpm truth: 10 s windows of a 833.3 ms metronome with one deletion.
    let rr_samples = 208;
    let mut win = VitalsWindow::default();
    let all: Vec<usize> = (1..200).map(|i| i * rr_samples).collect();
    let mut kept = Vec::new();
    for (i, &p) in all.iter().enumerate() {
        if i % 12 != 5 {
            kept.push(p);
        }
    }
    let truth_hr = {
        let w: Vec<usize> = all.iter().copied().filter(|p| (5000..7500).contains(p)).collect();
        vitals_tick(30.0, &PeakTrain::new(w, 250.0).unwrap()).hr
    };
    kept.iter().for_each(|&p| win.push_peak(p));
    let s = win.tick(7500);
    assert!(s.valid);
    assert!((s.hr - truth_hr).abs() <= 1.0, "{} vs {truth_hr}", s.hr);
}

/// Metronomic train with moderate jitter.
fn train_strategy() -> impl Strategy<Value = Vec<f64>> {
    (600.0f64..1200.0, prop::collection::vec(-40.0f64..40.0, 4..30))
        .prop_map(|(base, jit)| jit.iter().map(|j| base + j).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn correct_rr_is_idempotent(v in prop::collection::vec(50.0f64..3000.0, 3..30)) {
        let once = correct_rr(&rr(&v)).corrected;
        let twice = correct_rr(&once).corrected;
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn corrected_intervals_round_to_one_median(v in prop::collection::vec(50.0f64..3000.0, 3..30)) {
        let r = correct_rr(&rr(&v));
        for x in &r.corrected.intervals_ms {
            prop_assert_eq!((x / r.rr_median).round(), 1.0, "{} vs median {}", x, r.rr_median);
        }
    }

    #[test]
    fn correction_conserves_duration(v in prop::collection::vec(50.0f64..3000.0, 3..30)) {
        let total: f64 = v.iter().sum();
        let c = correct_rr(&rr(&v)).corrected;
        prop_assert!((c.total_ms() - total).abs() <= 1e-9 * total);
    }

    #[test]
    fn metronome_deletion_restores_exact_multiset(
        base in 300u32..1500,
        n in 4usize..30,
        at in any::<prop::sample::Index>(),
    ) {
        let base = f64::from(base);
        let j = 1 + at.index(n - 1);
        let mut damaged = vec![base; n - 1];
        damaged[j - 1] = 2.0 * base;
        let r = correct_rr(&rr(&damaged));
        prop_assert_eq!(r.corrected.intervals_ms, vec![base; n]);
        prop_assert_eq!((r.n_missed, r.n_extra), (1, 0));
    }

    #[test]
    fn jittered_deletion_restores_cardinality(v in train_strategy(), at in any::<prop::sample::Index>()) {
        // Deleting interior peak j merges intervals j-1 and j.
        let j = 1 + at.index(v.len() - 1);
        let mut damaged = v[..j - 1].to_vec();
        damaged.push(v[j - 1] + v[j]);
        damaged.extend_from_slice(&v[j + 1..]);
        let r = correct_rr(&rr(&damaged));
        prop_assert_eq!(r.n_missed, 1);
        prop_assert_eq!(r.corrected.len(), v.len());
        let mut want = v.clone();
        let half = (v[j - 1] + v[j]) / 2.0;
        want[j - 1] = half;
        want[j] = half;
        let mut got = r.corrected.intervals_ms.clone();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn hr_is_scale_consistent(idx in prop::collection::btree_set(0usize..5000, 4..20)) {
        let idx: Vec<usize> = idx.into_iter().collect();
        let a = PeakTrain::new(idx.clone(), 250.0).unwrap();
        let b = PeakTrain::new(idx.iter().map(|i| i * 2).collect(), 500.0).unwrap();
        let (ha, hb) = (compute_hr(&a).unwrap(), compute_hr(&b).unwrap());
        prop_assert!((ha - hb).abs() <= 1e-9 * ha);
        let (va, vb) = (compute_hrv(&rr_intervals(&a)), compute_hrv(&rr_intervals(&b)));
        prop_assert!((va.unwrap() - vb.unwrap()).abs() <= 1e-9 * (1.0 + va.unwrap()));
    }
}
