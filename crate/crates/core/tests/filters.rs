use ear_ecg::dsp::{
    design_bandpass, design_lowpass, design_notch, filter_apply, resample_to, CascadeState,
};
use proptest::prelude::*;

mod common;
use common::{corner, df1, gain_db};

#[test]
fn notch_rejects_mains() {
    for fs in [250.0, 500.0, 1000.0] {
        let c = design_notch(50.0, fs).unwrap();
        assert!(gain_db(&c, 50.0) <= -40.0, "fs {fs}: {}", gain_db(&c, 50.0));
        assert!(gain_db(&c, 10.0).abs() <= 0.5);
    }
    assert!(design_notch(0.0, 250.0).is_err());
}

#[test]
fn bandpass_corners_and_levels() {
    for fs in [250.0, 500.0] {
        let c = design_bandpass(0.5, 30.0, fs).unwrap();
        assert!(gain_db(&c, 1e-6) <= -20.0);
        assert!(gain_db(&c, 10.0).abs() <= 1.0);
        let lo = corner(&c, 0.05, 5.0);
        let hi = corner(&c, 10.0, 0.49 * fs);
        assert!((lo - 0.5).abs() / 0.5 <= 0.05, "low corner {lo}");
        assert!((hi - 30.0).abs() / 30.0 <= 0.05, "high corner {hi}");
    }
    assert!(design_bandpass(30.0, 0.5, 250.0).is_err());
}

#[test]
fn impulse_matches_difference_equation() {
    let c = design_bandpass(0.5, 30.0, 250.0).unwrap();
    let mut x = vec![0.0; 400];
    x[0] = 1.0;
    let got = filter_apply(&c, &x).unwrap();
    for (a, b) in got.iter().zip(df1(&c, &x)) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(filter_apply(&c, &[0.0; 64]).unwrap(), vec![0.0; 64]);
}

#[test]
fn streaming_state_matches_block() {
    let c = design_lowpass(40.0, 6, 500.0).unwrap();
    let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0).collect();
    let block = filter_apply(&c, &x).unwrap();
    let mut st = CascadeState::new(&c);
    for (v, b) in x.iter().zip(&block) {
        assert!((st.process(&c, *v) - b).abs() < 1e-12);
    }
}

#[test]
fn resampling_examples() {
    let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.1).sin()).collect();
    assert_eq!(resample_to(&x, 250.0, 250.0).unwrap(), x);
    assert!(resample_to(&x, 441.0, 250.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn filtering_is_linear(
        x in prop::collection::vec(-100.0f64..100.0, 1..400),
        y_seed in any::<u64>(),
        alpha in -10.0f64..10.0,
        beta in -10.0f64..10.0,
    ) {
        let y: Vec<f64> = (0..x.len())
            .map(|i| ((y_seed.wrapping_mul(i as u64 + 1) % 2001) as f64 - 1000.0) / 10.0)
            .collect();
        for c in [design_notch(50.0, 250.0).unwrap(), design_bandpass(0.5, 30.0, 250.0).unwrap()] {
            let fx = filter_apply(&c, &x).unwrap();
            let fy = filter_apply(&c, &y).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let fm = filter_apply(&c, &mix).unwrap();
            for i in 0..x.len() {
                let expect = alpha * fx[i] + beta * fy[i];
                let scale = 1.0 + expect.abs();
                prop_assert!((fm[i] - expect).abs() <= 1e-9 * scale);
            }
        }
    }
}
