use ear_ecg::nn::{conv1d, LayerKind, LayerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{assert_close, conv_case_error, conv_oracle, random_input};

#[test]
fn conv1d_matches_oracle_200_cases() {
    let err = conv_case_error(LayerKind::Conv1d, 200, 11);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn conv_transpose1d_matches_oracle_200_cases() {
    let err = conv_case_error(LayerKind::ConvTranspose1d, 200, 12);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn spec_shaped_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = (0..2 * 3 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let l = LayerSpec::conv(LayerKind::Conv1d, 2, 3, 5, 2, 2, w, vec![0.1, -0.2, 0.3]).unwrap();
    let x = random_input(&mut rng, 2, 16);
    let y = conv1d(&x, &l).unwrap();
    assert_eq!((y.channels(), y.length()), (3, 8));
    assert_close(&y, &conv_oracle(&x, &l));
}
