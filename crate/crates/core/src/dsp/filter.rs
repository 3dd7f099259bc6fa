//! Butterworth IIR design (bilinear transform) realized as biquad cascades.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Notch -3 dB bandwidth in Hz.
pub const NOTCH_BANDWIDTH_HZ: f64 = 2.0;
/// Prototype order of the notch; the band-stop is twice this.
const NOTCH_PROTOTYPE_ORDER: usize = 3;
/// Prototype order of the ECG band-pass.
const BANDPASS_PROTOTYPE_ORDER: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Notch,
    Bandpass,
    Lowpass,
}

/// One second-order section with `a0` normalized to 1.
///
/// `y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        num / den
    }

    /// Largest pole magnitude of the section.
    pub fn pole_radius(&self) -> f64 {
        let [a1, a2] = self.a;
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        let p1 = (-a1 + disc) / 2.0;
        let p2 = (-a1 - disc) / 2.0;
        p1.norm().max(p2.norm())
    }
}

/// An IIR filter as an ordered list of second-order sections.
///
/// Immutable after design; use [`CascadeState`] for sample-by-sample use.
#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    sections: Vec<Biquad>,
    kind: FilterKind,
    corners_hz: Vec<f64>,
    order: usize,
    fs: f64,
}

impl BiquadCascade {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    /// Design corner frequencies (center for a notch, edges for a band-pass).
    pub fn corners_hz(&self) -> &[f64] {
        &self.corners_hz
    }

    /// Overall filter order.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Causal evaluation from zero initial state.
    ///
    /// Fails on the first non-finite input sample.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut state = CascadeState::new(self);
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                if v.is_finite() {
                    Ok(state.process(self, v))
                } else {
                    Err(Error::Processing(format!("non-finite sample {v} at index {i}")))
                }
            })
            .collect()
    }

    /// Complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / self.fs;
        self.sections
            .iter()
            .map(|s| s.response(omega))
            .product()
    }
}

/// Transposed direct-form II delay line for each section of a cascade.
#[derive(Debug, Clone)]
pub struct CascadeState {
    delays: Vec<[f64; 2]>,
}

impl CascadeState {
    pub fn new(cascade: &BiquadCascade) -> Self {
        CascadeState {
            delays: vec![[0.0; 2]; cascade.sections.len()],
        }
    }

    #[inline]
    pub fn process(&mut self, cascade: &BiquadCascade, mut x: f64) -> f64 {
        for (s, d) in cascade.sections.iter().zip(self.delays.iter_mut()) {
            let y = s.b[0] * x + d[0];
            d[0] = s.b[1] * x - s.a[0] * y + d[1];
            d[1] = s.b[2] * x - s.a[1] * y;
            x = y;
        }
        x
    }

    pub fn reset(&mut self) {
        self.delays.iter_mut().for_each(|d| *d = [0.0; 2]);
    }
}

/// Sixth-order Butterworth band-stop centred on `f0` with a 2 Hz -3 dB band.
pub fn design_notch(f0: f64, fs: f64) -> Result<BiquadCascade> {
    check_fs(fs)?;
    let half_bw = NOTCH_BANDWIDTH_HZ / 2.0;
    if !(f0 > half_bw && f0 + half_bw < fs / 2.0) {
        return Err(Error::Design(format!(
            "notch centre {f0} Hz must lie inside ({half_bw}, {}) Hz at fs={fs}",
            fs / 2.0 - half_bw
        )));
    }
    // The analog centre is the prewarped f0 so the null lands exactly on f0.
    let w0 = prewarp(f0, fs);
    let bw = prewarp(f0 + half_bw, fs) - prewarp(f0 - half_bw, fs);
    let omega0 = 2.0 * PI * f0 / fs;
    let poles = butter_prototype(NOTCH_PROTOTYPE_ORDER)
        .into_iter()
        .flat_map(|p| {
            let h = (bw / 2.0) / p;
            let d = (h * h - w0 * w0).sqrt();
            [h + d, h - d]
        })
        .map(|s| bilinear(s, fs))
        .collect::<Vec<_>>();
    let zero_pair = [1.0, -2.0 * omega0.cos(), 1.0];
    build(
        poles,
        zero_pair,
        None,
        0.0,
        FilterKind::Notch,
        vec![f0],
        2 * NOTCH_PROTOTYPE_ORDER,
        fs,
    )
}

/// Butterworth band-pass from a second-order prototype (two sections).
pub fn design_bandpass(f_lo: f64, f_hi: f64, fs: f64) -> Result<BiquadCascade> {
    check_fs(fs)?;
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(Error::Design(format!(
            "band-pass corners must satisfy 0 < {f_lo} < {f_hi} < {}",
            fs / 2.0
        )));
    }
    let w1 = prewarp(f_lo, fs);
    let w2 = prewarp(f_hi, fs);
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;
    let poles = butter_prototype(BANDPASS_PROTOTYPE_ORDER)
        .into_iter()
        .flat_map(|p| {
            let h = p * (bw / 2.0);
            let d = (h * h - w0 * w0).sqrt();
            [h + d, h - d]
        })
        .map(|s| bilinear(s, fs))
        .collect::<Vec<_>>();
    // Reference frequency: the digital image of the analog centre.
    let omega_c = 2.0 * (w0 / (2.0 * fs)).atan();
    build(
        poles,
        [1.0, 0.0, -1.0],
        Some([1.0, -1.0, 0.0]),
        omega_c,
        FilterKind::Bandpass,
        vec![f_lo, f_hi],
        2 * BANDPASS_PROTOTYPE_ORDER,
        fs,
    )
}

/// Butterworth low-pass of the given order.
pub fn design_lowpass(fc: f64, order: usize, fs: f64) -> Result<BiquadCascade> {
    check_fs(fs)?;
    if order == 0 {
        return Err(Error::Design("low-pass order must be at least 1".into()));
    }
    if !(fc > 0.0 && fc < fs / 2.0) {
        return Err(Error::Design(format!(
            "low-pass cutoff {fc} Hz outside (0, {}) Hz",
            fs / 2.0
        )));
    }
    let wc = prewarp(fc, fs);
    let poles = butter_prototype(order)
        .into_iter()
        .map(|p| bilinear(p * wc, fs))
        .collect::<Vec<_>>();
    build(
        poles,
        [1.0, 2.0, 1.0],
        Some([1.0, 1.0, 0.0]),
        0.0,
        FilterKind::Lowpass,
        vec![fc],
        order,
        fs,
    )
}

fn check_fs(fs: f64) -> Result<()> {
    if fs.is_finite() && fs > 0.0 {
        Ok(())
    } else {
        Err(Error::Design(format!("sample rate {fs} must be positive")))
    }
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

/// Analog Butterworth prototype poles with unit cutoff.
fn butter_prototype(order: usize) -> Vec<Complex64> {
    let n = order as f64;
    (0..order)
        .map(|k| {
            let m = -(n - 1.0) + 2.0 * k as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * n))
        })
        .collect()
}

/// Groups digital poles into sections, attaches the zero polynomial and
/// normalizes every section to unit gain at `omega_ref`.
#[allow(clippy::too_many_arguments)]
fn build(
    poles: Vec<Complex64>,
    zero_pair: [f64; 3],
    zero_single: Option<[f64; 3]>,
    omega_ref: f64,
    kind: FilterKind,
    corners_hz: Vec<f64>,
    order: usize,
    fs: f64,
) -> Result<BiquadCascade> {
    const IMAG_EPS: f64 = 1e-12;
    let mut dens: Vec<[f64; 2]> = Vec::new();
    let mut real_poles: Vec<f64> = Vec::new();
    for p in &poles {
        if p.im > IMAG_EPS {
            dens.push([-2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= IMAG_EPS {
            real_poles.push(p.re);
        }
    }
    real_poles.sort_by(f64::total_cmp);
    let mut sections: Vec<Biquad> = dens
        .into_iter()
        .map(|a| Biquad { b: zero_pair, a })
        .collect();
    for pair in real_poles.chunks(2) {
        match *pair {
            [p1, p2] => sections.push(Biquad {
                b: zero_pair,
                a: [-(p1 + p2), p1 * p2],
            }),
            [p] => {
                let b = zero_single.ok_or_else(|| {
                    Error::Design("unpaired real pole in a band-stop design".into())
                })?;
                sections.push(Biquad { b, a: [-p, 0.0] });
            }
            _ => unreachable!(),
        }
    }
    for s in &mut sections {
        if s.pole_radius() >= 1.0 {
            return Err(Error::Design(format!(
                "unstable section (pole radius {})",
                s.pole_radius()
            )));
        }
        let g = s.response(omega_ref).norm();
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::Design("degenerate section gain".into()));
        }
        s.b.iter_mut().for_each(|b| *b /= g);
    }
    Ok(BiquadCascade {
        sections,
        kind,
        corners_hz,
        order,
        fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain_db(c: &BiquadCascade, f: f64) -> f64 {
        20.0 * c.response(f).norm().log10()
    }

    #[test]
    fn notch_layout() {
        let c = design_notch(50.0, 250.0).unwrap();
        assert_eq!(c.sections().len(), 3);
        assert_eq!(c.order(), 6);
        assert!(c.sections().iter().all(|s| s.pole_radius() < 1.0));
        assert!(gain_db(&c, 50.0) < -100.0);
        assert!((gain_db(&c, 49.0) + 3.0103).abs() < 0.5);
        assert!((gain_db(&c, 51.0) + 3.0103).abs() < 0.5);
    }

    #[test]
    fn bandpass_is_non_inverting_at_centre() {
        let c = design_bandpass(0.5, 30.0, 250.0).unwrap();
        assert_eq!(c.sections().len(), 2);
        let f_c = (0.5f64 * 30.0).sqrt();
        let h = c.response(f_c);
        // Not exactly the digital image of the analog centre, so allow a small phase.
        assert!(h.re > 0.9, "{h}");
    }

    #[test]
    fn lowpass_odd_order_has_first_order_section() {
        let c = design_lowpass(40.0, 3, 250.0).unwrap();
        assert_eq!(c.sections().len(), 2);
        assert!((c.response(0.0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn design_errors() {
        assert!(matches!(design_notch(0.0, 250.0), Err(Error::Design(_))));
        assert!(matches!(design_notch(125.0, 250.0), Err(Error::Design(_))));
        assert!(matches!(design_bandpass(30.0, 0.5, 250.0), Err(Error::Design(_))));
        assert!(matches!(design_bandpass(0.5, 130.0, 250.0), Err(Error::Design(_))));
        assert!(matches!(design_lowpass(10.0, 4, 0.0), Err(Error::Design(_))));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let c = design_bandpass(0.5, 30.0, 250.0).unwrap();
        let err = c.apply(&[0.0, 1.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("index 2"), "{err}");
    }

    #[test]
    fn streaming_state_matches_block_apply() {
        let c = design_notch(50.0, 500.0).unwrap();
        let x: Vec<f64> = (0..400).map(|i| ((i * 7919) % 113) as f64 - 56.0).collect();
        let block = c.apply(&x).unwrap();
        let mut st = CascadeState::new(&c);
        let streamed: Vec<f64> = x.iter().map(|&v| st.process(&c, v)).collect();
        assert_eq!(block, streamed);
    }
}
