//! Float kernels.
//!
//! Strided convolutions are evaluated in polyphase form: the padded input
//! (or the uncropped transposed-conv output) is split into `stride` phases
//! so every inner loop is a contiguous multiply-add over the output length.

use super::{LayerKind, LayerSpec, Tensor1D};
use crate::{Error, Result};

#[inline]
fn axpy(out: &mut [f32], w: f32, src: &[f32]) {
    for (o, &v) in out.iter_mut().zip(src) {
        *o += w * v;
    }
}

fn check_input(x: &Tensor1D, layer: &LayerSpec, kind: LayerKind) -> Result<()> {
    if layer.kind != kind {
        return Err(Error::Shape(format!(
            "expected a {kind:?} layer, got {:?}",
            layer.kind
        )));
    }
    if x.channels() != layer.in_channels {
        return Err(Error::Shape(format!(
            "{kind:?} expects {} input channels, got {}",
            layer.in_channels,
            x.channels()
        )));
    }
    Ok(())
}

/// Cross-correlation with stride and symmetric zero padding.
pub fn conv1d(x: &Tensor1D, layer: &LayerSpec) -> Result<Tensor1D> {
    check_input(x, layer, LayerKind::Conv1d)?;
    let (cin, cout, k, s, p) = layer.geometry();
    let l = x.length();
    let lout = layer.output_length(l)?;

    // phases[c][r][j] = padded_x[c][j * s + r]
    let plen = lout + (k - 1) / s;
    let mut phases = vec![0.0f32; cin * s * plen];
    for c in 0..cin {
        let row = x.channel(c);
        let base = c * s * plen;
        for idx in 0..plen * s {
            let Some(pos) = idx.checked_sub(p) else {
                continue;
            };
            if pos < l {
                phases[base + (idx % s) * plen + idx / s] = row[pos];
            }
        }
    }

    let mut out = vec![0.0f32; cout * lout];
    for (oc, row) in out.chunks_exact_mut(lout).enumerate() {
        row.fill(layer.bias[oc]);
        for ic in 0..cin {
            let w = &layer.weights[(oc * cin + ic) * k..][..k];
            let base = ic * s * plen;
            for (kk, &wv) in w.iter().enumerate() {
                let (q, r) = (kk / s, kk % s);
                let start = base + r * plen + q;
                axpy(row, wv, &phases[start..start + lout]);
            }
        }
    }
    Tensor1D::new(cout, lout, out)
}

/// Transposed convolution (the adjoint of [`conv1d`]); weights are laid out
/// `[in][out][k]`.
pub fn conv_transpose1d(x: &Tensor1D, layer: &LayerSpec) -> Result<Tensor1D> {
    check_input(x, layer, LayerKind::ConvTranspose1d)?;
    let (cin, cout, k, s, p) = layer.geometry();
    let l = x.length();
    let lout = layer.output_length(l)?;

    // Uncropped output index f = i * s + kk lives in phase f % s at f / s.
    let plen = l + (k - 1) / s;
    let mut phases = vec![0.0f32; s * plen];
    let mut out = vec![0.0f32; cout * lout];
    for (oc, row) in out.chunks_exact_mut(lout).enumerate() {
        phases.fill(0.0);
        for ic in 0..cin {
            let src = x.channel(ic);
            let w = &layer.weights[(ic * cout + oc) * k..][..k];
            for (kk, &wv) in w.iter().enumerate() {
                let (q, r) = (kk / s, kk % s);
                let start = r * plen + q;
                axpy(&mut phases[start..start + l], wv, src);
            }
        }
        let b = layer.bias[oc];
        for (t, o) in row.iter_mut().enumerate() {
            let f = t + p;
            *o = b + phases[(f % s) * plen + f / s];
        }
    }
    Tensor1D::new(cout, lout, out)
}

pub fn activate(x: &Tensor1D, kind: LayerKind) -> Result<Tensor1D> {
    let f: fn(f32) -> f32 = match kind {
        LayerKind::Relu => |v| v.max(0.0),
        LayerKind::Tanh => f32::tanh,
        LayerKind::Sigmoid => sigmoid,
        other => {
            return Err(Error::Shape(format!("{other:?} is not an activation")));
        }
    };
    Tensor1D::new(
        x.channels(),
        x.length(),
        x.data().iter().map(|&v| f(v)).collect(),
    )
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}
