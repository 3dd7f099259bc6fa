//! Int8 post-training quantization and integer execution.
//!
//! Weights are symmetric per output channel, activations affine per tensor.
//! Convolutions accumulate `w_q * (x_q - zp)` in `i32` and requantize with a
//! fixed-point multiplier, rounding half away from zero and saturating to
//! int8. Activation layers are 256-entry lookup tables.

use super::{check_topology, LayerKind, LayerSpec, ModelGraph, ModelMetadata, Tensor1D};
use crate::{Error, Result, WINDOW_LEN};

/// Affine int8 quantization: `real = (q - zero_point) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QParams {
    pub scale: f32,
    pub zero_point: i32,
}

impl QParams {
    /// Parameters covering `[min, max]`, widened to include zero.
    pub fn from_range(min: f32, max: f32) -> Self {
        let (min, max) = (min.min(0.0), max.max(0.0));
        let span = max - min;
        if !span.is_finite() || span <= 1e-12 {
            return QParams {
                scale: 1.0,
                zero_point: 0,
            };
        }
        let scale = span / 255.0;
        let zero_point = round_half_away(-128.0 - f64::from(min) / f64::from(scale))
            .clamp(-128, 127) as i32;
        QParams { scale, zero_point }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Validation(format!(
                "quantization scale {} must be positive",
                self.scale
            )));
        }
        if !(-128..=127).contains(&self.zero_point) {
            return Err(Error::Validation(format!(
                "zero point {} outside int8",
                self.zero_point
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn quantize(&self, v: f32) -> i8 {
        let q = round_half_away(f64::from(v) / f64::from(self.scale)) + i64::from(self.zero_point);
        q.clamp(-128, 127) as i8
    }

    #[inline]
    pub fn dequantize(&self, q: i8) -> f32 {
        ((i32::from(q) - self.zero_point) as f32) * self.scale
    }
}

#[inline]
fn round_half_away(v: f64) -> i64 {
    // f64::round rounds half away from zero; saturates on overflow.
    v.round() as i64
}

/// Fixed-point multiplier `multiplier * 2^-shift`, `multiplier` in `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requant {
    pub multiplier: i32,
    pub shift: u32,
}

impl Requant {
    pub fn from_real(m: f64) -> Result<Self> {
        if m == 0.0 {
            return Ok(Requant {
                multiplier: 0,
                shift: 31,
            });
        }
        if !(m.is_finite() && m > 0.0 && m.is_normal()) {
            return Err(Error::Validation(format!("requantization scale {m} is not usable")));
        }
        // Exact frexp via the bit pattern: m = mant * 2^exp, mant in [0.5, 1).
        let bits = m.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i32 - 1022;
        let mant = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
        let mut q = (mant * (1u64 << 31) as f64).round() as i64;
        let mut exp = exp;
        if q == 1 << 31 {
            q /= 2;
            exp += 1;
        }
        let shift = 31 - exp;
        if !(1..=94).contains(&shift) {
            return Err(Error::Validation(format!(
                "requantization scale {m} outside the fixed-point range"
            )));
        }
        Ok(Requant {
            multiplier: q as i32,
            shift: shift as u32,
        })
    }

    /// `round_half_away(acc * multiplier / 2^shift)`.
    #[inline]
    pub fn apply(&self, acc: i32) -> i64 {
        let prod = i128::from(acc) * i128::from(self.multiplier);
        let half = 1i128 << (self.shift - 1);
        let mag = (prod.abs() + half) >> self.shift;
        let r = if prod < 0 { -mag } else { mag };
        r as i64
    }
}

/// Int8 tensor with its quantization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    pub channels: usize,
    pub length: usize,
    pub data: Vec<i8>,
    pub params: QParams,
}

impl QTensor {
    pub fn quantize(x: &Tensor1D, params: QParams) -> Self {
        QTensor {
            channels: x.channels(),
            length: x.length(),
            data: x.data().iter().map(|&v| params.quantize(v)).collect(),
            params,
        }
    }

    pub fn dequantize(&self) -> Tensor1D {
        Tensor1D::new(
            self.channels,
            self.length,
            self.data.iter().map(|&q| self.params.dequantize(q)).collect(),
        )
        .expect("consistent shape")
    }

    fn channel(&self, c: usize) -> &[i8] {
        &self.data[c * self.length..(c + 1) * self.length]
    }

    /// Centre-crops or pads (with the zero point) to `len`.
    fn fit_length(self, len: usize) -> QTensor {
        if len == self.length {
            return self;
        }
        let zp = self.params.zero_point as i8;
        let mut out = vec![zp; self.channels * len];
        for c in 0..self.channels {
            let src = self.channel(c);
            let dst = &mut out[c * len..(c + 1) * len];
            if self.length > len {
                let off = (self.length - len) / 2;
                dst.copy_from_slice(&src[off..off + len]);
            } else {
                let off = (len - self.length) / 2;
                dst[off..off + self.length].copy_from_slice(src);
            }
        }
        QTensor {
            channels: self.channels,
            length: len,
            data: out,
            params: self.params,
        }
    }
}

/// One quantized layer. Stored fields are what the EPQ1 file carries;
/// `input`, `requant` and `lut` are derived when the model is assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct QLayer {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight_scales: Vec<f32>,
    pub output: QParams,
    pub weights: Vec<i8>,
    pub bias: Vec<i32>,
    input: QParams,
    requant: Vec<Requant>,
    lut: Option<Box<[i8; 256]>>,
}

impl QLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        weight_scales: Vec<f32>,
        output: QParams,
        weights: Vec<i8>,
        bias: Vec<i32>,
    ) -> Self {
        QLayer {
            kind,
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            weight_scales,
            output,
            weights,
            bias,
            input: output,
            requant: Vec::new(),
            lut: None,
        }
    }

    /// Float layer with the same geometry and dequantized weights/biases.
    pub fn dequantized(&self) -> LayerSpec {
        let weights = if self.kind.has_weights() {
            self.weights
                .iter()
                .enumerate()
                .map(|(i, &q)| f32::from(q) * self.weight_scales[self.weight_channel(i)])
                .collect()
        } else {
            Vec::new()
        };
        let bias = self
            .bias
            .iter()
            .zip(&self.weight_scales)
            .map(|(&b, &ws)| (f64::from(b) * f64::from(ws) * f64::from(self.input.scale)) as f32)
            .collect();
        LayerSpec {
            kind: self.kind,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel_size: self.kernel_size,
            stride: self.stride,
            padding: self.padding,
            weights,
            bias,
        }
    }

    /// Output channel owning flat weight index `i`.
    fn weight_channel(&self, i: usize) -> usize {
        let k = self.kernel_size;
        match self.kind {
            LayerKind::ConvTranspose1d => (i / k) % self.out_channels,
            _ => i / (k * self.in_channels),
        }
    }

    pub fn input_params(&self) -> QParams {
        self.input
    }

    fn shape_only(&self) -> LayerSpec {
        LayerSpec {
            kind: self.kind,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel_size: self.kernel_size,
            stride: self.stride,
            padding: self.padding,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn prepare(&mut self, input: QParams) -> Result<()> {
        self.input = input;
        self.output.validate()?;
        if self.kind.has_weights() {
            if self.weight_scales.len() != self.out_channels {
                return Err(Error::Validation(format!(
                    "{} weight scales for {} output channels",
                    self.weight_scales.len(),
                    self.out_channels
                )));
            }
            self.requant = self
                .weight_scales
                .iter()
                .map(|&ws| {
                    if !(ws.is_finite() && ws > 0.0) {
                        return Err(Error::Validation(format!("weight scale {ws} must be positive")));
                    }
                    Requant::from_real(
                        f64::from(ws) * f64::from(input.scale) / f64::from(self.output.scale),
                    )
                })
                .collect::<Result<_>>()?;
            self.lut = None;
        } else {
            if !self.weight_scales.is_empty() {
                return Err(Error::Validation("activation layer with weight scales".into()));
            }
            let f: fn(f32) -> f32 = match self.kind {
                LayerKind::Relu => |v| v.max(0.0),
                LayerKind::Tanh => f32::tanh,
                _ => super::sigmoid,
            };
            let mut lut = Box::new([0i8; 256]);
            for (i, slot) in lut.iter_mut().enumerate() {
                let q = i as i32 - 128;
                let real = ((q - input.zero_point) as f32) * input.scale;
                *slot = self.output.quantize(f(real));
            }
            self.lut = Some(lut);
            self.requant.clear();
        }
        Ok(())
    }

    fn execute(&self, x: &QTensor, macs: &mut u64) -> Result<QTensor> {
        if x.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "{:?} expects {} channels, got {}",
                self.kind, self.in_channels, x.channels
            )));
        }
        if x.params != self.input {
            return Err(Error::Argument(format!(
                "input quantized with {:?}, layer expects {:?}",
                x.params, self.input
            )));
        }
        match self.kind {
            LayerKind::Conv1d => self.conv(x, macs),
            LayerKind::ConvTranspose1d => self.conv_transpose(x, macs),
            _ => {
                let lut = self.lut.as_ref().expect("prepared activation");
                Ok(QTensor {
                    channels: x.channels,
                    length: x.length,
                    data: x.data.iter().map(|&q| lut[(i32::from(q) + 128) as usize]).collect(),
                    params: self.output,
                })
            }
        }
    }

    #[inline]
    fn finish(&self, oc: usize, acc: i32) -> i8 {
        let v = self.requant[oc].apply(acc) + i64::from(self.output.zero_point);
        v.clamp(-128, 127) as i8
    }

    fn conv(&self, x: &QTensor, macs: &mut u64) -> Result<QTensor> {
        let (cin, cout, k, s, p) = (
            self.in_channels,
            self.out_channels,
            self.kernel_size,
            self.stride,
            self.padding,
        );
        let l = x.length;
        let lout = self.shape_only().output_length(l)?;
        let zp = self.input.zero_point;
        let plen = lout + (k - 1) / s;
        // Zero-point-centred, zero-padded input in polyphase layout.
        let mut phases = vec![0i32; cin * s * plen];
        for c in 0..cin {
            let row = x.channel(c);
            let base = c * s * plen;
            for idx in 0..plen * s {
                let Some(pos) = idx.checked_sub(p) else {
                    continue;
                };
                if pos < l {
                    phases[base + (idx % s) * plen + idx / s] = i32::from(row[pos]) - zp;
                }
            }
        }
        let mut acc = vec![0i32; lout];
        let mut out = vec![0i8; cout * lout];
        for oc in 0..cout {
            acc.fill(self.bias[oc]);
            for ic in 0..cin {
                let w = &self.weights[(oc * cin + ic) * k..][..k];
                let base = ic * s * plen;
                for (kk, &wv) in w.iter().enumerate() {
                    let start = base + (kk % s) * plen + kk / s;
                    let wv = i32::from(wv);
                    for (a, &v) in acc.iter_mut().zip(&phases[start..start + lout]) {
                        *a += wv * v;
                    }
                }
            }
            for (o, &a) in out[oc * lout..(oc + 1) * lout].iter_mut().zip(&acc) {
                *o = self.finish(oc, a);
            }
        }
        *macs += (cin * cout * k * lout) as u64;
        Ok(QTensor {
            channels: cout,
            length: lout,
            data: out,
            params: self.output,
        })
    }

    fn conv_transpose(&self, x: &QTensor, macs: &mut u64) -> Result<QTensor> {
        let (cin, cout, k, s, p) = (
            self.in_channels,
            self.out_channels,
            self.kernel_size,
            self.stride,
            self.padding,
        );
        let l = x.length;
        let lout = self.shape_only().output_length(l)?;
        let zp = self.input.zero_point;
        let centred: Vec<i32> = x.data.iter().map(|&q| i32::from(q) - zp).collect();
        let plen = l + (k - 1) / s;
        let mut phases = vec![0i32; s * plen];
        let mut out = vec![0i8; cout * lout];
        for oc in 0..cout {
            phases.fill(0);
            for ic in 0..cin {
                let src = &centred[ic * l..(ic + 1) * l];
                let w = &self.weights[(ic * cout + oc) * k..][..k];
                for (kk, &wv) in w.iter().enumerate() {
                    let start = (kk % s) * plen + kk / s;
                    let wv = i32::from(wv);
                    for (a, &v) in phases[start..start + l].iter_mut().zip(src) {
                        *a += wv * v;
                    }
                }
            }
            let b = self.bias[oc];
            for (t, o) in out[oc * lout..(oc + 1) * lout].iter_mut().enumerate() {
                let f = t + p;
                *o = self.finish(oc, b + phases[(f % s) * plen + f / s]);
            }
        }
        *macs += (cin * cout * k * l) as u64;
        Ok(QTensor {
            channels: cout,
            length: lout,
            data: out,
            params: self.output,
        })
    }
}

/// Int8 model with the same three-part topology as [`ModelGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    input: QParams,
    encoder: Vec<QLayer>,
    decoder: Vec<QLayer>,
    classifier: Vec<QLayer>,
    metadata: ModelMetadata,
}

impl QuantizedModel {
    /// Assembles a model, checking topology and budgets and deriving the
    /// per-layer requantization state.
    pub fn new(
        input: QParams,
        mut encoder: Vec<QLayer>,
        mut decoder: Vec<QLayer>,
        mut classifier: Vec<QLayer>,
    ) -> Result<Self> {
        input.validate()?;
        let shapes = |part: &[QLayer]| part.iter().map(QLayer::shape_only).collect::<Vec<_>>();
        for (name, part) in [("encoder", &encoder), ("decoder", &decoder), ("classifier", &classifier)] {
            for (i, l) in part.iter().enumerate() {
                let n_w = if l.kind.has_weights() {
                    l.in_channels * l.out_channels * l.kernel_size
                } else {
                    0
                };
                let n_b = if l.kind.has_weights() { l.out_channels } else { 0 };
                if l.weights.len() != n_w || l.bias.len() != n_b {
                    return Err(Error::Shape(format!(
                        "{name} layer {i}: {} weights / {} biases, expected {n_w} / {n_b}",
                        l.weights.len(),
                        l.bias.len()
                    )));
                }
            }
        }
        let metadata = check_topology(&shapes(&encoder), &shapes(&decoder), &shapes(&classifier))?;
        let mut prev = input;
        for l in &mut encoder {
            l.prepare(prev)?;
            prev = l.output;
        }
        let latent = prev;
        for part in [&mut decoder, &mut classifier] {
            let mut prev = latent;
            for l in part.iter_mut() {
                l.prepare(prev)?;
                prev = l.output;
            }
        }
        Ok(QuantizedModel {
            input,
            encoder,
            decoder,
            classifier,
            metadata,
        })
    }

    pub fn input_params(&self) -> QParams {
        self.input
    }

    pub fn encoder(&self) -> &[QLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[QLayer] {
        &self.decoder
    }

    pub fn classifier(&self) -> &[QLayer] {
        &self.classifier
    }

    pub fn metadata(&self) -> ModelMetadata {
        self.metadata
    }

    pub fn quantize_input(&self, x: &Tensor1D) -> QTensor {
        QTensor::quantize(x, self.input)
    }

    fn run(part: &[QLayer], x: QTensor, macs: &mut u64) -> Result<QTensor> {
        part.iter().try_fold(x, |t, l| l.execute(&t, macs))
    }

    pub fn encode(&self, x: &QTensor, macs: &mut u64) -> Result<QTensor> {
        if x.channels != 1 || x.length != WINDOW_LEN {
            return Err(Error::Shape(format!(
                "model input must be 1 x {WINDOW_LEN}, got {} x {}",
                x.channels, x.length
            )));
        }
        if x.params != self.input {
            return Err(Error::Argument(format!(
                "input quantized with {:?}, model expects {:?}",
                x.params, self.input
            )));
        }
        Self::run(&self.encoder, x.clone(), macs)
    }

    /// Integer classifier path; returns dequantized probabilities and the
    /// MACs executed.
    pub fn classify_counted(&self, x: &QTensor) -> Result<(Tensor1D, u64)> {
        let mut macs = 0;
        let latent = self.encode(x, &mut macs)?;
        let out = Self::run(&self.classifier, latent, &mut macs)?.fit_length(WINDOW_LEN);
        Ok((out.dequantize(), macs))
    }

    pub fn classify(&self, x: &QTensor) -> Result<Tensor1D> {
        self.classify_counted(x).map(|(t, _)| t)
    }

    pub fn reconstruct(&self, x: &QTensor) -> Result<Tensor1D> {
        if self.decoder.is_empty() {
            return Err(Error::Configuration("model has no decoder".into()));
        }
        let mut macs = 0;
        let latent = self.encode(x, &mut macs)?;
        Ok(Self::run(&self.decoder, latent, &mut macs)?
            .fit_length(WINDOW_LEN)
            .dequantize())
    }

    /// Float model carrying the dequantized weights.
    pub fn dequantized(&self) -> Result<ModelGraph> {
        let deq = |part: &[QLayer]| part.iter().map(QLayer::dequantized).collect();
        ModelGraph::new(deq(&self.encoder), deq(&self.decoder), deq(&self.classifier))
    }
}

/// Running min/max of every layer output.
struct RangeTracker {
    ranges: Vec<(f32, f32)>,
}

impl RangeTracker {
    fn new(n: usize) -> Self {
        RangeTracker {
            ranges: vec![(f32::INFINITY, f32::NEG_INFINITY); n],
        }
    }

    fn observe(&mut self, i: usize, t: &Tensor1D) {
        let r = &mut self.ranges[i];
        for &v in t.data() {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
}

fn observe_part(
    part: &[LayerSpec],
    x: &Tensor1D,
    tracker: &mut RangeTracker,
) -> Result<Tensor1D> {
    let mut y = x.clone();
    for (i, layer) in part.iter().enumerate() {
        y = layer.apply(&y)?;
        tracker.observe(i, &y);
    }
    Ok(y)
}

fn quantize_part(
    part: &[LayerSpec],
    input: QParams,
    ranges: &[(f32, f32)],
) -> Result<Vec<QLayer>> {
    let mut out = Vec::with_capacity(part.len());
    let mut prev = input;
    for (i, layer) in part.iter().enumerate() {
        let next_is_relu = part.get(i + 1).map(|l| l.kind) == Some(LayerKind::Relu);
        let output = match layer.kind {
            // Post-ReLU range: the saturating cast then performs the ReLU.
            _ if layer.kind.has_weights() && next_is_relu => {
                QParams::from_range(0.0, ranges[i + 1].1)
            }
            LayerKind::Relu => prev,
            LayerKind::Sigmoid => QParams::from_range(0.0, 1.0),
            LayerKind::Tanh => QParams::from_range(-1.0, 1.0),
            _ => QParams::from_range(ranges[i].0, ranges[i].1),
        };
        let q = if layer.kind.has_weights() {
            quantize_weights(layer, prev, output)
        } else {
            QLayer::new(
                layer.kind,
                layer.in_channels,
                layer.out_channels,
                0,
                layer.stride,
                0,
                Vec::new(),
                output,
                Vec::new(),
                Vec::new(),
            )
        };
        out.push(q);
        prev = output;
    }
    Ok(out)
}

fn quantize_weights(layer: &LayerSpec, input: QParams, output: QParams) -> QLayer {
    let (cin, cout, k) = (layer.in_channels, layer.out_channels, layer.kernel_size);
    let channel_of = |i: usize| match layer.kind {
        LayerKind::ConvTranspose1d => (i / k) % cout,
        _ => i / (k * cin),
    };
    let mut max_abs = vec![0.0f32; cout];
    for (i, &w) in layer.weights.iter().enumerate() {
        let c = channel_of(i);
        max_abs[c] = max_abs[c].max(w.abs());
    }
    let scales: Vec<f32> = max_abs
        .iter()
        .map(|&m| if m > 0.0 { m / 127.0 } else { 1.0 })
        .collect();
    let weights = layer
        .weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            round_half_away(f64::from(w) / f64::from(scales[channel_of(i)])).clamp(-127, 127) as i8
        })
        .collect();
    let bias = layer
        .bias
        .iter()
        .zip(&scales)
        .map(|(&b, &ws)| {
            round_half_away(f64::from(b) / (f64::from(ws) * f64::from(input.scale)))
                .clamp(i64::from(i32::MIN), i64::from(i32::MAX)) as i32
        })
        .collect();
    QLayer::new(
        layer.kind,
        cin,
        cout,
        k,
        layer.stride,
        layer.padding,
        scales,
        output,
        weights,
        bias,
    )
}

/// Post-training quantization from a set of 1 x 500 calibration windows.
pub fn calibrate(model: &ModelGraph, calib: &[Tensor1D]) -> Result<QuantizedModel> {
    if calib.is_empty() {
        return Err(Error::Argument("calibration set is empty".into()));
    }
    let mut enc = RangeTracker::new(model.encoder().len());
    let mut dec = RangeTracker::new(model.decoder().len());
    let mut cls = RangeTracker::new(model.classifier().len());
    let (mut in_min, mut in_max) = (f32::INFINITY, f32::NEG_INFINITY);
    for x in calib {
        ModelGraph::check_window(x)?;
        for &v in x.data() {
            in_min = in_min.min(v);
            in_max = in_max.max(v);
        }
        let latent = observe_part(model.encoder(), x, &mut enc)?;
        observe_part(model.decoder(), &latent, &mut dec)?;
        observe_part(model.classifier(), &latent, &mut cls)?;
    }
    let input = QParams::from_range(in_min, in_max);
    let encoder = quantize_part(model.encoder(), input, &enc.ranges)?;
    let latent = encoder.last().map_or(input, |l| l.output);
    let decoder = quantize_part(model.decoder(), latent, &dec.ranges)?;
    let classifier = quantize_part(model.classifier(), latent, &cls.ranges)?;
    QuantizedModel::new(input, encoder, decoder, classifier)
}
