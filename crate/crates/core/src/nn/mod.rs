//! A small 1D convolutional inference engine.
//!
//! A [`ModelGraph`] has three parts sharing one latent representation: the
//! encoder, the reconstruction decoder (tanh head) and the R-peak classifier
//! (sigmoid head). [`QuantizedModel`] is the int8 counterpart.

pub mod bench;
mod ops;
mod quant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use ops::{activate, conv1d, conv_transpose1d, sigmoid};
pub use quant::{calibrate, QLayer, QParams, QTensor, QuantizedModel, Requant};

use crate::{Error, Result, WINDOW_LEN};

/// Encoder + classifier parameter budget (exclusive).
pub const PARAM_BUDGET: usize = 10_000;

/// A channels x length tensor, row-major (one row per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1D {
    channels: usize,
    length: usize,
    data: Vec<f32>,
}

impl Tensor1D {
    pub fn new(channels: usize, length: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * length {
            return Err(Error::Shape(format!(
                "tensor data has {} values, expected {channels} x {length}",
                data.len()
            )));
        }
        Ok(Tensor1D {
            channels,
            length,
            data,
        })
    }

    pub fn zeros(channels: usize, length: usize) -> Self {
        Tensor1D {
            channels,
            length,
            data: vec![0.0; channels * length],
        }
    }

    /// A single-channel tensor.
    pub fn from_signal(signal: &[f32]) -> Self {
        Tensor1D {
            channels: 1,
            length: signal.len(),
            data: signal.to_vec(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.length..(c + 1) * self.length]
    }

    /// Centre-crops or zero-pads every channel to `len`.
    pub fn fit_length(&self, len: usize) -> Tensor1D {
        if len == self.length {
            return self.clone();
        }
        let mut out = vec![0.0; self.channels * len];
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
        Tensor1D {
            channels: self.channels,
            length: len,
            data: out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv1d,
    ConvTranspose1d,
    Relu,
    Tanh,
    Sigmoid,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::Conv1d => 0,
            LayerKind::ConvTranspose1d => 1,
            LayerKind::Relu => 2,
            LayerKind::Tanh => 3,
            LayerKind::Sigmoid => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LayerKind::Conv1d,
            1 => LayerKind::ConvTranspose1d,
            2 => LayerKind::Relu,
            3 => LayerKind::Tanh,
            4 => LayerKind::Sigmoid,
            _ => return None,
        })
    }

    pub fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv1d | LayerKind::ConvTranspose1d)
    }
}

/// One layer. Convolutions store weights `[out][in][k]`, transposed
/// convolutions `[in][out][k]`; activations carry no weights and have
/// `kernel_size == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        let layer = LayerSpec {
            kind,
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            weights,
            bias,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn activation(kind: LayerKind, channels: usize) -> Self {
        LayerSpec {
            kind,
            in_channels: channels,
            out_channels: channels,
            kernel_size: 0,
            stride: 1,
            padding: 0,
            weights: Vec::new(),
            bias: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Shape("stride must be at least 1".into()));
        }
        if self.kind.has_weights() {
            if self.kernel_size == 0 || self.in_channels == 0 || self.out_channels == 0 {
                return Err(Error::Shape(format!(
                    "{:?} with zero-sized dimension",
                    self.kind
                )));
            }
            let expected = self.in_channels * self.out_channels * self.kernel_size;
            if self.weights.len() != expected {
                return Err(Error::Shape(format!(
                    "{:?} has {} weights, expected {expected}",
                    self.kind,
                    self.weights.len()
                )));
            }
            if self.bias.len() != self.out_channels {
                return Err(Error::Shape(format!(
                    "{:?} has {} biases, expected {}",
                    self.kind,
                    self.bias.len(),
                    self.out_channels
                )));
            }
        } else if self.in_channels != self.out_channels
            || self.kernel_size != 0
            || !self.weights.is_empty()
            || !self.bias.is_empty()
        {
            return Err(Error::Shape(format!(
                "{:?} must map channels to themselves without weights",
                self.kind
            )));
        }
        Ok(())
    }

    fn geometry(&self) -> (usize, usize, usize, usize, usize) {
        (
            self.in_channels,
            self.out_channels,
            self.kernel_size,
            self.stride,
            self.padding,
        )
    }

    pub fn output_length(&self, len: usize) -> Result<usize> {
        let (_, _, k, s, p) = self.geometry();
        match self.kind {
            LayerKind::Conv1d => {
                let span = len + 2 * p;
                if span < k {
                    return Err(Error::Shape(format!(
                        "input length {len} (+2x{p} padding) shorter than kernel {k}"
                    )));
                }
                Ok((span - k) / s + 1)
            }
            LayerKind::ConvTranspose1d => {
                if len == 0 {
                    return Err(Error::Shape("empty transposed-conv input".into()));
                }
                let full = (len - 1) * s + k;
                full.checked_sub(2 * p)
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Shape(format!("padding {p} consumes the output")))
            }
            _ => Ok(len),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Multiply-accumulates for one application on an input of length `len`.
    pub fn macs(&self, len: usize) -> Result<u64> {
        let per_tap = (self.in_channels * self.out_channels * self.kernel_size) as u64;
        Ok(match self.kind {
            LayerKind::Conv1d => per_tap * self.output_length(len)? as u64,
            LayerKind::ConvTranspose1d => per_tap * len as u64,
            _ => 0,
        })
    }

    pub fn apply(&self, x: &Tensor1D) -> Result<Tensor1D> {
        match self.kind {
            LayerKind::Conv1d => conv1d(x, self),
            LayerKind::ConvTranspose1d => conv_transpose1d(x, self),
            kind => {
                if x.channels() != self.in_channels {
                    return Err(Error::Shape(format!(
                        "{kind:?} expects {} channels, got {}",
                        self.in_channels,
                        x.channels()
                    )));
                }
                activate(x, kind)
            }
        }
    }
}

/// Applies layers in order.
pub fn forward(part: &[LayerSpec], x: &Tensor1D) -> Result<Tensor1D> {
    let mut iter = part.iter();
    let Some(first) = iter.next() else {
        return Ok(x.clone());
    };
    let mut y = first.apply(x)?;
    for layer in iter {
        y = layer.apply(&y)?;
    }
    Ok(y)
}

/// Parameter count and MACs of a layer sequence on an input shape; also
/// verifies that the shapes chain.
pub fn trace_part(part: &[LayerSpec], channels: usize, len: usize) -> Result<PartTrace> {
    let (mut c, mut l) = (channels, len);
    let mut params = 0;
    let mut macs = 0;
    for (i, layer) in part.iter().enumerate() {
        layer.validate()?;
        if layer.in_channels != c {
            return Err(Error::Shape(format!(
                "layer {i} expects {} channels but receives {c}",
                layer.in_channels
            )));
        }
        macs += layer.macs(l)?;
        l = layer.output_length(l)?;
        c = layer.out_channels;
        params += layer.param_count();
    }
    Ok(PartTrace {
        params,
        macs,
        out_channels: c,
        out_len: l,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartTrace {
    pub params: usize,
    pub macs: u64,
    pub out_channels: usize,
    pub out_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelMetadata {
    /// Encoder + classifier parameters.
    pub param_count: usize,
    pub decoder_params: usize,
    /// MACs of one encoder + classifier inference on a 500-sample window.
    pub mac_count: u64,
    pub latent_channels: usize,
    pub latent_len: usize,
}

/// Validates the three-part topology shared by the float and int8 models.
pub(crate) fn check_topology(
    encoder: &[LayerSpec],
    decoder: &[LayerSpec],
    classifier: &[LayerSpec],
) -> Result<ModelMetadata> {
    if encoder.is_empty() || classifier.is_empty() {
        return Err(Error::Shape("encoder and classifier must be non-empty".into()));
    }
    let enc = trace_part(encoder, 1, WINDOW_LEN)?;
    let cls = trace_part(classifier, enc.out_channels, enc.out_len)?;
    if cls.out_channels != 1 || classifier.last().map(|l| l.kind) != Some(LayerKind::Sigmoid) {
        return Err(Error::Shape(
            "classifier must end in a single-channel sigmoid".into(),
        ));
    }
    let dec = trace_part(decoder, enc.out_channels, enc.out_len)?;
    if !decoder.is_empty()
        && (dec.out_channels != 1 || decoder.last().map(|l| l.kind) != Some(LayerKind::Tanh))
    {
        return Err(Error::Shape(
            "decoder must end in a single-channel tanh".into(),
        ));
    }
    let param_count = enc.params + cls.params;
    if param_count >= PARAM_BUDGET {
        return Err(Error::Validation(format!(
            "{param_count} encoder + classifier parameters exceed the budget of {PARAM_BUDGET}"
        )));
    }
    Ok(ModelMetadata {
        param_count,
        decoder_params: dec.params,
        mac_count: enc.macs + cls.macs,
        latent_channels: enc.out_channels,
        latent_len: enc.out_len,
    })
}

/// Float model: encoder, decoder and classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
    classifier: Vec<LayerSpec>,
    metadata: ModelMetadata,
}

impl ModelGraph {
    /// The decoder may be empty for classifier-only deployments.
    pub fn new(
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
        classifier: Vec<LayerSpec>,
    ) -> Result<Self> {
        let metadata = check_topology(&encoder, &decoder, &classifier)?;
        Ok(ModelGraph {
            encoder,
            decoder,
            classifier,
            metadata,
        })
    }

    /// Reference topology with He-uniform weights from `seed`.
    pub fn reference(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |kind, cin: usize, cout: usize, k: usize| {
            let bound = (6.0 / (cin * k) as f32).sqrt();
            let weights = (0..cin * cout * k)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let bias = (0..cout).map(|_| rng.random_range(-0.05..0.05)).collect();
            (kind, weights, bias)
        };
        Self::build_reference(&mut init)
    }

    /// Reference topology with all weights and biases zero.
    pub fn reference_zeros() -> Self {
        Self::build_reference(&mut |kind, cin, cout, k| {
            (kind, vec![0.0; cin * cout * k], vec![0.0; cout])
        })
    }

    fn build_reference(
        init: &mut dyn FnMut(LayerKind, usize, usize, usize) -> (LayerKind, Vec<f32>, Vec<f32>),
    ) -> Self {
        use LayerKind::*;
        let mut layer = |kind, cin, cout, k, s, p| {
            let (kind, w, b) = init(kind, cin, cout, k);
            LayerSpec::conv(kind, cin, cout, k, s, p, w, b).expect("reference layer")
        };
        let relu = |c| LayerSpec::activation(Relu, c);
        let encoder = vec![
            layer(Conv1d, 1, 8, 7, 1, 3),
            relu(8),
            layer(Conv1d, 8, 16, 7, 1, 3),
            relu(16),
            layer(Conv1d, 16, 16, 5, 2, 2),
            relu(16),
            layer(Conv1d, 16, 16, 7, 1, 3),
            relu(16),
        ];
        let mut head = |act| {
            vec![
                layer(ConvTranspose1d, 16, 16, 4, 2, 1),
                relu(16),
                layer(Conv1d, 16, 16, 7, 1, 3),
                relu(16),
                layer(Conv1d, 16, 16, 5, 1, 2),
                relu(16),
                layer(Conv1d, 16, 1, 7, 1, 3),
                LayerSpec::activation(act, 1),
            ]
        };
        let classifier = head(Sigmoid);
        let decoder = head(Tanh);
        ModelGraph::new(encoder, decoder, classifier).expect("reference topology")
    }

    pub fn encoder(&self) -> &[LayerSpec] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[LayerSpec] {
        &self.decoder
    }

    pub fn classifier(&self) -> &[LayerSpec] {
        &self.classifier
    }

    pub fn metadata(&self) -> ModelMetadata {
        self.metadata
    }

    fn check_window(x: &Tensor1D) -> Result<()> {
        if x.channels() != 1 || x.length() != WINDOW_LEN {
            return Err(Error::Shape(format!(
                "model input must be 1 x {WINDOW_LEN}, got {} x {}",
                x.channels(),
                x.length()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor1D) -> Result<Tensor1D> {
        Self::check_window(x)?;
        forward(&self.encoder, x)
    }

    pub fn classify_latent(&self, latent: &Tensor1D) -> Result<Tensor1D> {
        Ok(forward(&self.classifier, latent)?.fit_length(WINDOW_LEN))
    }

    pub fn decode_latent(&self, latent: &Tensor1D) -> Result<Tensor1D> {
        if self.decoder.is_empty() {
            return Err(Error::Configuration("model has no decoder".into()));
        }
        Ok(forward(&self.decoder, latent)?.fit_length(WINDOW_LEN))
    }

    /// R-peak probabilities for one window.
    pub fn classify(&self, x: &Tensor1D) -> Result<Tensor1D> {
        self.classify_latent(&self.encode(x)?)
    }

    /// Reconstructed (tanh-scaled) arm-ECG for one window.
    pub fn reconstruct(&self, x: &Tensor1D) -> Result<Tensor1D> {
        self.decode_latent(&self.encode(x)?)
    }
}

/// `(parameters, MACs)` of the classifier path.
pub fn count_params_and_macs(model: &ModelGraph) -> (usize, u64) {
    let m = model.metadata();
    (m.param_count, m.mac_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_budgets() {
        let m = ModelGraph::reference(1);
        let (params, macs) = count_params_and_macs(&m);
        assert_eq!(params, 8337);
        assert_eq!(macs, 3_092_000);
        assert!(params < PARAM_BUDGET);
        assert!((2_800_000..=4_200_000).contains(&macs));
        assert_eq!(m.metadata().latent_channels, 16);
        assert_eq!(m.metadata().latent_len, 250);
    }

    #[test]
    fn single_conv_param_count() {
        let l = LayerSpec::conv(LayerKind::Conv1d, 1, 8, 7, 1, 3, vec![0.0; 56], vec![0.0; 8])
            .unwrap();
        assert_eq!(l.param_count(), 64);
    }

    #[test]
    fn zero_model_outputs_half() {
        let m = ModelGraph::reference_zeros();
        let x = Tensor1D::zeros(1, WINDOW_LEN);
        let p = m.classify(&x).unwrap();
        assert_eq!((p.channels(), p.length()), (1, WINDOW_LEN));
        assert!(p.data().iter().all(|&v| v == 0.5));
        let r = m.reconstruct(&x).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heads_stay_in_range() {
        let m = ModelGraph::reference(7);
        let x = Tensor1D::from_signal(
            &(0..WINDOW_LEN)
                .map(|i| (i as f32 * 0.37).sin() * 3.0)
                .collect::<Vec<_>>(),
        );
        let p = m.classify(&x).unwrap();
        assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let r = m.reconstruct(&x).unwrap();
        assert!(r.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let l = LayerSpec::conv(LayerKind::Conv1d, 2, 1, 1, 1, 0, vec![1.0; 2], vec![0.0])
            .unwrap();
        let x = Tensor1D::zeros(3, 10);
        assert!(matches!(conv1d(&x, &l), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_kernels() {
        let x = Tensor1D::from_signal(&[1.0, -2.0, 3.5, 0.25]);
        let c = LayerSpec::conv(LayerKind::Conv1d, 1, 1, 1, 1, 0, vec![1.0], vec![0.0]).unwrap();
        assert_eq!(conv1d(&x, &c).unwrap(), x);
        let t = LayerSpec::conv(LayerKind::ConvTranspose1d, 1, 1, 1, 1, 0, vec![1.0], vec![0.0])
            .unwrap();
        assert_eq!(conv_transpose1d(&x, &t).unwrap(), x);
    }

    #[test]
    fn transposed_stride_two_doubles_length() {
        let t = LayerSpec::conv(
            LayerKind::ConvTranspose1d,
            1,
            1,
            4,
            2,
            1,
            vec![0.0; 4],
            vec![0.0],
        )
        .unwrap();
        assert_eq!(t.output_length(250).unwrap(), 500);
    }

    #[test]
    fn fit_length_crops_and_pads_centrally() {
        let x = Tensor1D::from_signal(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(x.fit_length(4).data(), &[2.0, 3.0, 4.0, 5.0]);
        assert_eq!(
            x.fit_length(8).data(),
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0]
        );
    }

    #[test]
    fn topology_rejects_budget_and_heads() {
        let m = ModelGraph::reference(3);
        let mut cls = m.classifier().to_vec();
        cls.pop();
        assert!(ModelGraph::new(m.encoder().to_vec(), vec![], cls).is_err());

        let big = LayerSpec::conv(
            LayerKind::Conv1d,
            16,
            16,
            41,
            1,
            20,
            vec![0.0; 16 * 16 * 41],
            vec![0.0; 16],
        )
        .unwrap();
        let mut enc = m.encoder().to_vec();
        enc.push(big);
        enc.push(LayerSpec::activation(LayerKind::Relu, 16));
        assert!(matches!(
            ModelGraph::new(enc, vec![], m.classifier().to_vec()),
            Err(Error::Validation(_))
        ));
    }
}
