//! Binary weight files, little-endian.
//!
//! ```text
//! EPW1: "EPW1" u32:version, then for encoder, decoder, classifier:
//!       u32:n_layers, per layer
//!       u8:kind u32:in u32:out u32:k u32:stride u32:pad f32[w] f32[b]
//! EPQ1: "EPQ1" u32:version f32:input_scale i32:input_zp, then per part:
//!       u32:n_layers, per layer
//!       u8:kind u32:in u32:out u32:k u32:stride u32:pad
//!       f32[out]:weight_scales (weighted layers only)
//!       f32:act_scale i32:act_zp
//!       i8[w] i32[b]               (weighted layers only)
//! ```

use std::path::Path;

use crate::nn::{LayerKind, LayerSpec, ModelGraph, QLayer, QParams, QuantizedModel};
use crate::{Error, Result};

pub const EPW_MAGIC: &[u8; 4] = b"EPW1";
pub const EPQ_MAGIC: &[u8; 4] = b"EPQ1";
pub const FORMAT_VERSION: u32 = 1;

/// Largest channel count / kernel / stride / padding accepted on load.
const MAX_DIM: u32 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedModel {
    Float(ModelGraph),
    Quantized(QuantizedModel),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn header(&mut self, kind: LayerKind, dims: [usize; 5]) {
        self.u8(kind.code());
        for d in dims {
            self.u32(d as u32);
        }
    }
}

pub fn model_to_bytes(model: &ModelGraph) -> Vec<u8> {
    let mut w = Writer(EPW_MAGIC.to_vec());
    w.u32(FORMAT_VERSION);
    for part in [model.encoder(), model.decoder(), model.classifier()] {
        w.u32(part.len() as u32);
        for l in part {
            w.header(
                l.kind,
                [l.in_channels, l.out_channels, l.kernel_size, l.stride, l.padding],
            );
            l.weights.iter().for_each(|&v| w.f32(v));
            l.bias.iter().for_each(|&v| w.f32(v));
        }
    }
    w.0
}

pub fn quantized_to_bytes(model: &QuantizedModel) -> Vec<u8> {
    let mut w = Writer(EPQ_MAGIC.to_vec());
    w.u32(FORMAT_VERSION);
    let input = model.input_params();
    w.f32(input.scale);
    w.i32(input.zero_point);
    for part in [model.encoder(), model.decoder(), model.classifier()] {
        w.u32(part.len() as u32);
        for l in part {
            w.header(
                l.kind,
                [l.in_channels, l.out_channels, l.kernel_size, l.stride, l.padding],
            );
            l.weight_scales.iter().for_each(|&v| w.f32(v));
            w.f32(l.output.scale);
            w.i32(l.output.zero_point);
            l.weights.iter().for_each(|&v| w.u8(v as u8));
            l.bias.iter().for_each(|&v| w.i32(v));
        }
    }
    w.0
}

pub fn write_model(path: &Path, model: &ModelGraph) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn write_quantized(path: &Path, model: &QuantizedModel) -> Result<()> {
    std::fs::write(path, quantized_to_bytes(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Load {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn array4(&mut self) -> Result<[u8; 4]> {
        Ok(self.take(4)?.try_into().expect("4 bytes"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array4()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array4()?))
    }

    fn f32(&mut self) -> Result<f32> {
        let at = self.pos;
        let v = f32::from_le_bytes(self.array4()?);
        if !v.is_finite() {
            return Err(Error::Load {
                offset: at,
                message: format!("non-finite value {v}"),
            });
        }
        Ok(v)
    }

    /// Checks that `count` elements of `size` bytes remain before allocating.
    fn ensure(&self, count: usize, size: usize) -> Result<()> {
        let need = count.checked_mul(size);
        match need {
            Some(n) if n <= self.bytes.len() - self.pos => Ok(()),
            _ => Err(self.err(format!("truncated: {count} values of {size} bytes declared"))),
        }
    }

    fn header(&mut self) -> Result<(LayerKind, [usize; 5])> {
        let at = self.pos;
        let code = self.u8()?;
        let kind = LayerKind::from_code(code).ok_or_else(|| Error::Load {
            offset: at,
            message: format!("unknown layer kind {code}"),
        })?;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            let v = self.u32()?;
            if v > MAX_DIM {
                return Err(self.err(format!("layer dimension {v} exceeds {MAX_DIM}")));
            }
            *d = v as usize;
        }
        Ok((kind, dims))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn weight_counts(kind: LayerKind, [cin, cout, k, _, _]: [usize; 5]) -> (usize, usize) {
    if kind.has_weights() {
        (cin * cout * k, cout)
    } else {
        (0, 0)
    }
}

fn read_float(r: &mut Reader) -> Result<ModelGraph> {
    let mut parts: Vec<Vec<LayerSpec>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let n = r.u32()? as usize;
        r.ensure(n, 21)?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.pos;
            let (kind, dims) = r.header()?;
            let (nw, nb) = weight_counts(kind, dims);
            r.ensure(nw + nb, 4)?;
            let weights = (0..nw).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let bias = (0..nb).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let [cin, cout, k, s, p] = dims;
            let layer = LayerSpec {
                kind,
                in_channels: cin,
                out_channels: cout,
                kernel_size: k,
                stride: s,
                padding: p,
                weights,
                bias,
            };
            layer.validate().map_err(|e| Error::Load {
                offset: at,
                message: e.to_string(),
            })?;
            layers.push(layer);
        }
        parts.push(layers);
    }
    r.finish()?;
    let classifier = parts.pop().expect("three parts");
    let decoder = parts.pop().expect("three parts");
    let encoder = parts.pop().expect("three parts");
    ModelGraph::new(encoder, decoder, classifier).map_err(|e| r.err(e.to_string()))
}

fn read_quantized(r: &mut Reader) -> Result<QuantizedModel> {
    let input = QParams {
        scale: r.f32()?,
        zero_point: r.i32()?,
    };
    let mut parts: Vec<Vec<QLayer>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let n = r.u32()? as usize;
        r.ensure(n, 29)?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let (kind, dims) = r.header()?;
            let (nw, nb) = weight_counts(kind, dims);
            let [cin, cout, k, s, p] = dims;
            let n_scales = if kind.has_weights() { cout } else { 0 };
            r.ensure(n_scales, 4)?;
            let scales = (0..n_scales).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let output = QParams {
                scale: r.f32()?,
                zero_point: r.i32()?,
            };
            r.ensure(nw + 4 * nb, 1)?;
            let weights = r.take(nw)?.iter().map(|&b| b as i8).collect();
            let bias = (0..nb).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
            layers.push(QLayer::new(kind, cin, cout, k, s, p, scales, output, weights, bias));
        }
        parts.push(layers);
    }
    r.finish()?;
    let classifier = parts.pop().expect("three parts");
    let decoder = parts.pop().expect("three parts");
    let encoder = parts.pop().expect("three parts");
    QuantizedModel::new(input, encoder, decoder, classifier).map_err(|e| r.err(e.to_string()))
}

/// Parses either weight format, dispatching on the magic.
pub fn model_from_bytes(bytes: &[u8]) -> Result<LoadedModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.array4()?;
    let version_at = r.pos;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Load {
            offset: version_at,
            message: format!("unsupported version {version}"),
        });
    }
    match &magic {
        m if m == EPW_MAGIC => read_float(&mut r).map(LoadedModel::Float),
        m if m == EPQ_MAGIC => read_quantized(&mut r).map(LoadedModel::Quantized),
        _ => Err(Error::Load {
            offset: 0,
            message: format!("bad magic {:?}", String::from_utf8_lossy(&magic)),
        }),
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
