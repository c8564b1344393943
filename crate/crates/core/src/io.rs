//! Little-endian binary formats.
//!
//! Feature file (`CTGF`, version 1):
//!
//! ```text
//! magic "CTGF" | version u32 | N u32 | d u32 | n_labels u32 | spacing_z_mm f64
//! | labels: n_labels bytes (0/1) | features: N·d f32, row-major
//! ```
//!
//! Checkpoint (`CTGC`, version 1):
//!
//! ```text
//! magic "CTGC" | version u32 | n_labels u32 | d u32 | K u32 | n_layers u32
//! | per tensor: rank u32, dims u32 × rank, values f64 × Π dims
//! ```
//!
//! Tensors follow [`ModelParams::tensors`] order. Biases are written as rank-1
//! tensors. `K = 0` marks a GraphConv model.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::FormatError;
use crate::matrix::Matrix;
use crate::model::{ChebLayerParams, GnnLayers, GraphConvLayerParams, HeadParams, ModelParams};
use crate::spectral::ChebWeights;
use crate::synth::Sample;

pub const FEATURE_MAGIC: [u8; 4] = *b"CTGF";
pub const FEATURE_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CTGC";
pub const CHECKPOINT_VERSION: u32 = 1;

type FResult<T> = std::result::Result<T, FormatError>;

/// Cursor over an in-memory file that reports truncation precisely.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> FResult<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated { needed: n, available });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> FResult<()> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if found != expected {
            return Err(FormatError::BadMagic { expected, found });
        }
        Ok(())
    }

    fn version(&mut self, expected: u32) -> FResult<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(FormatError::VersionMismatch { expected, found });
        }
        Ok(())
    }

    fn u32(&mut self) -> FResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> FResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> FResult<()> {
        if self.pos != self.buf.len() {
            return Err(FormatError::Malformed(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn to_u32(v: usize, what: &str) -> FResult<u32> {
    u32::try_from(v).map_err(|_| FormatError::Malformed(format!("{what} {v} does not fit in u32")))
}

pub fn encode_features(s: &Sample) -> FResult<Vec<u8>> {
    let (n, d) = s.features.shape();
    let mut out = Vec::with_capacity(28 + s.labels.len() + 4 * n * d);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(n, "N")?.to_le_bytes());
    out.extend_from_slice(&to_u32(d, "d")?.to_le_bytes());
    out.extend_from_slice(&to_u32(s.labels.len(), "n_labels")?.to_le_bytes());
    out.extend_from_slice(&s.spacing_z_mm.to_le_bytes());
    for &y in &s.labels {
        if y > 1 {
            return Err(FormatError::Malformed(format!("label value {y} is not binary")));
        }
        out.push(y);
    }
    for &v in s.features.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(buf: &[u8]) -> FResult<Sample> {
    let mut r = Reader::new(buf);
    r.magic(FEATURE_MAGIC)?;
    r.version(FEATURE_VERSION)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let n_labels = r.u32()? as usize;
    let spacing_z_mm = r.f64()?;
    let labels = r.take(n_labels)?.to_vec();
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(FormatError::Malformed(format!("label value {bad} is not binary")));
    }
    let count = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| FormatError::Malformed("payload size overflows".into()))?;
    let payload = r.take(count)?;
    r.finish()?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let features = Matrix::from_vec(n, d, values).map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(Sample {
        features,
        labels,
        spacing_z_mm,
    })
}

/// Features are stored as `f32`; values that are not exactly representable
/// are rounded.
pub fn write_features(path: impl AsRef<Path>, s: &Sample) -> FResult<()> {
    let bytes = encode_features(s)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> FResult<Sample> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    decode_features(&buf)
}

fn put_tensor(out: &mut Vec<u8>, t: &Matrix, is_bias: bool) -> FResult<()> {
    if is_bias {
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&to_u32(t.cols(), "dim")?.to_le_bytes());
    } else {
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&to_u32(t.rows(), "dim")?.to_le_bytes());
        out.extend_from_slice(&to_u32(t.cols(), "dim")?.to_le_bytes());
    }
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode_checkpoint(params: &ModelParams) -> FResult<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (v, what) in [
        (params.n_labels(), "n_labels"),
        (params.d(), "d"),
        (params.cheb_order(), "K"),
        (params.n_layers(), "n_layers"),
    ] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    for (t, is_bias) in params.tensors().into_iter().zip(params.bias_mask()) {
        put_tensor(&mut out, t, is_bias)?;
    }
    Ok(out)
}

fn get_tensor(r: &mut Reader<'_>, rows: usize, cols: usize, is_bias: bool) -> FResult<Matrix> {
    let rank = r.u32()? as usize;
    let expected_rank = if is_bias { 1 } else { 2 };
    if rank != expected_rank {
        return Err(FormatError::Malformed(format!(
            "expected a rank-{expected_rank} tensor, found rank {rank}"
        )));
    }
    let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<FResult<_>>()?;
    let shape = if is_bias { (1, dims[0]) } else { (dims[0], dims[1]) };
    if shape != (rows, cols) {
        return Err(FormatError::Malformed(format!(
            "tensor shape {shape:?} does not match expected {:?}",
            (rows, cols)
        )));
    }
    let bytes = r.take(rows * cols * 8)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(rows, cols, values).map_err(|e| FormatError::Malformed(e.to_string()))
}

pub fn decode_checkpoint(buf: &[u8]) -> FResult<ModelParams> {
    let mut r = Reader::new(buf);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let n_labels = r.u32()? as usize;
    let d = r.u32()? as usize;
    let order = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_labels == 0 || d == 0 || n_layers == 0 {
        return Err(FormatError::Malformed("zero-sized model header".into()));
    }

    let layers = if order == 0 {
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            layers.push(GraphConvLayerParams {
                self_weight: get_tensor(&mut r, d, d, false)?,
                neighbor_weight: get_tensor(&mut r, d, d, false)?,
                bias: get_tensor(&mut r, 1, d, true)?,
            });
        }
        GnnLayers::GraphConv(layers)
    } else {
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let thetas = (0..order)
                .map(|_| get_tensor(&mut r, d, d, false))
                .collect::<FResult<_>>()?;
            layers.push(ChebLayerParams {
                cheb: ChebWeights::new(thetas).map_err(|e| FormatError::Malformed(e.to_string()))?,
                ff_weight: get_tensor(&mut r, d, d, false)?,
                ff_bias: get_tensor(&mut r, 1, d, true)?,
            });
        }
        GnnLayers::Cheb(layers)
    };
    // W1 is d × hidden; read its second dimension from the stream.
    let hidden = {
        let mut probe = Reader { buf: r.buf, pos: r.pos };
        let _rank = probe.u32()?;
        let _rows = probe.u32()?;
        probe.u32()? as usize
    };
    let head = HeadParams {
        w1: get_tensor(&mut r, d, hidden, false)?,
        b1: get_tensor(&mut r, 1, hidden, true)?,
        w2: get_tensor(&mut r, hidden, n_labels, false)?,
        b2: get_tensor(&mut r, 1, n_labels, true)?,
    };
    r.finish()?;
    Ok(ModelParams { layers, head })
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> FResult<()> {
    let bytes = encode_checkpoint(params)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> FResult<ModelParams> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    decode_checkpoint(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Variant};

    fn sample() -> Sample {
        Sample {
            features: Matrix::from_fn(3, 2, |i, j| f64::from((i as f32 - 0.5) * 1.25 + j as f32)),
            labels: vec![1, 0, 1],
            spacing_z_mm: 1.5,
        }
    }

    #[test]
    fn feature_layout_is_exact() {
        let bytes = encode_features(&sample()).unwrap();
        assert_eq!(&bytes[0..4], b"CTGF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 1.5);
        assert_eq!(&bytes[28..31], &[1, 0, 1]);
        assert_eq!(bytes.len(), 31 + 3 * 2 * 4);
        assert_eq!(f32::from_le_bytes(bytes[31..35].try_into().unwrap()), -0.625);
        assert_eq!(decode_features(&bytes).unwrap(), sample());
    }

    #[test]
    fn feature_errors_are_distinct() {
        let good = encode_features(&sample()).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0..4].copy_from_slice(b"XXXX");
        let e = decode_features(&bad_magic).unwrap_err();
        assert!(matches!(e, FormatError::BadMagic { .. }));
        assert_eq!(e.code(), 1);

        let mut bad_version = good.clone();
        bad_version[4..8].copy_from_slice(&7u32.to_le_bytes());
        let e = decode_features(&bad_version).unwrap_err();
        assert!(matches!(e, FormatError::VersionMismatch { found: 7, .. }));
        assert_eq!(e.code(), 2);

        let mut too_big = good.clone();
        too_big[8..12].copy_from_slice(&50u32.to_le_bytes());
        let e = decode_features(&too_big).unwrap_err();
        assert!(matches!(e, FormatError::Truncated { .. }));
        assert_eq!(e.code(), 3);

        let e = decode_features(&good[..good.len() - 1]).unwrap_err();
        assert!(matches!(e, FormatError::Truncated { .. }));

        let mut bad_label = good;
        bad_label[29] = 2;
        assert!(matches!(decode_features(&bad_label), Err(FormatError::Malformed(_))));
    }

    #[test]
    fn checkpoint_round_trip_both_variants() {
        for variant in Variant::ALL {
            let params = ModelParams::init(&ModelConfig::new(variant, 5, 3), 9).unwrap();
            let bytes = encode_checkpoint(&params).unwrap();
            assert_eq!(&bytes[0..4], b"CTGC");
            let expected_k = if variant == Variant::Cheb { 3 } else { 0 };
            assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), expected_k);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back, params);
            assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn checkpoint_errors() {
        let params = ModelParams::init(&ModelConfig::new(Variant::Cheb, 4, 2), 0).unwrap();
        let good = encode_checkpoint(&params).unwrap();
        let mut m = good.clone();
        m[3] = b'F';
        assert!(matches!(decode_checkpoint(&m), Err(FormatError::BadMagic { .. })));
        let mut v = good.clone();
        v[4] = 9;
        assert!(matches!(
            decode_checkpoint(&v),
            Err(FormatError::VersionMismatch { .. })
        ));
        assert!(matches!(
            decode_checkpoint(&good[..good.len() - 8]),
            Err(FormatError::Truncated { .. })
        ));
        let mut shape = good;
        shape[12..16].copy_from_slice(&5u32.to_le_bytes());
        assert!(decode_checkpoint(&shape).is_err());
    }
}
