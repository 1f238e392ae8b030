//! Binary model files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      4 bytes  "WEQM"
//! version    u32
//! mode       u8       0 = embedding, 1 = one-hot
//! embedding: dim u64 | one-hot: count u64, then per word: len u64 + UTF-8 bytes
//! layers     u64
//! per layer: in u64, out u64, weights f64 × in·out (row-major), bias f64 × out
//! checksum   u32      CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{Dense, InputMode, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 4] = b"WEQM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

impl<T: Scalar> Mlp<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + self.parameter_count() * 8);
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        match &self.mode {
            InputMode::Embedding { dim } => {
                buf.push(0);
                put_u64(&mut buf, *dim as u64);
            }
            InputMode::OneHot { vocab } => {
                buf.push(1);
                put_u64(&mut buf, vocab.len() as u64);
                for w in vocab {
                    put_u64(&mut buf, w.len() as u64);
                    buf.extend_from_slice(w.as_bytes());
                }
            }
        }
        put_u64(&mut buf, self.layers.len() as u64);
        for layer in &self.layers {
            put_u64(&mut buf, layer.in_dim as u64);
            put_u64(&mut buf, layer.out_dim as u64);
            for v in layer.weights.iter().chain(&layer.bias) {
                buf.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MODEL_MAGIC.len() + 8 {
            return Err(Error::Corrupt("model file is truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
        if &body[..4] != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        if crc32fast::hash(body) != stored {
            return Err(Error::Corrupt("model checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {version}"
            )));
        }
        let mode = match r.u8()? {
            0 => InputMode::Embedding { dim: r.len()? },
            1 => {
                let n = r.len()?;
                let mut vocab = Vec::with_capacity(n.min(1 << 20));
                for _ in 0..n {
                    let len = r.len()?;
                    let raw = r.take(len)?;
                    let w = std::str::from_utf8(raw)
                        .map_err(|_| Error::Corrupt("vocabulary entry is not UTF-8".into()))?;
                    vocab.push(w.to_string());
                }
                InputMode::OneHot { vocab }
            }
            other => return Err(Error::Format(format!("unknown input mode tag {other}"))),
        };
        let n_layers = r.len()?;
        let mut layers = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let in_dim = r.len()?;
            let out_dim = r.len()?;
            let count = in_dim
                .checked_mul(out_dim)
                .ok_or_else(|| Error::Corrupt("layer size overflows".into()))?;
            let weights = r.f64s::<T>(count)?;
            let bias = r.f64s::<T>(out_dim)?;
            layers.push(Dense::new(in_dim, out_dim, weights, bias)?);
        }
        if r.pos != body.len() {
            return Err(Error::Corrupt("trailing bytes after last layer".into()));
        }
        Mlp::from_layers(mode, layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt("model file is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Corrupt("length does not fit in memory".into()))
    }

    fn f64s<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Corrupt("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }
}
