//! Versioned binary parameter checkpoints.
//!
//! Layout (little-endian):
//! `"SRENC1"`, u16 version, u32 header length, header JSON, u32 tensor count,
//! then per tensor: u16-prefixed name, u8 dtype (0 = f32, 1 = int8),
//! u32 rows, u32 cols, for int8 an f32 scale and i32 zero point, then data.

use std::path::Path;

use super::{Matrix, ParamSet, QuantizedTensor};
use crate::binio::{put_short_str, Reader};
use crate::error::{Error, FormatError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"SRENC1";
pub const CHECKPOINT_VERSION: u16 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_I8: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Matrix),
    Int8(QuantizedTensor),
}

impl TensorData {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            TensorData::F32(m) => m.shape(),
            TensorData::Int8(q) => (q.rows, q.cols),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        match self {
            TensorData::F32(m) => m.clone(),
            TensorData::Int8(q) => q.dequantize(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: serde_json::Value,
    pub tensors: Vec<(String, TensorData)>,
}

impl Checkpoint {
    pub fn from_params(header: serde_json::Value, params: &ParamSet) -> Self {
        let tensors = params
            .iter()
            .map(|(_, name, m)| (name.to_string(), TensorData::F32(m.clone())))
            .collect();
        Checkpoint { header, tensors }
    }

    /// Parameters with int8 tensors dequantized.
    pub fn to_params(&self) -> ParamSet {
        let mut params = ParamSet::new();
        for (name, t) in &self.tensors {
            params.add(name.clone(), t.to_matrix());
        }
        params
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header)?;
        out.extend_from_slice(&u32_len(header.len())?.to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&u32_len(self.tensors.len())?.to_le_bytes());
        for (name, t) in &self.tensors {
            put_short_str(&mut out, name)?;
            let (rows, cols) = t.shape();
            match t {
                TensorData::F32(m) => {
                    out.push(DTYPE_F32);
                    out.extend_from_slice(&u32_len(rows)?.to_le_bytes());
                    out.extend_from_slice(&u32_len(cols)?.to_le_bytes());
                    for &x in &m.data {
                        out.extend_from_slice(&(x as f32).to_le_bytes());
                    }
                }
                TensorData::Int8(q) => {
                    out.push(DTYPE_I8);
                    out.extend_from_slice(&u32_len(rows)?.to_le_bytes());
                    out.extend_from_slice(&u32_len(cols)?.to_le_bytes());
                    out.extend_from_slice(&q.scale.to_le_bytes());
                    out.extend_from_slice(&q.zero_point.to_le_bytes());
                    out.extend(q.values.iter().map(|&v| v as u8));
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let header_len = r.u32()? as usize;
        let header: serde_json::Value = serde_json::from_slice(r.take(header_len)?)?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let name = r.short_str()?.to_string();
            let dtype = r.u8()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| FormatError::Malformed(format!("tensor {name} is too large")))?;
            let data = match dtype {
                DTYPE_F32 => {
                    let raw = r.take(count.checked_mul(4).ok_or_else(|| {
                        FormatError::Malformed(format!("tensor {name} is too large"))
                    })?)?;
                    let data = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect();
                    TensorData::F32(Matrix::from_vec(rows, cols, data))
                }
                DTYPE_I8 => {
                    let scale = r.f32()?;
                    let zero_point = r.i32()?;
                    if !(scale > 0.0) || !(-128..=127).contains(&zero_point) {
                        return Err(FormatError::Malformed(format!("bad quantization params for {name}")).into());
                    }
                    let values = r.take(count)?.iter().map(|&b| b as i8).collect();
                    TensorData::Int8(QuantizedTensor {
                        rows,
                        cols,
                        values,
                        scale,
                        zero_point,
                    })
                }
                other => return Err(FormatError::Malformed(format!("unknown dtype {other} for {name}")).into()),
            };
            tensors.push((name, data));
        }
        r.finish()?;
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }

    /// Replaces every tensor by its int8 quantization.
    pub fn quantized(&self) -> Self {
        let tensors = self
            .tensors
            .iter()
            .map(|(n, t)| {
                let q = match t {
                    TensorData::F32(m) => QuantizedTensor::quantize(m),
                    TensorData::Int8(q) => q.clone(),
                };
                (n.clone(), TensorData::Int8(q))
            })
            .collect();
        Checkpoint {
            header: self.header.clone(),
            tensors,
        }
    }

    pub fn header_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .header
            .get(key)
            .ok_or_else(|| Error::Invalid(format!("checkpoint header lacks {key:?}")))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| FormatError::Malformed(format!("length {n} exceeds u32")).into())
}
