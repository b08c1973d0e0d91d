use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nnet::Real;
use crate::signals::{FeatKind, FeatTensor};

pub const MAGIC: &[u8; 4] = b"NTSR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    I64,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
            DType::I64 => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            3 => Some(DType::I64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 | DType::I64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::I64(_) => DType::I64,
        }
    }
}

/// Row-major tensor as stored in an NTSR file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    /// Store `f32` models as f32 and everything else as f64.
    pub fn from_real<T: Real>(dims: Vec<usize>, data: &[T]) -> Result<Self> {
        let payload = if T::NAME == "f32" {
            TensorData::F32(data.iter().map(|v| v.as_f64() as f32).collect())
        } else {
            TensorData::F64(data.iter().map(|v| v.as_f64()).collect())
        };
        Self::new(dims, payload)
    }

    /// Convert to the requested float type (exact when the types match).
    pub fn to_real<T: Real>(&self) -> Vec<T> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|x| T::cast(*x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|x| T::cast(*x)).collect(),
            TensorData::I64(v) => v.iter().map(|x| T::cast(*x as f64)).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.to_real::<f64>()
    }

    /// Three-dimensional `[channels, frames, dims]` float tensor.
    pub fn from_feat(feat: &FeatTensor) -> Self {
        Self {
            dims: feat.shape().to_vec(),
            data: TensorData::F32(feat.data.iter().map(|v| *v as f32).collect()),
        }
    }

    pub fn to_feat(&self, kind: FeatKind) -> Result<FeatTensor> {
        match self.dims.as_slice() {
            &[c, t, d] => FeatTensor::new(self.to_f64(), c, t, d, kind),
            other => Err(Error::Shape(format!("feature tensor must be 3-D, got {other:?}"))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let dtype = self.data.dtype();
        let mut out = Vec::with_capacity(16 + 8 * self.dims.len() + dtype.size() * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&dtype.code().to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parse an NTSR byte buffer; `path` only labels errors.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |field: &'static str, detail: String| Error::TensorFormat {
            path: path.to_path_buf(),
            field,
            detail,
        };
        let mut pos = 0usize;
        let mut take = |n: usize, field: &'static str| -> Result<&[u8]> {
            if bytes.len() < pos + n {
                return Err(err(field, format!("file ends at byte {}, need {}", bytes.len(), pos + n)));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let magic = take(4, "magic")?;
        if magic != MAGIC {
            return Err(err("magic", format!("expected \"NTSR\", found {magic:?}")));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4, "version")?);
        if version != VERSION {
            return Err(err("version", format!("expected {VERSION}, found {version}")));
        }
        let code = u32_at(take(4, "dtype")?);
        let dtype = DType::from_code(code).ok_or_else(|| err("dtype", format!("unknown code {code}")))?;
        let ndim = u32_at(take(4, "ndim")?) as usize;
        if ndim > 16 {
            return Err(err("ndim", format!("{ndim} dimensions is implausible")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let d = u64::from_le_bytes(take(8, "dims")?.try_into().expect("8 bytes"));
            dims.push(usize::try_from(d).map_err(|_| err("dims", format!("{d} overflows usize")))?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .ok_or_else(|| err("dims", format!("{dims:?} overflows")))?;
        let header = pos;
        let expected = count * dtype.size();
        let actual = bytes.len() - header;
        if actual != expected {
            return Err(err(
                "payload",
                format!("expected {expected} bytes for dims {dims:?}, found {actual}"),
            ));
        }
        let payload = &bytes[header..];
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            DType::I64 => TensorData::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes, path)
}
