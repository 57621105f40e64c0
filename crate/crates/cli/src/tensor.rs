//! Binary tensor files.
//!
//! Layout: magic `OBPT`, version byte (1), dtype byte (0 = float32,
//! 1 = uint8, 2 = int32), ndim byte, `ndim` little-endian u32 dims, then the
//! row-major little-endian payload. Round trips are bit exact.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};
use std::io::Read;
use std::path::Path;

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"OBPT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype_byte(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::U8(_) => 1,
            TensorData::I32(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        let count: u64 = dims.iter().map(|&d| d as u64).product();
        if count != data.len() as u64 {
            return Err(CliError::InvalidManifest(format!(
                "tensor dims {:?} imply {} elements, payload has {}",
                dims,
                count,
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn element_count(&self) -> usize {
        self.data.len()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(7 + 4 * self.dims.len() + 4 * self.data.len());
        buf.extend_from_slice(&MAGIC);
        buf.push(VERSION);
        buf.push(self.data.dtype_byte());
        buf.push(self.dims.len() as u8);
        for &d in &self.dims {
            buf.write_u32::<LittleEndian>(d).unwrap();
        }
        match &self.data {
            TensorData::F32(v) => {
                for &x in v {
                    buf.write_f32::<LittleEndian>(x).unwrap();
                }
            }
            TensorData::U8(v) => buf.extend_from_slice(v),
            TensorData::I32(v) => {
                for &x in v {
                    buf.write_i32::<LittleEndian>(x).unwrap();
                }
            }
        }
        std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bad = |reason: &str| CliError::BadTensor {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let mut r = bytes.as_slice();
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if magic != MAGIC {
            return Err(bad("wrong magic"));
        }
        let version = r.read_u8().map_err(|_| bad("truncated header"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let dtype = r.read_u8().map_err(|_| bad("truncated header"))?;
        let ndim = r.read_u8().map_err(|_| bad("truncated header"))? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(
                r.read_u32::<LittleEndian>()
                    .map_err(|_| bad("truncated dims"))?,
            );
        }
        let count: u64 = dims.iter().map(|&d| d as u64).product();
        let count = usize::try_from(count).map_err(|_| bad("dims overflow"))?;
        let data = match dtype {
            0 => {
                let mut v = vec![0f32; count];
                r.read_f32_into::<LittleEndian>(&mut v)
                    .map_err(|_| bad("truncated payload"))?;
                TensorData::F32(v)
            }
            1 => {
                let mut v = vec![0u8; count];
                r.read_exact(&mut v).map_err(|_| bad("truncated payload"))?;
                TensorData::U8(v)
            }
            2 => {
                let mut v = vec![0i32; count];
                r.read_i32_into::<LittleEndian>(&mut v)
                    .map_err(|_| bad("truncated payload"))?;
                TensorData::I32(v)
            }
            other => return Err(bad(&format!("unknown dtype {other}"))),
        };
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Tensor::new(dims, data)
    }

    pub fn from_array2(a: &Array2<f64>) -> Self {
        let (h, w) = a.dim();
        Tensor {
            dims: vec![h as u32, w as u32],
            data: TensorData::F32(a.iter().map(|&x| x as f32).collect()),
        }
    }

    pub fn from_array3(a: &Array3<f64>) -> Self {
        let (h, w, c) = a.dim();
        Tensor {
            dims: vec![h as u32, w as u32, c as u32],
            data: TensorData::F32(a.iter().map(|&x| x as f32).collect()),
        }
    }

    pub fn from_labels(a: &Array2<u32>) -> Self {
        let (h, w) = a.dim();
        Tensor {
            dims: vec![h as u32, w as u32],
            data: TensorData::U8(a.iter().map(|&x| x as u8).collect()),
        }
    }

    pub fn to_array2(&self, path_hint: &Path) -> Result<Array2<f64>> {
        let bad = |reason: String| CliError::BadTensor {
            path: path_hint.to_path_buf(),
            reason,
        };
        if self.dims.len() != 2 {
            return Err(bad(format!("expected 2-d tensor, got {:?}", self.dims)));
        }
        let (h, w) = (self.dims[0] as usize, self.dims[1] as usize);
        let TensorData::F32(v) = &self.data else {
            return Err(bad("expected float32 data".into()));
        };
        Ok(Array2::from_shape_vec((h, w), v.iter().map(|&x| x as f64).collect()).unwrap())
    }

    pub fn to_array3(&self, path_hint: &Path) -> Result<Array3<f64>> {
        let bad = |reason: String| CliError::BadTensor {
            path: path_hint.to_path_buf(),
            reason,
        };
        if self.dims.len() != 3 {
            return Err(bad(format!("expected 3-d tensor, got {:?}", self.dims)));
        }
        let (h, w, c) = (
            self.dims[0] as usize,
            self.dims[1] as usize,
            self.dims[2] as usize,
        );
        let TensorData::F32(v) = &self.data else {
            return Err(bad("expected float32 data".into()));
        };
        Ok(Array3::from_shape_vec((h, w, c), v.iter().map(|&x| x as f64).collect()).unwrap())
    }

    pub fn to_labels(&self, path_hint: &Path) -> Result<Array2<u32>> {
        let bad = |reason: String| CliError::BadTensor {
            path: path_hint.to_path_buf(),
            reason,
        };
        if self.dims.len() != 2 {
            return Err(bad(format!("expected 2-d tensor, got {:?}", self.dims)));
        }
        let (h, w) = (self.dims[0] as usize, self.dims[1] as usize);
        let TensorData::U8(v) = &self.data else {
            return Err(bad("expected uint8 data".into()));
        };
        Ok(Array2::from_shape_vec((h, w), v.iter().map(|&x| x as u32).collect()).unwrap())
    }
}

/// Reads the tensor at `path` and keeps the path for error context.
pub fn read_tensor(path: &Path) -> Result<Tensor> {
    Tensor::read(path)
}
