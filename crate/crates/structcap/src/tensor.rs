//! Portable tensor file.
//!
//! Byte layout, all integers little-endian:
//!
//! | offset      | size        | content                              |
//! |-------------|-------------|--------------------------------------|
//! | 0           | 4           | magic `SCTN` (ASCII)                 |
//! | 4           | 4           | format version, `u32` = 1            |
//! | 8           | 4           | rank `n`, `u32`, 1..=8               |
//! | 12          | 4n          | dimensions, `u32` each               |
//! | 12 + 4n     | 4 * prod    | values, IEEE-754 `f32`, row-major    |
//!
//! Nothing follows the values. Latents are rank 5 `[layer, time, height,
//! width, channel]`; rank 4 files are read as a single layer.

use std::path::Path;

use structcap_core::metrics::LatentTensor;

pub const MAGIC: [u8; 4] = *b"SCTN";
pub const VERSION: u32 = 1;
pub const MAX_RANK: usize = 8;
/// Media type used when a tensor file travels over HTTP.
pub const CONTENT_TYPE: &str = "application/x-structcap-tensor";

#[derive(Debug, thiserror::Error)]
pub enum TensorFileError {
    #[error("tensor file truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor format version {0}")]
    Version(u32),
    #[error("rank {0} outside 1..=8")]
    Rank(usize),
    #[error("{0} trailing bytes after tensor data")]
    Trailing(usize),
    #[error("tensor has {have} values, shape needs {need}")]
    Length { need: usize, have: usize },
    #[error("expected a rank 4 or 5 latent, got shape {0:?}")]
    NotLatent(Vec<usize>),
    #[error(transparent)]
    Metric(#[from] structcap_core::metrics::MetricError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorFileError> {
        if shape.is_empty() || shape.len() > MAX_RANK {
            return Err(TensorFileError::Rank(shape.len()));
        }
        let need: usize = shape.iter().product();
        if need != data.len() {
            return Err(TensorFileError::Length { need, have: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for d in &self.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TensorFileError> {
        let word = |at: usize| -> Result<u32, TensorFileError> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or(TensorFileError::Truncated {
                    need: at + 4,
                    have: bytes.len(),
                })
        };
        if bytes.len() < 12 {
            return Err(TensorFileError::Truncated { need: 12, have: bytes.len() });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(TensorFileError::BadMagic(magic));
        }
        let version = word(4)?;
        if version != VERSION {
            return Err(TensorFileError::Version(version));
        }
        let rank = word(8)? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(TensorFileError::Rank(rank));
        }
        let shape = (0..rank).map(|i| word(12 + 4 * i).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let start = 12 + 4 * rank;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or(TensorFileError::Rank(rank))?;
        let end = count
            .checked_mul(4)
            .and_then(|n| n.checked_add(start))
            .ok_or(TensorFileError::Rank(rank))?;
        if bytes.len() < end {
            return Err(TensorFileError::Truncated { need: end, have: bytes.len() });
        }
        if bytes.len() > end {
            return Err(TensorFileError::Trailing(bytes.len() - end));
        }
        let data = bytes[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { shape, data })
    }

    pub fn read(path: &Path) -> Result<Self, TensorFileError> {
        let bytes = std::fs::read(path).map_err(|source| TensorFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), TensorFileError> {
        std::fs::write(path, self.encode()).map_err(|source| TensorFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn into_latent(self) -> Result<LatentTensor, TensorFileError> {
        let shape: [usize; 5] = match self.shape[..] {
            [l, t, h, w, c] => [l, t, h, w, c],
            [t, h, w, c] => [1, t, h, w, c],
            _ => return Err(TensorFileError::NotLatent(self.shape)),
        };
        Ok(LatentTensor::new(shape, self.data)?)
    }

    pub fn from_latent(z: &LatentTensor) -> Self {
        Self {
            shape: z.shape().to_vec(),
            data: z.values().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_bytes() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let mut want = b"SCTN".to_vec();
        for w in [1u32, 2, 2, 1] {
            want.extend_from_slice(&w.to_le_bytes());
        }
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(t.encode(), want);
        assert_eq!(Tensor::decode(&want).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        let good = Tensor::new(vec![3], vec![0.0; 3]).unwrap().encode();
        assert!(matches!(Tensor::decode(&good[..good.len() - 1]), Err(TensorFileError::Truncated { .. })));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(Tensor::decode(&extra), Err(TensorFileError::Trailing(1))));
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(Tensor::decode(&magic), Err(TensorFileError::BadMagic(_))));
        let mut version = good;
        version[4] = 9;
        assert!(matches!(Tensor::decode(&version), Err(TensorFileError::Version(9))));
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn latent_ranks() {
        let z = Tensor::new(vec![2, 1, 1, 3], vec![0.5; 6]).unwrap().into_latent().unwrap();
        assert_eq!(z.shape(), [1, 2, 1, 1, 3]);
        assert_eq!(Tensor::from_latent(&z).shape, vec![1, 2, 1, 1, 3]);
        assert!(Tensor::new(vec![6], vec![0.0; 6]).unwrap().into_latent().is_err());
        assert!(Tensor::new(vec![1], vec![f32::NAN]).unwrap().into_latent().is_err());
    }
}
