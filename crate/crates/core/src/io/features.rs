//! Frame-feature files: a 20-byte little-endian header followed by `f32`
//! rows.
//!
//! ```text
//! "FFSV" | version u32 | frames u32 | dim u32 | hop_ms u32 | frames·dim × f32
//! ```

use std::path::Path;

use crate::numerics::Tensor;
use crate::score::HOP_MS;

use super::{read_file, write_file, IoError};

pub const FEATURE_MAGIC: [u8; 4] = *b"FFSV";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub frames: u32,
    pub dim: u32,
    pub hop_ms: u32,
    /// Row-major `frames × dim`.
    pub data: Vec<f32>,
}

impl FeatureFile {
    pub fn new(frames: u32, dim: u32, data: Vec<f32>) -> Result<Self, IoError> {
        if data.len() != frames as usize * dim as usize {
            return Err(IoError::Format(format!(
                "{} values for {frames}×{dim} features",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            dim,
            hop_ms: HOP_MS,
            data,
        })
    }

    /// Narrows each value to `f32`.
    pub fn from_tensor(t: &Tensor) -> Result<Self, IoError> {
        let data = t.data().iter().map(|&v| v as f32).collect();
        Self::new(t.rows() as u32, t.cols() as u32, data)
    }

    /// One-column file of per-frame F0 in Hz.
    pub fn from_f0(values: &[f64]) -> Result<Self, IoError> {
        Self::new(values.len() as u32, 1, values.iter().map(|&v| v as f32).collect())
    }

    pub fn to_tensor(&self) -> Result<Tensor, IoError> {
        Ok(Tensor::new(
            &[self.frames as usize, self.dim as usize],
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&FEATURE_MAGIC);
        for v in [FEATURE_VERSION, self.frames, self.dim, self.hop_ms] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        if bytes.len() < HEADER_LEN {
            return Err(IoError::Format("feature file shorter than its header".into()));
        }
        if bytes[..4] != FEATURE_MAGIC {
            return Err(IoError::Format("not a feature file (bad magic)".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        let (version, frames, dim, hop_ms) = (word(1), word(2), word(3), word(4));
        if version != FEATURE_VERSION {
            return Err(IoError::Format(format!("unsupported feature file version {version}")));
        }
        let expected = frames as usize * dim as usize * 4;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(IoError::Format(format!(
                "payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            frames,
            dim,
            hop_ms,
            data,
        })
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::from_bytes(&read_file(path)?).map_err(|e| e.at(path))
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_file(path, &self.to_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let f = FeatureFile::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.5]).unwrap();
        let b = f.to_bytes();
        assert_eq!(b.len(), 20 + 24);
        assert_eq!(&b[..4], b"FFSV");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(&b[12..16], &[3, 0, 0, 0]);
        assert_eq!(&b[16..20], &[10, 0, 0, 0]);
        assert_eq!(&b[20..24], &1.0f32.to_le_bytes());
        assert_eq!(FeatureFile::from_bytes(&b).unwrap(), f);
    }

    #[test]
    fn malformed_files() {
        let f = FeatureFile::new(1, 2, vec![1.0, 2.0]).unwrap();
        let mut b = f.to_bytes();
        assert!(FeatureFile::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(FeatureFile::from_bytes(&b[..10]).is_err());
        b[0] = b'X';
        assert!(FeatureFile::from_bytes(&b).is_err());
        assert!(FeatureFile::new(2, 2, vec![0.0; 3]).is_err());
    }
}
