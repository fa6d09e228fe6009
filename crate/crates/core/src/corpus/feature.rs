//! Feature matrices and the FEA1 binary file format.
//!
//! Layout: `b"FEA1"`, rows as `u32` LE, cols as `u32` LE, then `rows * cols`
//! IEEE-754 `f32` LE values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEA1_MAGIC: &[u8; 4] = b"FEA1";
const HEADER_LEN: usize = 12;

/// A `rows x cols` sequence of feature vectors for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!("zero dimension {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{rows}x{cols} matrix given {} values",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite value at index {pos}")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(FEA1_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes an FEA1 buffer. `origin` is only used for error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != FEA1_MAGIC {
            return Err(Error::BadMagic(origin.to_path_buf()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedFile {
                path: origin.to_path_buf(),
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::ZeroDims(origin.to_path_buf()));
        }
        let payload = &bytes[HEADER_LEN..];
        let expected = rows * cols * 4;
        if payload.len() < expected {
            return Err(Error::TruncatedFile {
                path: origin.to_path_buf(),
                expected,
                found: payload.len(),
            });
        }
        let values = payload[..expected]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows, cols, values)
    }
}

pub fn read_feature_matrix(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_bytes(&bytes, path)
}

pub fn write_feature_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&m.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_hand_encoded_bytes() {
        // Assembled byte by byte, independent of to_bytes.
        let mut raw = b"FEA1".to_vec();
        raw.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0]);
        raw.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]); // 1.0f32
        raw.extend_from_slice(&[0x00, 0x00, 0x00, 0x40]); // 2.0f32
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.fea");
        fs::write(&p, &raw).unwrap();
        let m = read_feature_matrix(&p).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert_eq!(m.values(), &[1.0, 2.0]);
        assert_eq!(m.to_bytes(), raw);
    }

    #[test]
    fn zero_rows_is_rejected() {
        let mut raw = b"FEA1".to_vec();
        raw.extend_from_slice(&[0, 0, 0, 0, 2, 0, 0, 0]);
        let err = FeatureMatrix::from_bytes(&raw, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::ZeroDims(_)));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let err = FeatureMatrix::from_bytes(b"FEA2\x01\0\0\0\x01\0\0\0", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::BadMagic(_)));
        let mut raw = b"FEA1".to_vec();
        raw.extend_from_slice(&[2, 0, 0, 0, 2, 0, 0, 0]);
        raw.extend_from_slice(&[0u8; 12]);
        let err = FeatureMatrix::from_bytes(&raw, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::TruncatedFile { expected: 16, found: 12, .. }));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(FeatureMatrix::new(1, 2, vec![1.0, f32::NAN]).is_err());
        assert!(FeatureMatrix::new(1, 1, vec![f32::INFINITY]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn write_then_read_is_identity(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(-1.0e6f32..1.0e6, 36),
        ) {
            let m = FeatureMatrix::new(rows, cols, seed[..rows * cols].to_vec()).unwrap();
            let back = FeatureMatrix::from_bytes(&m.to_bytes(), Path::new("mem")).unwrap();
            prop_assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back, m);
        }
    }
}
