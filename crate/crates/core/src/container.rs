//! Binary matrix container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "WFMX"
//! 4       2     version (1)
//! 6       1     kind (1 = complex, 2 = real)
//! 7       1     reserved, must be 0
//! 8       8     rows
//! 16      8     cols
//! 24      4     label length L
//! 28      L     label, UTF-8 JSON
//! 28+L    ...   entries row-major; complex entries are (re, im) f64 pairs,
//!               real entries a single f64
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::{to_f, to_n, Matrix, C64};

pub const MAGIC: [u8; 4] = *b"WFMX";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 28;
/// Labels above this size are rejected before allocation.
pub const MAX_LABEL_LEN: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Complex = 1,
    Real = 2,
}

impl Kind {
    fn from_u8(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Kind::Complex),
            2 => Ok(Kind::Real),
            other => Err(Error::Container(format!("unknown kind {other}"))),
        }
    }

    fn entry_bytes(self) -> usize {
        match self {
            Kind::Complex => 16,
            Kind::Real => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixContainer {
    pub kind: Kind,
    pub rows: usize,
    pub cols: usize,
    pub label: Value,
    /// Row-major entries; imaginary parts are zero for real containers.
    pub data: Vec<C64>,
}

impl MatrixContainer {
    pub fn from_matrix(m: &Matrix, label: Value) -> Self {
        let (rows, cols) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(to_n(m.read(i, j)));
            }
        }
        MatrixContainer {
            kind: Kind::Complex,
            rows,
            cols,
            label,
            data,
        }
    }

    pub fn real(rows: usize, cols: usize, values: &[f64], label: Value) -> Result<Self> {
        if values.len()
            != rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Container("shape overflows".into()))?
        {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}×{cols} matrix",
                values.len()
            )));
        }
        Ok(MatrixContainer {
            kind: Kind::Real,
            rows,
            cols,
            label,
            data: values.iter().map(|v| C64::new(*v, 0.0)).collect(),
        })
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            to_f(self.data[i * self.cols + j])
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let label = serde_json::to_vec(&self.label).expect("JSON value serializes");
        let mut out = Vec::with_capacity(
            HEADER_LEN + label.len() + self.data.len() * self.kind.entry_bytes(),
        );
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.push(0);
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        out.extend_from_slice(&(label.len() as u32).to_le_bytes());
        out.extend_from_slice(&label);
        for z in &self.data {
            out.extend_from_slice(&z.re.to_le_bytes());
            if self.kind == Kind::Complex {
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a container, rejecting truncated, oversized or trailing input.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::Container(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(err("shorter than header"));
        }
        if bytes[0..4] != MAGIC {
            return Err(err("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let kind = Kind::from_u8(bytes[6])?;
        if bytes[7] != 0 {
            return Err(err("reserved byte set"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let rows = usize::try_from(u64_at(8)).map_err(|_| err("row count too large"))?;
        let cols = usize::try_from(u64_at(16)).map_err(|_| err("column count too large"))?;
        let label_len = u32::from_le_bytes(bytes[24..28].try_into().expect("4 bytes")) as usize;
        if label_len > MAX_LABEL_LEN {
            return Err(err("label too long"));
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() < label_len {
            return Err(err("truncated label"));
        }
        let label: Value = serde_json::from_slice(&body[..label_len])
            .map_err(|e| Error::Container(format!("label: {e}")))?;
        let payload = &body[label_len..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(kind.entry_bytes()))
            .ok_or_else(|| err("shape overflows"))?;
        if payload.len() != expected {
            return Err(Error::Container(format!(
                "payload has {} bytes, shape needs {expected}",
                payload.len()
            )));
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
        let data = payload
            .chunks_exact(kind.entry_bytes())
            .map(|c| match kind {
                Kind::Complex => C64::new(f(&c[..8]), f(&c[8..])),
                Kind::Real => C64::new(f(c), 0.0),
            })
            .collect();
        Ok(MatrixContainer {
            kind,
            rows,
            cols,
            label,
            data,
        })
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    /// One line per entry: `row,col,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,re,im\n");
        for (k, z) in self.data.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{:.17e},{:.17e}",
                k / self.cols.max(1),
                k % self.cols.max(1),
                z.re,
                z.im
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn sample() -> MatrixContainer {
        let m = Matrix::from_fn(3, 2, |i, j| to_f(C64::new(i as f64 + 0.5, -(j as f64))));
        MatrixContainer::from_matrix(&m, json!({"name": "U", "t1": 2.0}))
    }

    #[test]
    fn header_layout() {
        let b = sample().encode();
        assert_eq!(&b[..4], b"WFMX");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(b[6], 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 3);
        let label_len = u32::from_le_bytes(b[24..28].try_into().unwrap()) as usize;
        assert_eq!(b.len(), 28 + label_len + 6 * 16);
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let d = MatrixContainer::decode(&c.encode()).unwrap();
        assert_eq!(c, d);
        assert_eq!(d.to_matrix().read(2, 1), c.to_matrix().read(2, 1));
        let r = MatrixContainer::real(2, 2, &[1.0, 2.0, 3.0, 4.0], Value::Null).unwrap();
        assert_eq!(MatrixContainer::decode(&r.encode()).unwrap(), r);
    }

    #[test]
    fn rejects_malformed_input() {
        let good = sample().encode();
        assert!(MatrixContainer::decode(&good[..good.len() - 1]).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(MatrixContainer::decode(&trailing).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(MatrixContainer::decode(&bad_magic).is_err());
        let mut huge = good.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(MatrixContainer::decode(&huge).is_err());
        let mut kind = good;
        kind[6] = 9;
        assert!(MatrixContainer::decode(&kind).is_err());
    }

    #[test]
    fn csv_lists_every_entry() {
        let csv = sample().to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().nth(6).unwrap().starts_with("2,1,"));
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = MatrixContainer::decode(&bytes);
        }

        #[test]
        fn round_trip_random(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            let m = Matrix::from_fn(rows, cols, |i, j| to_f(C64::new((seed % 97) as f64 * i as f64, j as f64 - 1.5)));
            let c = MatrixContainer::from_matrix(&m, json!(seed));
            prop_assert_eq!(MatrixContainer::decode(&c.encode()).unwrap(), c);
        }
    }
}
