use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{MetricKind, Result, SetDistError};

pub const MATRIX_MAGIC: &[u8; 8] = b"EMAPDM1\0";
pub const MATRIX_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 1 + 8;
const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Dense symmetric `n x n` matrix of sentence distances.
///
/// On disk: the 8 magic bytes, `u32` version, `u8` metric code, `u64` n,
/// then `n * n` row-major `f64` values, all little-endian.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    kind: MetricKind,
}

impl DistanceMatrix {
    /// Wraps row-major values, checking the matrix invariants.
    pub fn new(n: usize, values: Vec<f64>, kind: MetricKind) -> Result<Self> {
        if values.len() != n * n {
            return Err(SetDistError::InvalidMatrix(format!(
                "{} values for a {n}x{n} matrix",
                values.len()
            )));
        }
        let matrix = DistanceMatrix { n, values, kind };
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Checks symmetry within 1e-9, a zero diagonal, and finite non-negative entries.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(SetDistError::InvalidMatrix(format!(
                    "diagonal entry {i} is {}",
                    self.get(i, i)
                )));
            }
            for j in 0..n {
                let d = self.get(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(SetDistError::InvalidMatrix(format!(
                        "entry ({i}, {j}) is {d}"
                    )));
                }
                if j > i && (d - self.get(j, i)).abs() > SYMMETRY_TOLERANCE {
                    return Err(SetDistError::InvalidMatrix(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Keeps the rows and columns listed in `indices`, in that order.
    pub fn submatrix(&self, indices: &[usize]) -> Result<DistanceMatrix> {
        let values = indices
            .iter()
            .flat_map(|&i| indices.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        DistanceMatrix::new(indices.len(), values, self.kind)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(MATRIX_MAGIC)?;
        writer.write_all(&MATRIX_VERSION.to_le_bytes())?;
        writer.write_all(&[self.kind.code()])?;
        writer.write_all(&(self.n as u64).to_le_bytes())?;
        for value in &self.values {
            writer.write_all(&value.to_le_bytes())?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<DistanceMatrix> {
        let corrupt = |msg: &str| SetDistError::CorruptMatrix(msg.to_owned());
        let mut header = [0u8; HEADER_LEN];
        reader
            .read_exact(&mut header)
            .map_err(|_| corrupt("truncated header"))?;
        if &header[..8] != MATRIX_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != MATRIX_VERSION {
            return Err(SetDistError::CorruptMatrix(format!(
                "unsupported version {version}"
            )));
        }
        let kind = MetricKind::from_code(header[12]).ok_or_else(|| {
            SetDistError::CorruptMatrix(format!("unknown metric code {}", header[12]))
        })?;
        let n = u64::from_le_bytes(header[13..21].try_into().unwrap());
        let count = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(n))
            .filter(|c| c.checked_mul(8).is_some())
            .ok_or_else(|| corrupt("matrix size overflows"))?;

        let mut body = Vec::new();
        reader.read_to_end(&mut body)?;
        if body.len() != count * 8 {
            return Err(SetDistError::CorruptMatrix(format!(
                "expected {} bytes of values, found {}",
                count * 8,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|chunk| f64::from_le_bytes(chunk.try_into().unwrap()))
            .collect();
        DistanceMatrix::new(n as usize, values, kind)
            .map_err(|e| SetDistError::CorruptMatrix(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<DistanceMatrix> {
        DistanceMatrix::read_from(BufReader::new(File::open(path)?))
    }
}
