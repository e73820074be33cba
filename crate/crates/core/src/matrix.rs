//! Dense row-major matrices over `Z_p` and plain `f64` matrices.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::field::PrimeField;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Mismatch { expected: usize, got: usize },
    #[error("matrix data has {got} entries, expected {rows}x{cols}")]
    BadData { rows: usize, cols: usize, got: usize },
    #[error("matrix dimensions must be positive")]
    Empty,
    #[error("entry {value} is not a residue modulo {modulus}")]
    OutOfRange { value: u64, modulus: u64 },
}

/// A `rows x cols` matrix of residues, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Wraps row-major residues, validating shape and range.
    pub fn from_rows(
        field: &PrimeField,
        rows: usize,
        cols: usize,
        data: Vec<u64>,
    ) -> Result<Self, ShapeError> {
        if rows == 0 || cols == 0 {
            return Err(ShapeError::Empty);
        }
        if data.len() != rows * cols {
            return Err(ShapeError::BadData {
                rows,
                cols,
                got: data.len(),
            });
        }
        if let Some(&value) = data.iter().find(|&&e| !field.contains(e)) {
            return Err(ShapeError::OutOfRange {
                value,
                modulus: field.modulus(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn random<R: Rng + ?Sized>(field: &PrimeField, rows: usize, cols: usize, rng: &mut R) -> Self {
        let p = field.modulus();
        let data = (0..rows * cols).map(|_| rng.random_range(0..p)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&e| e == 0)
    }

    /// `y = W·x mod p`.
    pub fn matvec(&self, field: &PrimeField, x: &[u64]) -> Result<Vec<u64>, ShapeError> {
        if x.len() != self.cols {
            return Err(ShapeError::Mismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|r| field.dot(self.row(r), x)).collect())
    }

    /// `self · other mod p`.
    pub fn matmul(&self, field: &PrimeField, other: &FieldMatrix) -> Result<FieldMatrix, ShapeError> {
        if other.rows != self.cols {
            return Err(ShapeError::Mismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let t = other.transpose();
        let mut out = FieldMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                out.data[r * other.cols + c] = field.dot(self.row(r), t.row(c));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> FieldMatrix {
        let mut out = FieldMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Entrywise `self + other mod p`.
    pub fn add(&self, field: &PrimeField, other: &FieldMatrix) -> Result<FieldMatrix, ShapeError> {
        self.zip_with(other, |a, b| field.add(a, b))
    }

    /// Entrywise `self - other mod p`.
    pub fn sub(&self, field: &PrimeField, other: &FieldMatrix) -> Result<FieldMatrix, ShapeError> {
        self.zip_with(other, |a, b| field.sub(a, b))
    }

    fn zip_with(&self, other: &FieldMatrix, f: impl Fn(u64, u64) -> u64) -> Result<FieldMatrix, ShapeError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(ShapeError::Mismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(FieldMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

/// Entrywise `a + b mod p` for vectors of equal length.
pub fn vec_add(field: &PrimeField, a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| field.add(x, y)).collect()
}

/// Entrywise `a - b mod p` for vectors of equal length.
pub fn vec_sub(field: &PrimeField, a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| field.sub(x, y)).collect()
}

pub fn random_vector<R: Rng + ?Sized>(field: &PrimeField, len: usize, rng: &mut R) -> Vec<u64> {
    let p = field.modulus();
    (0..len).map(|_| rng.random_range(0..p)).collect()
}

/// A dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if rows == 0 || cols == 0 {
            return Err(ShapeError::Empty);
        }
        if data.len() != rows * cols {
            return Err(ShapeError::BadData {
                rows,
                cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_nested(rows: &[&[f64]]) -> Result<Self, ShapeError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(ShapeError::Mismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_rows(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, ShapeError> {
        if x.len() != self.cols {
            return Err(ShapeError::Mismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix, ShapeError> {
        if other.rows != self.cols {
            return Err(ShapeError::Mismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &RealMatrix) -> Result<RealMatrix, ShapeError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(ShapeError::Mismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, libm::fabs(*v)))
    }
}
