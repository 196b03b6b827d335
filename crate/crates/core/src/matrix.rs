//! Dense row-major matrices and the `HCF1` interchange file format.
//!
//! Layout on disk, all little-endian:
//!
//! | offset | size          | content                 |
//! |--------|---------------|-------------------------|
//! | 0      | 4             | magic `HCF1`            |
//! | 4      | 4             | rows (`u32`)            |
//! | 8      | 4             | cols (`u32`)            |
//! | 12     | rows·cols·4   | `f32` payload, row-major |
//!
//! `f64` matrices are narrowed with round-to-nearest (`as f32`) on write.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"HCF1";
pub const HEADER_LEN: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            data.extend((0..self.rows).map(|r| self.get(r, c)));
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Serializes `m` into the `HCF1` byte layout.
pub fn encode_matrix<T: Real>(m: &Matrix<T>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows).map_err(|_| Error::Shape("row count exceeds u32".into()))?;
    let cols =
        u32::try_from(m.cols).map_err(|_| Error::Shape("column count exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for (i, &v) in m.data.iter().enumerate() {
        let narrowed = v.to_f32().unwrap_or(f32::NAN);
        if !narrowed.is_finite() {
            return Err(Error::Validation(format!(
                "entry ({}, {}) = {v} is not finite in f32",
                i / m.cols.max(1),
                i % m.cols.max(1)
            )));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    Ok(out)
}

/// Parses an `HCF1` byte buffer.
pub fn decode_matrix<T: Real>(bytes: &[u8]) -> Result<Matrix<T>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(
            bytes.len() as u64,
            format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::parse(
            0,
            format!(
                "bad magic {:?}, expected \"HCF1\"",
                String::from_utf8_lossy(&bytes[0..4])
            ),
        ));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = (rows as u64) * (cols as u64) * 4;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if expected != actual {
        return Err(Error::parse(
            HEADER_LEN as u64,
            format!("payload for {rows}x{cols} needs {expected} bytes, found {actual}"),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::parse(
                (HEADER_LEN + 4 * i) as u64,
                format!("non-finite entry {v} at ({}, {})", i / cols, i % cols),
            ));
        }
        data.push(T::from_f32(v).expect("f32 converts"));
    }
    Matrix::new(rows, cols, data)
}

pub fn write_matrix<T: Real>(m: &Matrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(m)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix<T: Real>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}
