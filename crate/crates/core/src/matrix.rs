//! Frame-level feature matrices and their on-disk encodings.
//!
//! Two encodings are understood:
//!
//! * **EMB1** (default): the ASCII magic `EMB1`, then `rows` and `dim` as
//!   little-endian `u32`, then `rows * dim` little-endian IEEE-754 `f32`
//!   values in row-major order.
//! * **CSV**: one row per line, comma-separated decimals. Selected purely by
//!   a `.csv` file extension.
//!
//! Values are stored as 32-bit floats on disk and widened to `f64` in memory.
//! Widening is exact, so reading and re-writing a file reproduces its bytes.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic (expected \"EMB1\")")]
    BadMagic { path: PathBuf },
    #[error("{path}: truncated payload: header declares {rows}x{dim} = {expected} values, found {found}")]
    Truncated {
        path: PathBuf,
        rows: u32,
        dim: u32,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {trailing} trailing bytes after payload")]
    TrailingBytes { path: PathBuf, trailing: usize },
    #[error("{path}: non-finite value at row {row}, column {col}")]
    NonFinite { path: PathBuf, row: usize, col: usize },
    #[error("{path}: line {line}: {msg}")]
    Csv {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid matrix shape: {0}")]
    Shape(String),
}

/// Dense row-major `rows x dim` matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self, MatrixError> {
        if dim == 0 {
            return Err(MatrixError::Shape("dim must be at least 1".into()));
        }
        if rows.checked_mul(dim) != Some(values.len()) {
            return Err(MatrixError::Shape(format!(
                "{rows}x{dim} does not match {} values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::Shape(format!(
                "non-finite value at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { rows, dim, values })
    }

    /// A single-row matrix, the shape of a pooled session vector.
    pub fn from_row(row: Vec<f64>) -> Result<Self, MatrixError> {
        let dim = row.len();
        Self::new(1, dim, row)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(MatrixError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a feature file, choosing the encoding from the extension.
pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix, MatrixError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|_| MatrixError::Csv {
            path: path.to_path_buf(),
            line: 0,
            msg: "not valid UTF-8".into(),
        })?;
        parse_csv(path, &text)
    } else {
        decode_emb1(path, &bytes)
    }
}

/// Writes a feature file, choosing the encoding from the extension.
pub fn write_feature_matrix(path: impl AsRef<Path>, m: &FeatureMatrix) -> Result<(), MatrixError> {
    let path = path.as_ref();
    let io_err = |source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = if is_csv(path) {
        encode_csv(m).into_bytes()
    } else {
        encode_emb1(m).map_err(|msg| MatrixError::Shape(format!("{}: {msg}", path.display())))?
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&bytes).map_err(io_err)
}

/// Reads only the EMB1 header and checks the file length against it.
pub fn probe_emb1(path: impl AsRef<Path>) -> Result<(u32, u32), MatrixError> {
    let path = path.as_ref();
    let io_err = |source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::open(path).map_err(io_err)?;
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        let n = f.read(&mut header[got..]).map_err(io_err)?;
        if n == 0 {
            break;
        }
        got += n;
    }
    if got < 4 || &header[..4] != EMB1_MAGIC {
        return Err(MatrixError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if got < HEADER_LEN {
        return Err(MatrixError::Truncated {
            path: path.to_path_buf(),
            rows: 0,
            dim: 0,
            expected: 0,
            found: 0,
        });
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let len = f.metadata().map_err(io_err)?.len() as usize;
    let expected = rows as usize * dim as usize;
    let found = len.saturating_sub(HEADER_LEN) / 4;
    if found < expected {
        return Err(MatrixError::Truncated {
            path: path.to_path_buf(),
            rows,
            dim,
            expected,
            found,
        });
    }
    Ok((rows, dim))
}

pub fn encode_emb1(m: &FeatureMatrix) -> Result<Vec<u8>, String> {
    let rows = u32::try_from(m.rows).map_err(|_| "row count exceeds u32".to_string())?;
    let dim = u32::try_from(m.dim).map_err(|_| "dim exceeds u32".to_string())?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.values.len());
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for (i, &v) in m.values.iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(format!(
                "value at row {}, column {} overflows f32",
                i / m.dim,
                i % m.dim
            ));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_emb1(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix, MatrixError> {
    if bytes.len() < 4 || &bytes[..4] != EMB1_MAGIC {
        return Err(MatrixError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(MatrixError::Truncated {
            path: path.to_path_buf(),
            rows: 0,
            dim: 0,
            expected: 0,
            found: 0,
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let expected = rows as usize * dim as usize;
    let found = payload.len() / 4;
    if found < expected {
        return Err(MatrixError::Truncated {
            path: path.to_path_buf(),
            rows,
            dim,
            expected,
            found,
        });
    }
    if payload.len() != expected * 4 {
        return Err(MatrixError::TrailingBytes {
            path: path.to_path_buf(),
            trailing: payload.len() - expected * 4,
        });
    }
    if dim == 0 {
        return Err(MatrixError::Shape(format!("{}: dim is zero", path.display())));
    }
    let mut values = Vec::with_capacity(expected);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(MatrixError::NonFinite {
                path: path.to_path_buf(),
                row: i / dim as usize,
                col: i % dim as usize,
            });
        }
        values.push(f64::from(v));
    }
    Ok(FeatureMatrix {
        rows: rows as usize,
        dim: dim as usize,
        values,
    })
}

fn parse_csv(path: &Path, text: &str) -> Result<FeatureMatrix, MatrixError> {
    let csv_err = |line: usize, msg: String| MatrixError::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| csv_err(line_no, format!("not a number: {:?}", cell.trim())))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(csv_err(line_no, "non-finite value".into()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(csv_err(
                    line_no,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(csv_err(0, "no rows".into()));
    }
    FeatureMatrix::from_rows(&rows)
}

fn encode_csv(m: &FeatureMatrix) -> String {
    let mut out = String::new();
    for row in m.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
