//! Feature and label files.
//!
//! Text layout: a `rows cols` header line, then one row per line with
//! space-separated decimal values. Values are written in Rust's shortest
//! round-trip form, so write-then-read is bitwise exact.
//!
//! Binary layout: `BFM1`, rows (u64 LE), cols (u64 LE), then row-major f64 LE.
//! The loader detects either layout by its first bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::MultimodalDataset;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::retrieval::LabelSet;

pub const MATRIX_MAGIC: &[u8; 4] = b"BFM1";

/// File names used when a dataset is stored in one directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub x: PathBuf,
    pub y: PathBuf,
    pub labels: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            x: dir.join("x.txt"),
            y: dir.join("y.txt"),
            labels: dir.join("labels.txt"),
        }
    }
}

fn format_text(m: &DenseMatrix, integral: bool) -> String {
    let mut s = String::with_capacity(m.rows() * m.cols() * 12 + 32);
    let _ = writeln!(s, "{} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                s.push(' ');
            }
            if integral {
                let _ = write!(s, "{}", *v as i64);
            } else {
                let _ = write!(s, "{v:?}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn save_matrix_text(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_text(m, false)).map_err(|e| Error::io(path, e))
}

fn save_labels(labels: &LabelSet, path: &Path) -> Result<()> {
    fs::write(path, format_text(&labels.to_matrix(), true)).map_err(|e| Error::io(path, e))
}

pub fn save_matrix_binary(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(20 + m.as_slice().len() * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MATRIX_MAGIC) {
        parse_binary(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| "not UTF-8 text and no BFM1 header".to_string());
        text.and_then(parse_text)
    }
    .map_err(|msg| Error::format(path, msg))
}

fn check_finite(data: &[f64], cols: usize) -> std::result::Result<(), String> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(format!(
            "non-finite value in row {} (column {})",
            pos / cols.max(1),
            pos % cols.max(1)
        )),
        None => Ok(()),
    }
}

fn parse_binary(bytes: &[u8]) -> std::result::Result<DenseMatrix, String> {
    if bytes.len() < 20 {
        return Err("truncated BFM1 header".into());
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    let expected = rows.checked_mul(cols).and_then(|n| n.checked_mul(8));
    if expected != Some(body.len()) {
        return Err(format!("payload of {} bytes does not hold {rows}x{cols} values", body.len()));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    check_finite(&data, cols)?;
    DenseMatrix::from_vec(rows, cols, data).map_err(|e| e.to_string())
}

fn parse_text(text: &str) -> std::result::Result<DenseMatrix, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty file")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("bad header {header:?}, expected \"rows cols\""))?;
    let [rows, cols] = dims[..] else {
        return Err(format!("bad header {header:?}, expected \"rows cols\""));
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (r, line) in lines.enumerate() {
        if r >= rows {
            return Err(format!("more than the {rows} declared rows"));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| format!("row {r}: cannot parse {tok:?}"))?;
            if !v.is_finite() {
                return Err(format!("non-finite value in row {r}"));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(format!("row {r} has {} values, expected {cols}", data.len() - before));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(format!("declared {rows} rows, found {seen}"));
    }
    DenseMatrix::from_vec(rows, cols, data).map_err(|e| e.to_string())
}

/// Loads three row-aligned files. Labels are a 0/1 matrix.
pub fn load_dataset(x_path: impl AsRef<Path>, y_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<MultimodalDataset> {
    let (xp, yp, lp) = (x_path.as_ref(), y_path.as_ref(), label_path.as_ref());
    let x = load_matrix(xp)?;
    let y = load_matrix(yp)?;
    let l = load_matrix(lp)?;
    if y.rows() != x.rows() {
        return Err(Error::format(yp, format!("{} rows, but {} has {}", y.rows(), xp.display(), x.rows())));
    }
    if l.rows() != x.rows() {
        return Err(Error::format(lp, format!("{} rows, but {} has {}", l.rows(), xp.display(), x.rows())));
    }
    let labels = LabelSet::from_matrix(&l).map_err(|e| Error::format(lp, e.to_string()))?;
    MultimodalDataset::new(x, y, labels)
}

/// Writes `x.txt`, `y.txt` and `labels.txt` into `dir`.
pub fn save_dataset(dataset: &MultimodalDataset, dir: impl AsRef<Path>) -> Result<DatasetPaths> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths::in_dir(dir);
    save_matrix_text(dataset.x(), &paths.x)?;
    save_matrix_text(dataset.y(), &paths.y)?;
    save_labels(dataset.labels(), &paths.labels)?;
    Ok(paths)
}
