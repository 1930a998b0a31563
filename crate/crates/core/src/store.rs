//! File formats: FMAT feature matrices, LVEC label vectors, CSV import,
//! and the JSON model document.
//!
//! Binary layouts (all integers little-endian):
//!
//! ```text
//! FMAT:  magic "FMAT" | version u16 = 1 | dtype u8 (1 = f32, 2 = f64) |
//!        reserved u8 = 0 | rows u64 | cols u64 | rows*cols elements
//! LVEC:  magic "LVEC" | version u16 = 1 | reserved u16 = 0 |
//!        count u64 | num_classes u64 | count x u32 labels
//! ```
//!
//! Readers validate every header field and the exact payload length, so a
//! corrupted header can never produce a silently wrong matrix. Writers and
//! readers are pure functions; concurrent use on distinct paths is safe,
//! and a single path must not be written concurrently by multiple callers.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dtype, FeatureMatrix, LabelVector, LinearClassifier, ModelMetadata};

const FMAT_MAGIC: [u8; 4] = *b"FMAT";
const LVEC_MAGIC: [u8; 4] = *b"LVEC";
const FORMAT_VERSION: u16 = 1;
/// Fixed header size shared by both binary formats.
const HEADER_LEN: usize = 24;

pub fn write_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (rows, cols) = (m.rows(), m.cols());
    let elem = m.dtype().size_bytes();
    let mut buf = Vec::with_capacity(HEADER_LEN + rows * cols * elem);
    buf.extend_from_slice(&FMAT_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(match m.dtype() {
        Dtype::F32 => 1,
        Dtype::F64 => 2,
    });
    buf.push(0); // reserved
    buf.extend_from_slice(&(rows as u64).to_le_bytes());
    buf.extend_from_slice(&(cols as u64).to_le_bytes());
    // FeatureMatrix construction already rejects non-finite elements.
    match m.dtype() {
        Dtype::F32 => {
            for &v in m.as_array().iter() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in m.as_array().iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Length(format!(
            "{}: file shorter than the {HEADER_LEN}-byte header",
            path.display()
        )));
    }
    if bytes[0..4] != FMAT_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:02x?}, expected \"FMAT\"",
            path.display(),
            &bytes[0..4]
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let dtype = match bytes[6] {
        1 => Dtype::F32,
        2 => Dtype::F64,
        other => {
            return Err(Error::Format(format!(
                "{}: unknown dtype code {other}",
                path.display()
            )))
        }
    };
    if bytes[7] != 0 {
        return Err(Error::Format(format!(
            "{}: reserved header byte is {}, expected 0",
            path.display(),
            bytes[7]
        )));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(Error::Validation(format!(
            "{}: declared shape {rows}x{cols} must be at least 1x1",
            path.display()
        )));
    }
    let count = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .and_then(|n| n.checked_mul(dtype.size_bytes()))
        .ok_or_else(|| {
            Error::Length(format!(
                "{}: declared shape {rows}x{cols} overflows",
                path.display()
            ))
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count {
        return Err(Error::Length(format!(
            "{}: payload is {} bytes, header declares {count}",
            path.display(),
            payload.len()
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "{}: non-finite element at index {idx} (row {}, col {})",
            path.display(),
            idx / cols,
            idx % cols
        )));
    }
    let arr = Array2::from_shape_vec((rows, cols), data).expect("length checked");
    FeatureMatrix::with_dtype(arr, dtype)
}

pub fn write_labels(y: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if y.num_classes() < 2 {
        return Err(Error::Validation(format!(
            "label files require at least 2 classes, got {}",
            y.num_classes()
        )));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + y.len() * 4);
    buf.extend_from_slice(&LVEC_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes()); // reserved
    buf.extend_from_slice(&(y.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(y.num_classes() as u64).to_le_bytes());
    for &l in y.labels() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Length(format!(
            "{}: file shorter than the {HEADER_LEN}-byte header",
            path.display()
        )));
    }
    if bytes[0..4] != LVEC_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:02x?}, expected \"LVEC\"",
            path.display(),
            &bytes[0..4]
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
    if reserved != 0 {
        return Err(Error::Format(format!(
            "{}: reserved header field is {reserved}, expected 0",
            path.display()
        )));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let num_classes = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if count == 0 {
        return Err(Error::Validation(format!(
            "{}: label count must be at least 1",
            path.display()
        )));
    }
    if num_classes < 2 {
        return Err(Error::Validation(format!(
            "{}: num_classes {num_classes} must be at least 2",
            path.display()
        )));
    }
    let expected = count
        .checked_mul(4)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| {
            Error::Length(format!(
                "{}: declared count {count} overflows",
                path.display()
            ))
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Length(format!(
            "{}: payload is {} bytes, header declares {expected}",
            path.display(),
            payload.len()
        )));
    }
    let labels: Vec<u32> = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let num_classes = usize::try_from(num_classes).map_err(|_| {
        Error::Length(format!(
            "{}: num_classes {num_classes} overflows",
            path.display()
        ))
    })?;
    LabelVector::new(labels, num_classes)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Parse a comma-separated numeric file into an f64 feature matrix.
pub fn read_csv_features(path: impl AsRef<Path>, has_header: bool) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data: Vec<f64> = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        if has_header && line_idx == 0 {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match cols {
            None => cols = Some(cells.len()),
            Some(c) if c != cells.len() => {
                return Err(Error::Validation(format!(
                    "{}: line {line_no} has {} columns, expected {c}",
                    path.display(),
                    cells.len()
                )));
            }
            Some(_) => {}
        }
        for (col_idx, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Validation(format!(
                    "{}: non-numeric cell {:?} at row {}, col {}",
                    path.display(),
                    cell,
                    rows + 1,
                    col_idx + 1
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.filter(|&c| c > 0 && rows > 0).ok_or_else(|| {
        Error::Validation(format!("{}: no data rows", path.display()))
    })?;
    FeatureMatrix::from_vec(rows, cols, data)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// On-disk model document. JSON key-value tree, floats written with full
/// round-trip precision.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    num_classes: usize,
    dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    metadata: ModelMetadata,
}

pub fn write_model(c: &LinearClassifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = ModelFile {
        format_version: 1,
        num_classes: c.num_classes(),
        dim: c.dim(),
        weights: c
            .weights()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        bias: c.bias().to_vec(),
        metadata: c.metadata().clone(),
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Format(format!("model serialization failed: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<LinearClassifier> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ModelFile = serde_json::from_str(&text).map_err(|e| {
        Error::Format(format!("{}: invalid model document: {e}", path.display()))
    })?;
    if doc.format_version != 1 {
        return Err(Error::Format(format!(
            "{}: unsupported model format_version {}",
            path.display(),
            doc.format_version
        )));
    }
    if doc.weights.len() != doc.num_classes {
        return Err(Error::Validation(format!(
            "{}: {} weight rows, document declares {} classes",
            path.display(),
            doc.weights.len(),
            doc.num_classes
        )));
    }
    if let Some((k, row)) = doc
        .weights
        .iter()
        .enumerate()
        .find(|(_, row)| row.len() != doc.dim)
    {
        return Err(Error::Validation(format!(
            "{}: weight row {k} has length {}, document declares dim {}",
            path.display(),
            row.len(),
            doc.dim
        )));
    }
    if doc.bias.len() != doc.num_classes {
        return Err(Error::Validation(format!(
            "{}: bias length {}, document declares {} classes",
            path.display(),
            doc.bias.len(),
            doc.num_classes
        )));
    }
    let mut weights = Array2::zeros((doc.num_classes, doc.dim));
    for (k, row) in doc.weights.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            weights[[k, j]] = v;
        }
    }
    let bias = Array1::from_vec(doc.bias);
    LinearClassifier::new(weights, bias, doc.metadata)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}
