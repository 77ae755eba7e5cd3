//! File formats: the binary tensor container and plain CSV matrices.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! b"PMTC" | version: u32 | order: u32 | dims: u64 x order | data: f64 x prod(dims)
//! ```
//!
//! Data follows the in-memory order of [`DenseTensor`]: first index fastest.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{PmtcError, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"PMTC";
pub const FORMAT_VERSION: u32 = 1;
/// Guards against allocating absurd buffers from a corrupted header.
const MAX_ORDER: u32 = 64;

pub fn write_tensor<W: Write>(t: &DenseTensor, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &d in t.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => PmtcError::Format("truncated tensor file".into()),
        _ => PmtcError::Io(e),
    })?;
    Ok(b)
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<DenseTensor> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(PmtcError::Format("not a PMTC tensor file".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(PmtcError::Format(format!("unsupported tensor format version {version}")));
    }
    let order = u32::from_le_bytes(read_array(&mut r)?);
    if order == 0 || order > MAX_ORDER {
        return Err(PmtcError::Format(format!("invalid tensor order {order}")));
    }
    let mut dims = Vec::with_capacity(order as usize);
    let mut len: usize = 1;
    for _ in 0..order {
        let d = u64::from_le_bytes(read_array(&mut r)?);
        let d = usize::try_from(d).map_err(|_| PmtcError::Format("dimension overflows usize".into()))?;
        len = len.checked_mul(d).ok_or_else(|| PmtcError::Format("tensor size overflows".into()))?;
        dims.push(d);
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(PmtcError::Format(format!("expected {} data bytes, found {}", len * 8, bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    DenseTensor::from_vec(&dims, data)
}

fn parse_cell(s: &str, row: usize, col: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| PmtcError::Format(format!("row {row}, column {col}: {s:?} is not a number")))
}

/// Reads a row-major numeric CSV. A first row that does not parse as
/// numbers is taken as a header and skipped.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>> = rec.iter().enumerate().map(|(j, s)| parse_cell(s, i + 1, j + 1)).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(e),
        }
    }
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || ncols == 0 {
        return Err(PmtcError::Format("empty matrix file".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(PmtcError::Format(format!("row {} has {} columns, expected {ncols}", bad + 1, rows[bad].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a matrix row-major, with an optional header row.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, header: Option<&[String]>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if let Some(h) = header {
        if h.len() != m.ncols() {
            return Err(PmtcError::ShapeMismatch(format!("{} header names for {} columns", h.len(), m.ncols())));
        }
        wr.write_record(h)?;
    }
    for row in m.row_iter() {
        wr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a single numeric series, either one column or one row.
pub fn read_vector_csv<R: Read>(r: R) -> Result<DVector<f64>> {
    let m = read_matrix_csv(r)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (a, b) => Err(PmtcError::ShapeMismatch(format!("expected a single series, found {a}x{b}"))),
    }
}
