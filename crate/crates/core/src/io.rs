//! Binary containers for datasets and single matrices.
//!
//! Both formats are little-endian with row-major `f64` payloads:
//!
//! ```text
//! dataset: "TCDL0001" | u32 record_count | u32 p
//!          | per record: u32 id_len | id (UTF-8) | u32 n_s | n_s*p f64
//! matrix:  "TCDM0001" | u32 rows | u32 cols | rows*cols f64
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{Dataset, RecordMatrix};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"TCDL0001";
pub const MATRIX_MAGIC: &[u8; 8] = b"TCDM0001";

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::dim(format!("{what} = {v} does not fit in u32")))
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_rows(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    buf.reserve(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.is_empty() {
        return Err(Error::dim("refusing to write a dataset with no records"));
    }
    let mut buf = Vec::with_capacity(16 + ds.total_rows() * ds.p() * 8);
    buf.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut buf, to_u32(ds.len(), "record_count")?);
    put_u32(&mut buf, to_u32(ds.p(), "p")?);
    for r in ds.records() {
        let id = r.record_id().as_bytes();
        put_u32(&mut buf, to_u32(id.len(), "id_len")?);
        buf.extend_from_slice(id);
        put_u32(&mut buf, to_u32(r.n_samples(), "n_s")?);
        put_rows(&mut buf, r.data());
    }
    Ok(buf)
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(16 + m.len() * 8);
    buf.extend_from_slice(MATRIX_MAGIC);
    put_u32(&mut buf, to_u32(m.nrows(), "rows")?);
    put_u32(&mut buf, to_u32(m.ncols(), "cols")?);
    put_rows(&mut buf, m);
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(Error::format(
                self.offset(),
                format!("truncated file: {what} needs {n} bytes, {remaining} remain"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let got = self.take(8, "magic")?;
        if got != expected {
            return Err(Error::format(
                0,
                format!(
                    "bad magic: expected {:?}, found {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(got)
                ),
            ));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        let start = self.offset();
        let n_bytes = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format(start, format!("{what}: {rows}x{cols} overflows")))?;
        let raw = self.take(n_bytes, what)?;
        let mut vals = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        Ok(DMatrix::from_row_iterator(rows, cols, &mut vals))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.offset(),
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut rd = Reader { bytes, pos: 0 };
    rd.magic(DATASET_MAGIC)?;
    let count = rd.u32("record_count")? as usize;
    let p = rd.u32("p")? as usize;
    if count == 0 || p == 0 {
        return Err(Error::format(8, format!("record_count={count}, p={p}; both must be >= 1")));
    }
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for idx in 0..count {
        let id_len = rd.u32("id_len")? as usize;
        let id_off = rd.offset();
        let id = std::str::from_utf8(rd.take(id_len, "record id")?)
            .map_err(|e| Error::format(id_off, format!("record {idx} id is not UTF-8: {e}")))?
            .to_owned();
        let n_off = rd.offset();
        let n_s = rd.u32("n_s")? as usize;
        if n_s == 0 {
            return Err(Error::format(n_off, format!("record {id} has n_s = 0")));
        }
        let data_off = rd.offset();
        let data = rd.matrix(n_s, p, "record values")?;
        let rec = RecordMatrix::new(id, data).map_err(|e| Error::format(data_off, e.to_string()))?;
        records.push(rec);
    }
    rd.finish()?;
    Dataset::new(records)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let mut rd = Reader { bytes, pos: 0 };
    rd.magic(MATRIX_MAGIC)?;
    let rows = rd.u32("rows")? as usize;
    let cols = rd.u32("cols")? as usize;
    let m = rd.matrix(rows, cols, "matrix values")?;
    rd.finish()?;
    Ok(m)
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

pub fn write_matrix(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_matrix(m)?)?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    decode_matrix(&fs::read(path)?)
}
