//! Record and dataset containers.
//!
//! Rows are time samples and columns are voxels throughout the crate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One record (subject session): `n_s` time samples by `p` voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordMatrix {
    record_id: String,
    data: DMatrix<f64>,
}

impl RecordMatrix {
    pub fn new(record_id: impl Into<String>, data: DMatrix<f64>) -> Result<Self> {
        let record_id = record_id.into();
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::dim(format!(
                "record {record_id} has shape {}x{}; both dimensions must be >= 1",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "record {record_id} has a non-finite entry at column-major index {pos}"
            )));
        }
        Ok(Self { record_id, data })
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.data.ncols()
    }
}

/// Ordered collection of records sharing a voxel count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<RecordMatrix>,
    p: usize,
}

impl Dataset {
    pub fn new(records: Vec<RecordMatrix>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::dim("a dataset needs at least one record"))?;
        let p = first.n_voxels();
        for r in &records {
            if r.n_voxels() != p {
                return Err(Error::dim(format!(
                    "record {} has p={} but record {} has p={p}",
                    r.record_id(),
                    r.n_voxels(),
                    first.record_id()
                )));
            }
        }
        Ok(Self { records, p })
    }

    pub fn records(&self) -> &[RecordMatrix] {
        &self.records
    }

    pub fn into_records(self) -> Vec<RecordMatrix> {
        self.records
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_rows(&self) -> usize {
        self.records.iter().map(RecordMatrix::n_samples).sum()
    }

    /// Row count of each record, in order.
    pub fn row_partition(&self) -> Vec<usize> {
        self.records.iter().map(RecordMatrix::n_samples).collect()
    }

    /// Vertical concatenation `[X^1; X^2; ...]` in record order.
    pub fn concatenate(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.total_rows(), self.p);
        let mut row = 0;
        for r in &self.records {
            let n = r.n_samples();
            out.rows_mut(row, n).copy_from(r.data());
            row += n;
        }
        out
    }
}

/// Free-function form of [`Dataset::concatenate`].
pub fn concatenate(ds: &Dataset) -> DMatrix<f64> {
    ds.concatenate()
}
