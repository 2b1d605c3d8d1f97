//! Time-compressed dictionary learning.
//!
//! Per-record randomized compression of tall (time × voxel) datasets,
//! online sparse dictionary learning on the concatenated records, and a
//! permutation-invariant correspondence metric to compare decompositions of
//! compressed and raw data.

pub mod bench;
pub mod correspondence;
pub mod cputime;
pub mod data;
pub mod dictlearn;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metadata;
pub mod reduction;
pub mod rng;
pub mod synth;

pub use data::{concatenate, Dataset, RecordMatrix};
pub use error::{Error, Result};
pub use rng::RngSpec;
