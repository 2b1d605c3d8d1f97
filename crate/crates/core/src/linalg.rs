//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Thin orthonormal factor of `m` (rows >= cols) via Householder QR.
pub fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    debug_assert!(m.nrows() >= m.ncols());
    m.qr().q()
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    // Filled column-major so the draw order is part of the contract.
    let mut out = DMatrix::zeros(rows, cols);
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    out
}

pub fn fro_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn l1(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// `‖MᵀM − I‖_F`.
pub fn gram_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let eye = DMatrix::<f64>::identity(g.nrows(), g.ncols());
    (g - eye).norm()
}

pub fn column_norms(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.norm()))
}

/// Scales each column onto the unit ball: `u_j / max(1, ‖u_j‖)`.
pub fn project_columns_unit_ball(m: &mut DMatrix<f64>) {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > 1.0 {
            c /= n;
        }
    }
}
