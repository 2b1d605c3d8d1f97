//! Block coordinate descent on the online surrogate.
//!
//! The surrogate after `t` columns is `½Tr(UᵀU A) − Tr(UᵀB)` with
//! `A = Σ v vᵀ` and `B = Σ x vᵀ`; one cycle updates every atom in turn and
//! projects it back onto the unit ball.

use nalgebra::DMatrix;

use crate::linalg::fro_sq;

/// Diagonal guard below which an atom counts as dead for the cycle.
pub const DEAD_ATOM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DlState {
    pub dictionary: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub columns_seen: usize,
    pub dead_atom_events: usize,
}

impl DlState {
    pub fn new(dictionary: DMatrix<f64>) -> Self {
        let (rows, k) = dictionary.shape();
        Self {
            dictionary,
            a: DMatrix::zeros(k, k),
            b: DMatrix::zeros(rows, k),
            columns_seen: 0,
            dead_atom_events: 0,
        }
    }

    /// Adds a batch: `codes` is k × b, `columns` is rows × b.
    pub fn accumulate(&mut self, columns: &DMatrix<f64>, codes: &DMatrix<f64>) {
        self.a.gemm(1.0, codes, &codes.transpose(), 1.0);
        self.b.gemm(1.0, columns, &codes.transpose(), 1.0);
        self.columns_seen += columns.ncols();
    }

    /// One full update cycle; returns the number of atoms skipped as dead.
    pub fn update(&mut self) -> usize {
        let dead = dictionary_update(&mut self.dictionary, &self.a, &self.b);
        self.dead_atom_events += dead;
        dead
    }

    /// Largest asymmetry and most negative eigenvalue of `A`.
    pub fn check_statistics(&self) -> (f64, f64) {
        let asym = (&self.a - self.a.transpose()).amax();
        let sym = (&self.a + self.a.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        (asym, min_eig)
    }
}

pub fn surrogate_value(u: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let utu = u.tr_mul(u);
    0.5 * utu.component_mul(a).sum() - u.component_mul(b).sum()
}

/// `u_j ← u_j + (B_j − U A_j)/A_jj`, then `u_j ← u_j / max(1, ‖u_j‖)`, for
/// every atom with `A_jj ≥ ε`. Returns the count of skipped (dead) atoms.
pub fn dictionary_update(u: &mut DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let k = u.ncols();
    let mut dead = 0;
    for j in 0..k {
        let ajj = a[(j, j)];
        if ajj < DEAD_ATOM_EPS {
            dead += 1;
            continue;
        }
        let mut step = b.column(j).into_owned();
        step.gemv(-1.0, u, &a.column(j), 1.0);
        let mut col = u.column_mut(j);
        col.axpy(1.0 / ajj, &step, 1.0);
        let n = col.norm();
        if n > 1.0 {
            col /= n;
        }
    }
    dead
}

/// Repeats update cycles until the relative surrogate decrease falls below
/// `tol` or `max_cycles` is reached. Returns the cycles used.
pub fn minimize_surrogate(
    u: &mut DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    tol: f64,
    max_cycles: usize,
) -> usize {
    let mut prev = surrogate_value(u, a, b);
    for cycle in 1..=max_cycles {
        dictionary_update(u, a, b);
        let cur = surrogate_value(u, a, b);
        if (prev - cur).abs() <= tol * prev.abs().max(fro_sq(b).sqrt()) {
            return cycle;
        }
        prev = cur;
    }
    max_cycles
}
