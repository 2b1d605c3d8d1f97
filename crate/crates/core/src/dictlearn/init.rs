//! Temporal atoms from an initial guess of the spatial maps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::project_columns_unit_ball;

/// Reciprocal condition number of `VᵀV` below which the min-norm
/// pseudo-inverse is used instead of the normal equations.
const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InitOutcome {
    /// rows × k_eff, columns inside the unit ball.
    pub atoms: DMatrix<f64>,
    /// Indices of the `V_init` columns that were kept (nonzero).
    pub kept_columns: Vec<usize>,
    /// `V_initᵀV_init` was singular and the min-norm solution was used.
    pub singular: bool,
}

/// Solves `min_{U_i} ‖X_i − U_i V_initᵀ‖₂` for every row `i` of `x`, after
/// dropping all-zero columns of `v_init`, then projects each atom onto the
/// unit ball.
pub fn init_temporal_atoms(x: &DMatrix<f64>, v_init: &DMatrix<f64>) -> Result<InitOutcome> {
    if v_init.nrows() != x.ncols() {
        return Err(Error::dim(format!(
            "initial maps have {} rows but the data has p = {}",
            v_init.nrows(),
            x.ncols()
        )));
    }
    let kept_columns: Vec<usize> = (0..v_init.ncols())
        .filter(|&j| v_init.column(j).iter().any(|&v| v != 0.0))
        .collect();
    if kept_columns.is_empty() {
        return Err(Error::Data("initial maps are all zero".into()));
    }
    let v = v_init.select_columns(&kept_columns);
    let xv = x * &v;
    let gram = v.tr_mul(&v);
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let singular = !(min > SINGULAR_RCOND * max);
    let mut atoms = if singular {
        // XV·(VᵀV)⁺ is the min-norm least-squares solution X·(Vᵀ)⁺.
        let pinv = gram
            .pseudo_inverse(SINGULAR_RCOND * max)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        xv * pinv
    } else {
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("normal equations not positive definite".into()))?;
        chol.solve(&xv.transpose()).transpose()
    };
    project_columns_unit_ball(&mut atoms);
    Ok(InitOutcome {
        atoms,
        kept_columns,
        singular,
    })
}
