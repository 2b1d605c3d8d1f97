//! Lasso sparse coding by cyclic coordinate descent.
//!
//! Solves `min_v ‖x − U v‖₂² + λ‖v‖₁` in Gram form: only `G = UᵀU` and
//! `c = Uᵀx` are needed, so a batch of columns shares one `G`.

use nalgebra::{DMatrix, DVector, DVectorView};

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOutcome {
    pub code: DVector<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Worst KKT violation of `v` for the problem defined by `(gram, c, λ)`.
///
/// With `g_j = 2(c_j − (G v)_j)`: active coordinates need
/// `|g_j − λ·sign(v_j)| = 0`, inactive ones `|g_j| ≤ λ`.
pub fn kkt_violation(gram: &DMatrix<f64>, c: &[f64], v: &[f64], lambda: f64) -> f64 {
    let k = c.len();
    let mut worst: f64 = 0.0;
    for j in 0..k {
        let mut gv = 0.0;
        for i in 0..k {
            gv += gram[(j, i)] * v[i];
        }
        let g = 2.0 * (c[j] - gv);
        let viol = if v[j] != 0.0 {
            (g - lambda * v[j].signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(viol);
    }
    worst
}

/// Coordinate descent from `v` (used as warm start, zeroed by callers that
/// want a cold start). Returns `(converged, sweeps)`.
pub fn lasso_gram(
    gram: &DMatrix<f64>,
    c: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
    v: &mut [f64],
) -> (bool, usize) {
    let k = c.len();
    let half = 0.5 * lambda;
    if kkt_violation(gram, c, v, lambda) <= tol {
        return (true, 0);
    }
    for sweep in 1..=max_iter {
        for j in 0..k {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                v[j] = 0.0;
                continue;
            }
            let mut r = c[j];
            for i in 0..k {
                if i != j {
                    r -= gram[(j, i)] * v[i];
                }
            }
            v[j] = soft_threshold(r, half) / gjj;
        }
        if kkt_violation(gram, c, v, lambda) <= tol {
            return (true, sweep);
        }
    }
    (false, max_iter)
}

/// Sparse code of one column `x` against dictionary `u` (rows × k).
pub fn lasso_code(
    x: DVectorView<'_, f64>,
    u: &DMatrix<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> LassoOutcome {
    let gram = u.tr_mul(u);
    let c = u.tr_mul(&x);
    let mut v = vec![0.0; u.ncols()];
    let (converged, sweeps) = lasso_gram(&gram, c.as_slice(), lambda, tol, max_iter, &mut v);
    LassoOutcome {
        code: DVector::from_vec(v),
        converged,
        sweeps,
    }
}

pub fn lasso_objective(x: DVectorView<'_, f64>, u: &DMatrix<f64>, v: &DVector<f64>, lambda: f64) -> f64 {
    (x - u * v).norm_squared() + lambda * v.lp_norm(1)
}
