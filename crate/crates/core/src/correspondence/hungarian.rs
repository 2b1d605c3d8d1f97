//! Rectangular linear assignment by shortest augmenting paths
//! (Hungarian method with row/column potentials, O(n²m)).

/// Minimum-cost assignment of every row of an `n × m` cost matrix
/// (`n ≤ m`, row-major) to a distinct column. Returns `col_of_row`.
pub fn solve_min(cost: &[f64], n: usize, m: usize) -> Vec<usize> {
    assert!(n <= m, "rows must not exceed columns");
    assert_eq!(cost.len(), n * m);
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    // 1-based potentials; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of_col = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if row_of_col[j] != 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Maximum-weight assignment for an arbitrary `rows × cols` weight matrix.
/// Returns `(row, col)` pairs, `min(rows, cols)` of them, sorted by row.
pub fn solve_max(weights: &[f64], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    assert_eq!(weights.len(), rows * cols);
    if rows <= cols {
        let cost: Vec<f64> = weights.iter().map(|w| -w).collect();
        solve_min(&cost, rows, cols).into_iter().enumerate().collect()
    } else {
        let mut cost = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                cost[j * rows + i] = -weights[i * cols + j];
            }
        }
        let mut pairs: Vec<(usize, usize)> = solve_min(&cost, cols, rows)
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}
