//! Minimum-cost assignment (Hungarian algorithm) and the max-cardinality
//! matching variant used for gated association.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("cost matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Dense rows x cols cost matrix.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> CostMatrix {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CostMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Minimum-cost assignment on a dense matrix of finite costs.
///
/// Every row of the smaller side is matched; the result maps each row to
/// its column (None for rows left over when rows > cols). The total cost of
/// the matched pairs is minimal over all such assignments.
pub fn min_cost_assignment(cost: &CostMatrix) -> Result<Vec<Option<usize>>, AssignError> {
    for i in 0..cost.rows {
        for j in 0..cost.cols {
            if !cost.get(i, j).is_finite() {
                return Err(AssignError::NonFinite { row: i, col: j });
            }
        }
    }
    if cost.rows == 0 || cost.cols == 0 {
        return Ok(vec![None; cost.rows]);
    }
    if cost.rows <= cost.cols {
        Ok(
            solve_rows_leq_cols(cost.rows, cost.cols, |i, j| cost.get(i, j))
                .into_iter()
                .map(Some)
                .collect(),
        )
    } else {
        // Transpose, solve, invert the mapping.
        let col_to_row = solve_rows_leq_cols(cost.cols, cost.rows, |i, j| cost.get(j, i));
        let mut out = vec![None; cost.rows];
        for (col, row) in col_to_row.into_iter().enumerate() {
            out[row] = Some(col);
        }
        Ok(out)
    }
}

/// Shortest-augmenting-path Hungarian with dual potentials, for n <= m.
/// Returns the matched column for every row. O(n^2 m).
fn solve_rows_leq_cols(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based with a sentinel column 0, classic potentials formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut matched_row = vec![0usize; m + 1]; // row matched to column j, 0 = free
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Unwind the augmenting path.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if matched_row[j] != 0 {
            row_to_col[matched_row[j] - 1] = j - 1;
        }
    }
    debug_assert!(row_to_col.iter().all(|&c| c != usize::MAX));
    row_to_col
}

/// Matching that first maximizes the number of matched pairs and then
/// minimizes the total cost among max-cardinality matchings. `cost` returns
/// None for forbidden pairs. Pairs are returned sorted by row index.
pub fn max_cardinality_min_cost(
    rows: usize,
    cols: usize,
    cost: impl Fn(usize, usize) -> Option<f64>,
) -> Result<Vec<(usize, usize)>, AssignError> {
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    let mut max_abs = 0.0f64;
    let mut table = vec![None; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            if let Some(c) = cost(i, j) {
                if !c.is_finite() {
                    return Err(AssignError::NonFinite { row: i, col: j });
                }
                max_abs = max_abs.max(c.abs());
                table[i * cols + j] = Some(c);
            }
        }
    }
    // Padding cost dominating any feasible total, so the solver uses as few
    // padded edges as possible: cardinality first, then cost.
    let side = rows.max(cols);
    let big = (max_abs + 1.0) * (side as f64 + 1.0);
    let padded = CostMatrix::from_fn(side, side, |i, j| {
        if i < rows && j < cols {
            table[i * cols + j].unwrap_or(big)
        } else {
            big
        }
    });
    let assignment = min_cost_assignment(&padded)?;
    let mut pairs = Vec::new();
    for (i, col) in assignment.into_iter().enumerate() {
        if i >= rows {
            continue;
        }
        if let Some(j) = col {
            if j < cols && table[i * cols + j].is_some() {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}
