//! Minimum-cost assignment with a deterministic tie-break.

/// Solves the assignment problem on a rectangular cost matrix and returns
/// `min(rows, cols)` pairs `(row, col)` sorted by row.
///
/// Among all optimal assignments the one whose row-to-column vector is
/// lexicographically smallest is returned (an unassigned row sorts after
/// every column).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    assert!(cost.iter().flatten().all(|c| c.is_finite()), "costs must be finite");
    let n = rows.max(cols);
    // Padding cells share one constant, so they never change which real
    // assignment is optimal.
    let c = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { 0.0 };

    let (u, v, mut col_of) = solve(n, &c);
    let scale = cost.iter().flatten().fold(1.0_f64, |m, x| m.max(x.abs()));
    let eps = 1e-9 * scale * n as f64;
    let tight = |i: usize, j: usize| c(i, j) - u[i] - v[j] <= eps;

    let mut row_of = vec![usize::MAX; n];
    for (i, &j) in col_of.iter().enumerate() {
        row_of[j] = i;
    }
    let mut fixed_col = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if fixed_col[j] || !tight(i, j) {
                continue;
            }
            if col_of[i] == j || reroute(i, j, &mut col_of, &mut row_of, &fixed_col, &tight) {
                fixed_col[j] = true;
                break;
            }
        }
        debug_assert!(fixed_col[col_of[i]]);
    }

    (0..rows).filter(|&i| col_of[i] < cols).map(|i| (i, col_of[i])).collect()
}

/// Moves row `i` onto column `j`, rematching the displaced row along an
/// alternating path of tight edges that ends at `i`'s old column. Rows
/// before `i` keep their columns. Leaves the matching untouched on failure.
fn reroute(
    i: usize,
    j: usize,
    col_of: &mut [usize],
    row_of: &mut [usize],
    fixed_col: &[bool],
    tight: &impl Fn(usize, usize) -> bool,
) -> bool {
    let n = col_of.len();
    let target = col_of[i];
    let displaced = row_of[j];
    let mut visited = vec![false; n];
    visited[j] = true;
    // DFS over rows; `path` records (row, column) steps.
    let mut path = Vec::new();
    if !dfs(displaced, target, col_of, row_of, fixed_col, tight, &mut visited, &mut path) {
        return false;
    }
    for (r, cnew) in path {
        col_of[r] = cnew;
        row_of[cnew] = r;
    }
    col_of[i] = j;
    row_of[j] = i;
    true
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    r: usize,
    target: usize,
    col_of: &[usize],
    row_of: &[usize],
    fixed_col: &[bool],
    tight: &impl Fn(usize, usize) -> bool,
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for c in 0..col_of.len() {
        if visited[c] || fixed_col[c] || !tight(r, c) {
            continue;
        }
        visited[c] = true;
        path.push((r, c));
        if c == target || dfs(row_of[c], target, col_of, row_of, fixed_col, tight, visited, path) {
            return true;
        }
        path.pop();
    }
    false
}

/// O(n³) shortest-augmenting-path method with potentials. Returns the row
/// and column potentials and the column assigned to each row.
fn solve(n: usize, c: &impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based internally; index 0 is a virtual row/column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[p[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), col_of)
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}
