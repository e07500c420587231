//! Dense rectangular assignment by shortest augmenting paths with
//! row/column potentials (Hungarian method).

use crate::error::{Error, Result};

/// Optimal assignment for a `rows x cols` cost matrix (row-major), `rows <= cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub row_to_col: Vec<usize>,
    pub cost: f64,
    /// Dual potentials; `u[i] + v[j] <= cost[i][j]` with equality on assigned pairs.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn solve(cost: &[f64], rows: usize, cols: usize) -> Result<Assignment> {
    if cost.len() != rows * cols {
        return Err(Error::SizeMismatch { left: cost.len(), right: rows * cols });
    }
    if rows > cols {
        return Err(Error::InvalidArgument(format!("assignment needs rows <= cols, got {rows} x {cols}")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("assignment costs must be finite".into()));
    }
    if rows == 0 {
        return Ok(Assignment { row_to_col: Vec::new(), cost: 0.0, u: Vec::new(), v: vec![0.0; cols] });
    }

    let inf = f64::INFINITY;
    // 1-based internally; index 0 is the virtual root column.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv = vec![inf; cols + 1];
    let mut used = vec![false; cols + 1];

    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * cols..i0 * cols];
            let ui = u[i0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - ui - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
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

    let mut row_to_col = vec![0usize; rows];
    for j in 1..=cols {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let mut total = crate::numerics::CompensatedSum::new();
    for (i, &j) in row_to_col.iter().enumerate() {
        total.add(cost[i * cols + j]);
    }
    Ok(Assignment { row_to_col, cost: total.value(), u: u[1..].to_vec(), v: v[1..].to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_square() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve(&c, 3, 3).unwrap();
        assert_eq!(a.cost, 5.0);
        assert_eq!(a.row_to_col, vec![1, 0, 2]);
    }

    #[test]
    fn rectangular_picks_cheapest_columns() {
        let c = [5.0, 1.0, 9.0, 7.0, 8.0, 2.0];
        let a = solve(&c, 2, 3).unwrap();
        assert_eq!(a.cost, 3.0);
        assert_eq!(a.row_to_col, vec![1, 2]);
    }

    #[test]
    fn duals_are_feasible_and_tight() {
        let (rows, cols) = (5, 8);
        let c: Vec<f64> = (0..rows * cols).map(|k| ((k * 7919) % 97) as f64 / 7.0).collect();
        let a = solve(&c, rows, cols).unwrap();
        for i in 0..rows {
            for j in 0..cols {
                assert!(a.u[i] + a.v[j] <= c[i * cols + j] + 1e-9);
            }
            let j = a.row_to_col[i];
            assert!((a.u[i] + a.v[j] - c[i * cols + j]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(solve(&[1.0, 2.0], 2, 1).is_err());
        assert!(solve(&[1.0], 1, 2).is_err());
        assert!(solve(&[f64::NAN], 1, 1).is_err());
    }
}
