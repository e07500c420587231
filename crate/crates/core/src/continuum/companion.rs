//! `min W_p(A, theta)` over densities `0 <= theta <= 1` vanishing on `A` with
//! `∫ theta = |A|`, discretized on a grid.
//!
//! Every cell has the same volume, so the transportation problem between
//! unit-supply A-cells and unit-capacity free cells has integral vertices and
//! reduces to a rectangular assignment.

use super::{cell_center, GridFunction, ValueRange};
use crate::domain::{Domain, ShapeSpec};
use crate::error::{Error, Result};
use crate::numerics::dist;
use crate::transport::hungarian;

#[derive(Debug, Clone)]
pub struct CompanionSolution {
    /// Optimal `theta` as a density in `[0, 1]`.
    pub theta: GridFunction,
    /// Normalized cell masses (sum to one).
    pub masses: Vec<f64>,
    /// `W_p(chi_A / |A|, theta / |A|)`.
    pub wp: f64,
    /// Optimal mean `p`-cost.
    pub cost: f64,
    /// Fraction of cells with `theta` within 0.05 of 0 or 1.
    pub binary_fraction: f64,
    pub source_cells: usize,
    pub free_cells: usize,
}

/// Solves the companion problem for `A = shape ∩ D` on a grid with the given
/// cells per axis. A cell belongs to `A` when its center does.
pub fn companion_set_lp(shape: &ShapeSpec, domain: &Domain, p: f64, resolution: &[usize]) -> Result<CompanionSolution> {
    shape.validate(domain)?;
    if resolution.len() != domain.dim() || resolution.iter().any(|&r| r == 0) {
        return Err(Error::InvalidArgument(format!("bad grid resolution {resolution:?}")));
    }
    let cells: usize = resolution.iter().product();
    let mask: Vec<bool> = (0..cells).map(|i| shape.indicator(&cell_center(domain, resolution, i))).collect();
    companion_set_lp_mask(domain, resolution, &mask, p)
}

/// As [`companion_set_lp`] with `A` given by a cell mask.
pub fn companion_set_lp_mask(domain: &Domain, resolution: &[usize], in_a: &[bool], p: f64) -> Result<CompanionSolution> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent p must be finite and at least 1, got {p}")));
    }
    let cells: usize = resolution.iter().product();
    if in_a.len() != cells {
        return Err(Error::SizeMismatch { left: in_a.len(), right: cells });
    }
    let sources: Vec<usize> = (0..cells).filter(|&i| in_a[i]).collect();
    let sinks: Vec<usize> = (0..cells).filter(|&i| !in_a[i]).collect();
    if sources.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    if sinks.len() < sources.len() {
        return Err(Error::Infeasible(format!(
            "complement holds {} cells but {} are needed",
            sinks.len(),
            sources.len()
        )));
    }
    let centers: Vec<Vec<f64>> = (0..cells).map(|i| cell_center(domain, resolution, i)).collect();
    let (rows, cols) = (sources.len(), sinks.len());
    let mut cost = vec![0.0; rows * cols];
    for (r, &a) in sources.iter().enumerate() {
        let row = &mut cost[r * cols..(r + 1) * cols];
        for (c, &b) in sinks.iter().enumerate() {
            row[c] = dist(&centers[a], &centers[b]).powf(p);
        }
    }
    let sol = hungarian::solve(&cost, rows, cols)?;
    let share = 1.0 / rows as f64;
    let mut masses = vec![0.0; cells];
    for &c in &sol.row_to_col {
        masses[sinks[c]] += share;
    }
    let theta_values: Vec<f64> = masses.iter().map(|m| m * rows as f64).collect();
    let binary_fraction =
        theta_values.iter().filter(|&&t| t <= 0.05 || t >= 0.95).count() as f64 / cells as f64;
    let mean_cost = sol.cost / rows as f64;
    let theta = GridFunction::new(domain.clone(), resolution.to_vec(), theta_values, ValueRange::Unit)?;
    Ok(CompanionSolution {
        theta,
        masses,
        wp: mean_cost.powf(1.0 / p),
        cost: mean_cost,
        binary_fraction,
        source_cells: rows,
        free_cells: cols,
    })
}
