//! Weighted least-squares residualization on the span of the fixed effects.
//!
//! Computes, per observation, the best fit `a_i + b_t` to a value `v_it`
//! under the metric given by positive weights, by alternating weighted
//! demeaning over the two effect blocks (Gauss-Seidel). One-way modes keep a
//! single block. Unbalanced panels are handled by summing over observed cells
//! only.

use crate::data_model::PanelData;
use crate::error::{Error, Result};

pub(crate) const DEFAULT_TOL: f64 = 1e-10;
pub(crate) const DEFAULT_MAX_ITER: usize = 10_000;

/// Weights numerically indistinguishable from zero are floored here, inside
/// the projection only.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Which effect span to project on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    Units,
    Periods,
    Both,
}

/// Per-column fitted values and residuals of the weighted projection.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub fitted: Vec<Vec<f64>>,
    pub residual: Vec<Vec<f64>>,
    pub converged: bool,
}

/// Residualizes each column of `columns` (per-observation values) on the
/// fixed-effect span selected by `mode`, under the metric `weights`.
pub fn weighted_residualize(
    panel: &PanelData,
    columns: &[Vec<f64>],
    weights: &[f64],
    mode: ProjectionMode,
    tol: f64,
    max_iter: usize,
) -> Result<ProjectionResult> {
    let n = panel.n_obs();
    assert_eq!(weights.len(), n);
    let w: Vec<f64> = weights.iter().map(|&v| v.max(WEIGHT_FLOOR)).collect();

    let mut unit_wsum = vec![0.0; panel.n_units()];
    let mut period_wsum = vec![0.0; panel.n_periods()];
    for o in 0..n {
        unit_wsum[panel.unit_of(o)] += w[o];
        period_wsum[panel.period_of(o)] += w[o];
    }

    let mut fitted = Vec::with_capacity(columns.len());
    let mut residual = Vec::with_capacity(columns.len());
    for col in columns {
        assert_eq!(col.len(), n);
        let (a, b) = solve_column(panel, col, &w, &unit_wsum, &period_wsum, mode, tol, max_iter)?;
        let mut fit = vec![0.0; n];
        let mut res = vec![0.0; n];
        for o in 0..n {
            fit[o] = a[panel.unit_of(o)] + b[panel.period_of(o)];
            res[o] = col[o] - fit[o];
        }
        fitted.push(fit);
        residual.push(res);
    }
    Ok(ProjectionResult {
        fitted,
        residual,
        converged: true,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_column(
    panel: &PanelData,
    col: &[f64],
    w: &[f64],
    unit_wsum: &[f64],
    period_wsum: &[f64],
    mode: ProjectionMode,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = vec![0.0; panel.n_units()];
    let mut b = vec![0.0; panel.n_periods()];
    let units = matches!(mode, ProjectionMode::Units | ProjectionMode::Both);
    let periods = matches!(mode, ProjectionMode::Periods | ProjectionMode::Both);

    for _ in 0..max_iter {
        let mut delta: f64 = 0.0;
        if units {
            for i in 0..panel.n_units() {
                let mut num = 0.0;
                for &o in panel.obs_of_unit(i) {
                    let o = o as usize;
                    num += w[o] * (col[o] - b[panel.period_of(o)]);
                }
                let new = num / unit_wsum[i];
                delta = delta.max((new - a[i]).abs());
                a[i] = new;
            }
        }
        if periods {
            for t in 0..panel.n_periods() {
                let mut num = 0.0;
                for &o in panel.obs_of_period(t) {
                    let o = o as usize;
                    num += w[o] * (col[o] - a[panel.unit_of(o)]);
                }
                let new = num / period_wsum[t];
                delta = delta.max((new - b[t]).abs());
                b[t] = new;
            }
        }
        if delta < tol {
            return Ok((a, b));
        }
    }
    Err(Error::NotConverged(max_iter))
}
