//! Shared post-fit evaluation quantities: link values at the fitted indices,
//! residualized covariates, and the weight matrix W. Used by both the
//! analytical corrections and the variance formulas.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::estimator::FitResult;
use crate::links::link_eval;
use crate::projection::{self, weighted_residualize};

pub(crate) struct FitEval {
    pub f: Vec<f64>,
    pub d2f: Vec<f64>,
    pub h: Vec<f64>,
    pub omega: Vec<f64>,
    /// H_it (Y_it - F_it)
    pub u: Vec<f64>,
    /// Residualized covariates, one column per covariate.
    pub xtilde: Vec<Vec<f64>>,
    /// W = (1/n) sum omega * xtilde xtilde', n the retained observation count.
    pub w_hat: DMatrix<f64>,
}

pub(crate) fn evaluate(fit: &FitResult) -> Result<FitEval> {
    let panel = &fit.panel;
    let n = panel.n_obs();
    let k = panel.k();
    let family = fit.spec.family;

    let mut f = Vec::with_capacity(n);
    let mut d2f = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut omega = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for o in 0..n {
        let zo = fit.index_of(o);
        let b = link_eval(zo, family);
        f.push(b.f);
        d2f.push(b.d2f);
        h.push(b.h);
        omega.push(b.omega);
        u.push(b.h * (panel.y(o) - b.f));
    }

    let columns: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..n).map(|o| panel.x_at(o, j)).collect())
        .collect();
    let proj = weighted_residualize(
        panel,
        &columns,
        &omega,
        fit.spec.projection_mode(),
        projection::DEFAULT_TOL,
        projection::DEFAULT_MAX_ITER,
    )?;
    let xtilde = proj.residual;

    let mut w_hat = DMatrix::zeros(k, k);
    for o in 0..n {
        for j in 0..k {
            for l in 0..=j {
                w_hat[(j, l)] += omega[o] * xtilde[j][o] * xtilde[l][o];
            }
        }
    }
    for j in 0..k {
        for l in (j + 1)..k {
            w_hat[(j, l)] = w_hat[(l, j)];
        }
    }
    w_hat /= n as f64;

    Ok(FitEval {
        f,
        d2f,
        h,
        omega,
        u,
        xtilde,
        w_hat,
    })
}
