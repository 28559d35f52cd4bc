//! Standard errors for coefficients and APEs, finite population correction,
//! likelihood-ratio test, and pseudo R-squared.
//!
//! Coefficient standard errors are `sqrt(W^{-1}_{kk} / (N T))`. APE standard
//! errors combine two sampling terms, both multiplied by the finite
//! population correction factor, with an estimation-noise term that is never
//! corrected. Everything is evaluated at the uncorrected fit; the same
//! standard errors are reported for the uncorrected and all corrected
//! estimators.

use nalgebra::{Cholesky, DMatrix};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::analytical::BiasComponents;
use crate::ape;
use crate::data_model::PanelData;
use crate::error::{Error, Result};
use crate::estimator::{FitResult, ModelSpec};
use crate::evalctx::{evaluate, FitEval};
use crate::projection::{self, weighted_residualize};

/// 97.5% standard normal quantile used for 95% intervals.
pub const Z_CRIT_95: f64 = 1.959_964;

/// Variance results for one estimation run.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub se_beta: Vec<f64>,
    pub vcov_beta: DMatrix<f64>,
    pub se_ape: Vec<f64>,
    pub vcov_ape: DMatrix<f64>,
    pub fpc: f64,
    pub lr_chi2: f64,
    pub p_value: f64,
    pub pseudo_r2: f64,
    /// Per-covariate, per-observation influence values for the APE variance.
    pub gamma_influence: Vec<Vec<f64>>,
    /// Jacobian of the APEs with respect to beta (covariates x coefficients).
    pub d_beta_delta: DMatrix<f64>,
    /// Number of variance entries clamped at zero.
    pub clamped: usize,
}

/// `(M - m) / (M - 1)` with `m` the retained observation count; 1 for an
/// infinite population.
pub fn fpc_factor(population: Option<u64>, m: usize) -> Result<f64> {
    match population {
        None => Ok(1.0),
        Some(big_m) => {
            let big_m = big_m as f64;
            let m = m as f64;
            if big_m < m {
                return Err(Error::InvalidOptions(
                    "population smaller than the estimation sample".into(),
                ));
            }
            if big_m <= 1.0 {
                return Ok(0.0);
            }
            Ok((big_m - m) / (big_m - 1.0))
        }
    }
}

/// Coefficient standard errors `sqrt(W^{-1}_{kk} / (N T))`.
pub fn se_beta(components: &BiasComponents, n_units: usize, n_periods: usize) -> Result<Vec<f64>> {
    let w_inv = invert_w(&components.w_hat)?;
    let scale = (n_units * n_periods) as f64;
    Ok((0..w_inv.nrows())
        .map(|j| (w_inv[(j, j)] / scale).sqrt())
        .collect())
}

/// APE variance pieces computed from the uncorrected fit.
#[derive(Debug, Clone)]
pub struct ApeVariance {
    pub se: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub gamma_influence: Vec<Vec<f64>>,
    pub d_beta_delta: DMatrix<f64>,
    pub clamped: usize,
}

/// APE standard errors with the given finite population correction factor
/// multiplying the two sampling terms.
pub fn se_ape(fit: &FitResult, panel: &PanelData, spec: &ModelSpec, fpc: f64) -> Result<ApeVariance> {
    let eval = evaluate(fit)?;
    se_ape_with_eval(fit, panel, spec, fpc, &eval)
}

pub(crate) fn se_ape_with_eval(
    fit: &FitResult,
    panel: &PanelData,
    spec: &ModelSpec,
    fpc: f64,
    eval: &FitEval,
) -> Result<ApeVariance> {
    let n = panel.n_obs();
    let k = panel.k();
    let w_inv = invert_w(&eval.w_hat)?;

    let pe = ape::partial_effects(&fit.beta, &fit.alpha, &fit.gamma, panel, spec.family);

    // Psi: fitted values of the weighted projection of -d_pi / omega
    let psi_input: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..n).map(|o| -pe.d_pi[j][o] / eval.omega[o]).collect())
        .collect();
    let psi = weighted_residualize(
        panel,
        &psi_input,
        &eval.omega,
        spec.projection_mode(),
        projection::DEFAULT_TOL,
        projection::DEFAULT_MAX_ITER,
    )?;

    // D_beta Delta: per covariate, the sample average of d_pi * xtilde
    let mut d_beta_delta = DMatrix::zeros(k, k);
    for j in 0..k {
        for l in 0..k {
            let mut acc = 0.0;
            for o in 0..n {
                acc += pe.d_pi[j][o] * eval.xtilde[l][o];
            }
            d_beta_delta[(j, l)] = acc / n as f64;
        }
    }

    // influence values: (D_beta Delta)' W^{-1} u xtilde - Psi u
    let proj_coef = &d_beta_delta * &w_inv; // k x k; row j multiplies xtilde
    let mut gamma_influence = vec![vec![0.0; n]; k];
    for o in 0..n {
        for j in 0..k {
            let mut lead = 0.0;
            for l in 0..k {
                lead += proj_coef[(j, l)] * eval.xtilde[l][o];
            }
            gamma_influence[j][o] = lead * eval.u[o] - psi.fitted[j][o] * eval.u[o];
        }
    }

    // centered effects and their unit/period sums
    let centered: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..n)
                .map(|o| pe.delta_obs[j][o] - pe.delta[j])
                .collect()
        })
        .collect();
    let mut unit_sums = vec![vec![0.0; k]; panel.n_units()];
    let mut period_sums = vec![vec![0.0; k]; panel.n_periods()];
    for o in 0..n {
        for j in 0..k {
            unit_sums[panel.unit_of(o)][j] += centered[j][o];
            period_sums[panel.period_of(o)][j] += centered[j][o];
        }
    }

    let mut total = DMatrix::zeros(k, k);
    for sums in unit_sums.iter().chain(period_sums.iter()) {
        for j in 0..k {
            for l in 0..k {
                total[(j, l)] += fpc * sums[j] * sums[l];
            }
        }
    }
    for o in 0..n {
        for j in 0..k {
            for l in 0..k {
                total[(j, l)] += -fpc * centered[j][o] * centered[l][o]
                    + gamma_influence[j][o] * gamma_influence[l][o];
            }
        }
    }

    let scale = (panel.n_units() * panel.n_periods()) as f64;
    let mut vcov = total / (scale * scale);
    let mut clamped = 0;
    let mut se = Vec::with_capacity(k);
    for j in 0..k {
        if vcov[(j, j)] < 0.0 {
            vcov[(j, j)] = 0.0;
            clamped += 1;
        }
        se.push(vcov[(j, j)].sqrt());
    }

    Ok(ApeVariance {
        se,
        vcov,
        gamma_influence,
        d_beta_delta,
        clamped,
    })
}

/// Likelihood-ratio statistic, its chi-squared p-value, and pseudo R-squared.
pub fn lr_and_fit_stats(fit: &FitResult) -> (f64, f64, f64) {
    let lr = (2.0 * (fit.loglik - fit.loglik_null)).max(0.0);
    let df = fit.panel.k() as f64;
    let p = if lr <= 0.0 {
        1.0
    } else {
        1.0 - ChiSquared::new(df).expect("positive df").cdf(lr)
    };
    let pseudo_r2 = if fit.loglik_null == 0.0 {
        0.0
    } else {
        1.0 - fit.loglik / fit.loglik_null
    };
    (lr, p, pseudo_r2)
}

/// Full inference bundle for one estimation run.
pub fn inference(
    fit: &FitResult,
    components: &BiasComponents,
    spec: &ModelSpec,
) -> Result<InferenceResult> {
    let panel = &fit.panel;
    let fpc = fpc_factor(spec.population, panel.n_obs())?;
    let se_b = se_beta(components, panel.n_units(), panel.n_periods())?;
    let w_inv = invert_w(&components.w_hat)?;
    let vcov_beta = w_inv / (panel.n_units() * panel.n_periods()) as f64;
    let ape_var = se_ape(fit, panel, spec, fpc)?;
    let (lr_chi2, p_value, pseudo_r2) = lr_and_fit_stats(fit);
    Ok(InferenceResult {
        se_beta: se_b,
        vcov_beta,
        se_ape: ape_var.se,
        vcov_ape: ape_var.vcov,
        fpc,
        lr_chi2,
        p_value,
        pseudo_r2,
        gamma_influence: ape_var.gamma_influence,
        d_beta_delta: ape_var.d_beta_delta,
        clamped: ape_var.clamped,
    })
}

/// Numerical rank at a relative tolerance of 1e-10 on the singular values.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * max)
        .count()
}

fn invert_w(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(w.clone())
        .map(|c| c.inverse())
        .ok_or(Error::SingularW)
}
