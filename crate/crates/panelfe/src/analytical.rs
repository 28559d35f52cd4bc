//! Plug-in analytical bias corrections for the coefficients and the APEs.
//!
//! The corrected coefficient estimator subtracts W^{-1} B / T and
//! W^{-1} D / N from the MLE, where B collects the individual-effect bias
//! (including a trimmed spectral term when regressors are predetermined) and
//! D the time-effect bias; the APE corrections subtract B^delta / T and
//! D^delta / N from the re-profiled APE. All expectations are replaced by
//! sample averages evaluated at the uncorrected fit. Unbalanced panels use
//! each unit's (period's) own observed cells in the inner averages, and the
//! degrees-of-freedom rescale T/(T-j) generalizes to the unit's observed
//! period count over its gap-valid pair count.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::ape::{self, PartialEffects};
use crate::data_model::PanelData;
use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::evalctx::{evaluate, FitEval};
use crate::estimator::ModelSpec;
use crate::projection::{self, weighted_residualize};

/// Estimated bias pieces and the weight matrix.
#[derive(Debug, Clone)]
pub struct BiasComponents {
    pub w_hat: DMatrix<f64>,
    pub b_hat: DVector<f64>,
    pub d_hat: DVector<f64>,
    pub b_delta_hat: Vec<f64>,
    pub d_delta_hat: Vec<f64>,
    pub l_used: usize,
}

/// Computes W, B, D, B^delta, and D^delta at the uncorrected fit.
pub fn bias_components(
    fit: &FitResult,
    panel: &PanelData,
    spec: &ModelSpec,
) -> Result<BiasComponents> {
    let eval = evaluate(fit)?;
    bias_components_with_eval(fit, panel, spec, &eval)
}

pub(crate) fn bias_components_with_eval(
    fit: &FitResult,
    panel: &PanelData,
    spec: &ModelSpec,
    eval: &FitEval,
) -> Result<BiasComponents> {
    let n_units = panel.n_units();
    let n_periods = panel.n_periods();
    let k = panel.k();
    let lags = if spec.include_ieffects { spec.lags } else { 0 };
    if lags >= n_periods {
        return Err(Error::LTooLarge {
            lags,
            max: n_periods - 1,
        });
    }

    if Cholesky::new(eval.w_hat.clone()).is_none() {
        return Err(collinear(&eval.w_hat, panel));
    }

    let correct_i = spec.ibias && spec.include_ieffects;
    let correct_t = spec.tbias && spec.include_teffects;

    // partial effects and their index derivatives at the uncorrected fit
    let pe = ape::partial_effects(&fit.beta, &fit.alpha, &fit.gamma, panel, spec.family);

    // Psi: fitted value and residual of the weighted projection of
    // -d_pi / omega on the effect span
    let psi_input: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..panel.n_obs())
                .map(|o| -pe.d_pi[j][o] / eval.omega[o])
                .collect()
        })
        .collect();
    let psi = weighted_residualize(
        panel,
        &psi_input,
        &eval.omega,
        spec.projection_mode(),
        projection::DEFAULT_TOL,
        projection::DEFAULT_MAX_ITER,
    )?;

    let mut b_hat = DVector::zeros(k);
    let mut b_delta = vec![0.0; k];
    if correct_i {
        for i in 0..n_units {
            let obs = panel.obs_of_unit(i);
            let t_i = obs.len() as f64;
            let den: f64 = obs.iter().map(|&o| eval.omega[o as usize]).sum();

            let mut num_b = vec![0.0; k];
            let mut num_bd = vec![0.0; k];
            for &o in obs {
                let o = o as usize;
                let hd2 = eval.h[o] * eval.d2f[o];
                for j in 0..k {
                    num_b[j] += hd2 * eval.xtilde[j][o];
                    num_bd[j] += pe.d2_pi[j][o] - psi.fitted[j][o] * hd2;
                }
            }
            for lag in 1..=lags {
                let pairs = panel.lag_obs_pairs(i, lag as i64);
                if pairs.is_empty() {
                    continue;
                }
                let rescale = t_i / pairs.len() as f64;
                for (past, present) in pairs {
                    let (p, q) = (past as usize, present as usize);
                    let lead = eval.h[p] * (panel.y(p) - eval.f[p]) * eval.omega[q];
                    for j in 0..k {
                        num_b[j] += 2.0 * rescale * lead * eval.xtilde[j][q];
                        num_bd[j] += 2.0 * rescale * lead * psi.residual[j][q];
                    }
                }
            }
            for j in 0..k {
                b_hat[j] += num_b[j] / den;
                b_delta[j] += num_bd[j] / den;
            }
        }
        let scale = -0.5 / n_units as f64;
        b_hat *= scale;
        for v in &mut b_delta {
            *v *= -scale; // B^delta carries the opposite sign of B
        }
    }

    let mut d_hat = DVector::zeros(k);
    let mut d_delta = vec![0.0; k];
    if correct_t {
        for t in 0..n_periods {
            let obs = panel.obs_of_period(t);
            let den: f64 = obs.iter().map(|&o| eval.omega[o as usize]).sum();
            let mut num_d = vec![0.0; k];
            let mut num_dd = vec![0.0; k];
            for &o in obs {
                let o = o as usize;
                let hd2 = eval.h[o] * eval.d2f[o];
                for j in 0..k {
                    num_d[j] += hd2 * eval.xtilde[j][o];
                    num_dd[j] += pe.d2_pi[j][o] - psi.fitted[j][o] * hd2;
                }
            }
            for j in 0..k {
                d_hat[j] += num_d[j] / den;
                d_delta[j] += num_dd[j] / den;
            }
        }
        let scale = -0.5 / n_periods as f64;
        d_hat *= scale;
        for v in &mut d_delta {
            *v *= -scale;
        }
    }

    Ok(BiasComponents {
        w_hat: eval.w_hat.clone(),
        b_hat,
        d_hat,
        b_delta_hat: b_delta,
        d_delta_hat: d_delta,
        l_used: lags,
    })
}

/// `beta_hat - W^{-1} B / T - W^{-1} D / N` with the retained counts.
pub fn correct_beta(
    fit: &FitResult,
    components: &BiasComponents,
    n_eff: usize,
    t_eff: usize,
) -> Result<Vec<f64>> {
    let chol = Cholesky::new(components.w_hat.clone()).ok_or(Error::SingularW)?;
    let adj_b = chol.solve(&components.b_hat) / t_eff as f64;
    let adj_d = chol.solve(&components.d_hat) / n_eff as f64;
    Ok(fit
        .beta
        .iter()
        .enumerate()
        .map(|(j, b)| b - adj_b[j] - adj_d[j])
        .collect())
}

/// Re-profiles the effects at the corrected coefficients, evaluates the APEs
/// there, and subtracts `B^delta / T + D^delta / N`.
pub fn correct_ape(
    beta_corrected: &[f64],
    panel: &PanelData,
    spec: &ModelSpec,
    components: &BiasComponents,
) -> Result<Vec<f64>> {
    let pe: PartialEffects = ape::ape_at(beta_corrected, panel, spec)?;
    let n_eff = panel.n_units() as f64;
    let t_eff = panel.n_periods() as f64;
    Ok(pe
        .delta
        .iter()
        .enumerate()
        .map(|(j, d)| d - components.b_delta_hat[j] / t_eff - components.d_delta_hat[j] / n_eff)
        .collect())
}

fn collinear(w: &DMatrix<f64>, panel: &PanelData) -> Error {
    for size in 1..=w.nrows() {
        let sub = w.view((0, 0), (size, size)).into_owned();
        if Cholesky::new(sub).is_none() {
            return Error::CollinearCovariates {
                column: panel.covariate_names().get(size - 1).cloned(),
            };
        }
    }
    Error::CollinearCovariates { column: None }
}
