//! Partial-effect kernel and average partial effects.
//!
//! For a binary covariate the per-observation effect is the difference of
//! response probabilities at the covariate's two levels, holding everything
//! else at observed values; for a continuous covariate it is
//! `beta_k * dF(z)`. `d_pi` and `d2_pi` are the first and second derivatives
//! of the effect in a common shift of the index (equivalently in alpha_i,
//! since the effects enter only through the index); both feed the bias and
//! variance formulas.

use crate::data_model::PanelData;
use crate::error::Result;
use crate::estimator::{self, ModelSpec};
use crate::links::{link_eval, Family};

/// Per-observation partial effects and their index derivatives, plus the
/// per-covariate sample average.
#[derive(Debug, Clone)]
pub struct PartialEffects {
    pub covariate_names: Vec<String>,
    /// Sample-average APE per covariate, over retained observations.
    pub delta: Vec<f64>,
    /// Per covariate, per observation effect values.
    pub delta_obs: Vec<Vec<f64>>,
    /// First index derivative of the effect.
    pub d_pi: Vec<Vec<f64>>,
    /// Second index derivative of the effect.
    pub d2_pi: Vec<Vec<f64>>,
}

/// Evaluates the partial-effect kernel at the given parameter values. A
/// covariate is treated as binary iff the panel's effective classification
/// says so.
pub fn partial_effects(
    beta: &[f64],
    alpha: &[f64],
    gamma: &[f64],
    panel: &PanelData,
    family: Family,
) -> PartialEffects {
    let n = panel.n_obs();
    let k = panel.k();
    let mut delta_obs = vec![vec![0.0; n]; k];
    let mut d_pi = vec![vec![0.0; n]; k];
    let mut d2_pi = vec![vec![0.0; n]; k];

    for o in 0..n {
        let row = panel.x_row(o);
        let mut z = alpha[panel.unit_of(o)] + gamma[panel.period_of(o)];
        for j in 0..k {
            z += beta[j] * row[j];
        }
        for j in 0..k {
            if panel.ape_binary()[j] {
                let z0 = z - row[j] * beta[j];
                let z1 = z0 + beta[j];
                let b1 = link_eval(z1, family);
                let b0 = link_eval(z0, family);
                delta_obs[j][o] = b1.f - b0.f;
                d_pi[j][o] = b1.df - b0.df;
                d2_pi[j][o] = b1.d2f - b0.d2f;
            } else {
                let b = link_eval(z, family);
                delta_obs[j][o] = beta[j] * b.df;
                d_pi[j][o] = beta[j] * b.d2f;
                d2_pi[j][o] = beta[j] * b.d3f;
            }
        }
    }

    let delta = delta_obs
        .iter()
        .map(|col| col.iter().sum::<f64>() / n as f64)
        .collect();
    PartialEffects {
        covariate_names: panel.covariate_names().to_vec(),
        delta,
        delta_obs,
        d_pi,
        d2_pi,
    }
}

/// Re-profiles the effects at `beta_tilde` and evaluates the partial effects
/// there. This is the evaluation used for corrected estimators.
pub fn ape_at(beta_tilde: &[f64], panel: &PanelData, spec: &ModelSpec) -> Result<PartialEffects> {
    let (alpha, gamma) = estimator::profile_effects(beta_tilde, panel, spec)?;
    Ok(partial_effects(beta_tilde, &alpha, &gamma, panel, spec.family))
}
