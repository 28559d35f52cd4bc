//! Shared test oracles, written independently of the library's estimation
//! path: a dense full-parameter Newton maximizer of the same likelihood, a
//! literal transcription of the bias-component formulas using dense
//! dummy-variable projections, and panel generators.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use panelfe::data_model::{Observation, PanelData};
use panelfe::links::Family;
use rand::rngs::StdRng;
use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Observation score, curvature (negative second derivative), and
/// log-likelihood for the oracle, written from the closed forms.
fn obs_pieces(y: f64, z: f64, family: Family) -> (f64, f64, f64) {
    match family {
        Family::Logit => {
            let p = logistic(z);
            let ll = if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
            (y - p, p * (1.0 - p), ll)
        }
        Family::Probit => {
            let n = Normal::standard();
            let phi = n.pdf(z);
            if y == 1.0 {
                let cdf = n.cdf(z);
                let r = phi / cdf;
                (r, r * (r + z), cdf.ln())
            } else {
                let sf = n.cdf(-z);
                let r = phi / sf;
                (-r, r * (r - z), sf.ln())
            }
        }
    }
}

pub struct OracleFit {
    pub beta: Vec<f64>,
    pub loglik: f64,
}

/// Dense Newton on the full unreduced parameter vector (beta, alpha, gamma),
/// with the first period effect dropped when both effect sets are present.
/// Returns `None` when no finite maximizer is found (separation or a singular
/// Hessian).
pub fn oracle_fit(
    panel: &PanelData,
    family: Family,
    include_i: bool,
    include_t: bool,
) -> Option<OracleFit> {
    let n = panel.n_obs();
    let k = panel.k();
    let n_units = if include_i { panel.n_units() } else { 0 };
    let drop_first_gamma = include_i && include_t;
    let n_periods = if include_t {
        panel.n_periods() - usize::from(drop_first_gamma)
    } else {
        0
    };
    let dim = k + n_units + n_periods;

    // per-observation design row in the dense parameterization
    let row_of = |o: usize| -> Vec<(usize, f64)> {
        let mut row: Vec<(usize, f64)> = (0..k).map(|j| (j, panel.x_at(o, j))).collect();
        if include_i {
            row.push((k + panel.unit_of(o), 1.0));
        }
        if include_t {
            let t = panel.period_of(o);
            if drop_first_gamma {
                if t > 0 {
                    row.push((k + n_units + t - 1, 1.0));
                }
            } else {
                row.push((k + n_units + t, 1.0));
            }
        }
        row
    };

    let mut theta = DVector::zeros(dim);
    let loglik = |theta: &DVector<f64>| -> f64 {
        (0..n)
            .map(|o| {
                let z: f64 = row_of(o).iter().map(|&(j, v)| v * theta[j]).sum();
                obs_pieces(panel.y(o), z, family).2
            })
            .sum()
    };

    let mut ll = loglik(&theta);
    for _ in 0..300 {
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        for o in 0..n {
            let row = row_of(o);
            let z: f64 = row.iter().map(|&(j, v)| v * theta[j]).sum();
            let (u, c, _) = obs_pieces(panel.y(o), z, family);
            for &(j, vj) in &row {
                g[j] += u * vj;
                for &(l, vl) in &row {
                    h[(j, l)] += c * vj * vl;
                }
            }
        }
        if g.amax() < 1e-10 {
            return Some(OracleFit {
                beta: theta.as_slice()[..k].to_vec(),
                loglik: ll,
            });
        }
        let chol = nalgebra::Cholesky::new(h)?;
        let delta = chol.solve(&g);
        let mut scale = 1.0;
        let mut stepped = false;
        for _ in 0..40 {
            let trial = &theta + scale * &delta;
            let ll_trial = loglik(&trial);
            if ll_trial >= ll - 1e-13 * (1.0 + ll.abs()) {
                theta = trial;
                ll = ll_trial;
                stepped = true;
                break;
            }
            scale *= 0.5;
        }
        if !stepped {
            return None;
        }
        if theta.as_slice()[..k].iter().any(|b| b.abs() > 8.0) {
            return None; // walking to infinity: treat as separated
        }
    }
    None
}

/// Weighted least-squares projection on a dense dummy design, solved through
/// the pseudo-inverse of the normal equations. Returns (fitted, residual).
pub fn dense_projection(
    panel: &PanelData,
    values: &[f64],
    weights: &[f64],
    include_i: bool,
    include_t: bool,
) -> (Vec<f64>, Vec<f64>) {
    let n = panel.n_obs();
    let cols_i = if include_i { panel.n_units() } else { 0 };
    let cols_t = if include_t { panel.n_periods() } else { 0 };
    let p = cols_i + cols_t;
    let mut design = DMatrix::zeros(n, p);
    for o in 0..n {
        if include_i {
            design[(o, panel.unit_of(o))] = 1.0;
        }
        if include_t {
            design[(o, cols_i + panel.period_of(o))] = 1.0;
        }
    }
    let w = DMatrix::from_diagonal(&DVector::from_iterator(n, weights.iter().copied()));
    let dtw = design.transpose() * &w;
    let normal = &dtw * &design;
    let rhs = &dtw * DVector::from_iterator(n, values.iter().copied());
    let pinv = normal
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .expect("svd pseudo-inverse");
    let coef = pinv * rhs;
    let fitted_v = design * coef;
    let fitted: Vec<f64> = fitted_v.iter().copied().collect();
    let residual: Vec<f64> = values.iter().zip(&fitted).map(|(v, f)| v - f).collect();
    (fitted, residual)
}

pub struct OracleComponents {
    pub w: DMatrix<f64>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub b_delta: Vec<f64>,
    pub d_delta: Vec<f64>,
}

/// Literal transcription of the plug-in bias components, evaluated at the
/// supplied parameter values with dense dummy projections throughout.
#[allow(clippy::too_many_arguments)]
pub fn oracle_components(
    panel: &PanelData,
    family: Family,
    beta: &[f64],
    alpha: &[f64],
    gamma: &[f64],
    include_i: bool,
    include_t: bool,
    ibias: bool,
    tbias: bool,
    lags: usize,
) -> OracleComponents {
    let n = panel.n_obs();
    let k = panel.k();
    let normal = Normal::standard();

    // pointwise link quantities from the closed forms
    let mut z = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut df = vec![0.0; n];
    let mut d2f = vec![0.0; n];
    let mut d3f = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut omega = vec![0.0; n];
    for o in 0..n {
        let mut zz = alpha[panel.unit_of(o)] + gamma[panel.period_of(o)];
        for j in 0..k {
            zz += beta[j] * panel.x_at(o, j);
        }
        z[o] = zz;
        match family {
            Family::Logit => {
                let p = logistic(zz);
                f[o] = p;
                df[o] = p * (1.0 - p);
                d2f[o] = df[o] * (1.0 - 2.0 * p);
                d3f[o] = df[o] * ((1.0 - 2.0 * p) * (1.0 - 2.0 * p) - 2.0 * df[o]);
                h[o] = 1.0;
                omega[o] = df[o];
            }
            Family::Probit => {
                let cdf = normal.cdf(zz);
                let pdf = normal.pdf(zz);
                f[o] = cdf;
                df[o] = pdf;
                d2f[o] = -zz * pdf;
                d3f[o] = (zz * zz - 1.0) * pdf;
                h[o] = pdf / (cdf * (1.0 - cdf));
                omega[o] = h[o] * pdf;
            }
        }
    }

    // residualized covariates
    let mut xtilde = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = (0..n).map(|o| panel.x_at(o, j)).collect();
        let (_, res) = dense_projection(panel, &col, &omega, include_i, include_t);
        xtilde.push(res);
    }

    let mut w = DMatrix::zeros(k, k);
    for o in 0..n {
        for j in 0..k {
            for l in 0..k {
                w[(j, l)] += omega[o] * xtilde[j][o] * xtilde[l][o];
            }
        }
    }
    w /= n as f64;

    // partial-effect index derivatives
    let mut d_pi = vec![vec![0.0; n]; k];
    let mut d2_pi = vec![vec![0.0; n]; k];
    for o in 0..n {
        for j in 0..k {
            if panel.ape_binary()[j] {
                let z0 = z[o] - panel.x_at(o, j) * beta[j];
                let z1 = z0 + beta[j];
                let (df1, df0, d2f1, d2f0) = match family {
                    Family::Logit => {
                        let p1 = logistic(z1);
                        let p0 = logistic(z0);
                        (
                            p1 * (1.0 - p1),
                            p0 * (1.0 - p0),
                            p1 * (1.0 - p1) * (1.0 - 2.0 * p1),
                            p0 * (1.0 - p0) * (1.0 - 2.0 * p0),
                        )
                    }
                    Family::Probit => (
                        normal.pdf(z1),
                        normal.pdf(z0),
                        -z1 * normal.pdf(z1),
                        -z0 * normal.pdf(z0),
                    ),
                };
                d_pi[j][o] = df1 - df0;
                d2_pi[j][o] = d2f1 - d2f0;
            } else {
                d_pi[j][o] = beta[j] * d2f[o];
                d2_pi[j][o] = beta[j] * d3f[o];
            }
        }
    }

    // Psi: projection of -d_pi / omega
    let mut psi_fit = Vec::with_capacity(k);
    let mut psi_res = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = (0..n).map(|o| -d_pi[j][o] / omega[o]).collect();
        let (fit, res) = dense_projection(panel, &col, &omega, include_i, include_t);
        psi_fit.push(fit);
        psi_res.push(res);
    }

    // gap-aware lag pairs per unit, built locally
    let pairs_of = |i: usize, lag: i64| -> Vec<(usize, usize)> {
        let mut by_label = std::collections::HashMap::new();
        for &o in panel.obs_of_unit(i) {
            by_label.insert(panel.period_label(panel.period_of(o as usize)), o as usize);
        }
        let mut out = Vec::new();
        for &o in panel.obs_of_unit(i) {
            let t = panel.period_label(panel.period_of(o as usize));
            if let Some(&prev) = by_label.get(&(t - lag)) {
                out.push((prev, o as usize));
            }
        }
        out
    };

    let mut b = vec![0.0; k];
    let mut b_delta = vec![0.0; k];
    if ibias && include_i {
        for i in 0..panel.n_units() {
            let obs = panel.obs_of_unit(i);
            let den: f64 = obs.iter().map(|&o| omega[o as usize]).sum();
            let t_i = obs.len() as f64;
            for j in 0..k {
                let mut num_b: f64 = obs
                    .iter()
                    .map(|&o| {
                        let o = o as usize;
                        h[o] * d2f[o] * xtilde[j][o]
                    })
                    .sum();
                let mut num_bd: f64 = obs
                    .iter()
                    .map(|&o| {
                        let o = o as usize;
                        d2_pi[j][o] - psi_fit[j][o] * h[o] * d2f[o]
                    })
                    .sum();
                for lag in 1..=lags {
                    let pairs = pairs_of(i, lag as i64);
                    if pairs.is_empty() {
                        continue;
                    }
                    let rescale = t_i / pairs.len() as f64;
                    for &(p, q) in &pairs {
                        let lead = h[p] * (panel.y(p) - f[p]) * omega[q];
                        num_b += 2.0 * rescale * lead * xtilde[j][q];
                        num_bd += 2.0 * rescale * lead * psi_res[j][q];
                    }
                }
                b[j] += num_b / den;
                b_delta[j] += num_bd / den;
            }
        }
        let n_units = panel.n_units() as f64;
        for j in 0..k {
            b[j] *= -0.5 / n_units;
            b_delta[j] *= 0.5 / n_units;
        }
    }

    let mut d = vec![0.0; k];
    let mut d_delta = vec![0.0; k];
    if tbias && include_t {
        for t in 0..panel.n_periods() {
            let obs = panel.obs_of_period(t);
            let den: f64 = obs.iter().map(|&o| omega[o as usize]).sum();
            for j in 0..k {
                let num_d: f64 = obs
                    .iter()
                    .map(|&o| {
                        let o = o as usize;
                        h[o] * d2f[o] * xtilde[j][o]
                    })
                    .sum();
                let num_dd: f64 = obs
                    .iter()
                    .map(|&o| {
                        let o = o as usize;
                        d2_pi[j][o] - psi_fit[j][o] * h[o] * d2f[o]
                    })
                    .sum();
                d[j] += num_d / den;
                d_delta[j] += num_dd / den;
            }
        }
        let n_periods = panel.n_periods() as f64;
        for j in 0..k {
            d[j] *= -0.5 / n_periods;
            d_delta[j] *= 0.5 / n_periods;
        }
    }

    OracleComponents {
        w,
        b,
        d,
        b_delta,
        d_delta,
    }
}

/// Random panel: continuous covariates (first optionally binary), modest
/// effects, outcomes from the model. `gap_prob` drops cells to unbalance the
/// panel. Returns `None` when the perfect-classification drops reject it.
#[allow(clippy::too_many_arguments)]
pub fn gen_panel(
    rng: &mut StdRng,
    n: usize,
    t: usize,
    k: usize,
    family: Family,
    include_i: bool,
    include_t: bool,
    first_binary: bool,
    gap_prob: f64,
) -> Option<PanelData> {
    let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.6..0.6)).collect();
    let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let gamma: Vec<f64> = (0..t).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut rows = Vec::new();
    for i in 0..n {
        for s in 0..t {
            if rng.gen::<f64>() < gap_prob {
                continue;
            }
            let x: Vec<f64> = (0..k)
                .map(|j| {
                    if j == 0 && first_binary {
                        f64::from(rng.gen::<f64>() < 0.5)
                    } else {
                        rng.gen_range(-1.2..1.2)
                    }
                })
                .collect();
            let mut z = 0.0;
            if include_i {
                z += alpha[i];
            }
            if include_t {
                z += gamma[s];
            }
            for j in 0..k {
                z += beta[j] * x[j];
            }
            let p = match family {
                Family::Logit => logistic(z),
                Family::Probit => Normal::standard().cdf(z),
            };
            let y = f64::from(rng.gen::<f64>() < p);
            rows.push(Observation {
                unit_id: format!("u{i}"),
                period_id: s as i64,
                y,
                x,
            });
        }
    }
    let names: Vec<String> = (0..k).map(|j| format!("x{}", j + 1)).collect();
    let panel = PanelData::from_observations(rows, names).ok()?;
    panel
        .drop_perfect_classification(include_i, include_t)
        .ok()?;
    Some(panel)
}
