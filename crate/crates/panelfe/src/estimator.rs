//! Uncorrected fixed-effect maximum likelihood for probit/logit panels.
//!
//! The sample log-likelihood is jointly concave in (beta, alpha, gamma), so a
//! blockwise concentrated Newton scheme converges globally: one-dimensional
//! Newton sweeps over each alpha_i given (beta, gamma) and each gamma_t given
//! (beta, alpha) until the effect scores vanish, then a Newton step on beta
//! using the profiled score with the weighted-residualized covariates as
//! curvature. Beta steps are halved until the likelihood does not decrease.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data_model::PanelData;
use crate::error::{Error, Result};
use crate::links::{self, Family};
use crate::projection::{self, ProjectionMode};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

const MAX_INNER_SWEEPS: usize = 2_000;
const MAX_HALVINGS: usize = 30;
const MAX_EFFECT_STEP: f64 = 10.0;

/// Bias-correction flavor requested for an estimation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    None,
    Analytical,
    Jackknife,
}

/// The six jackknife combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JackknifeVariant {
    Ss1,
    Ss2,
    Js,
    Sj,
    Jj,
    Double,
}

impl JackknifeVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            JackknifeVariant::Ss1 => "ss1",
            JackknifeVariant::Ss2 => "ss2",
            JackknifeVariant::Js => "js",
            JackknifeVariant::Sj => "sj",
            JackknifeVariant::Jj => "jj",
            JackknifeVariant::Double => "double",
        }
    }
}

/// Which dimension the multiple-partition shuffles act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultipleDim {
    Individuals,
    Time,
    Both,
}

/// Full model specification: family, included effects, correction type and
/// its parameters.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub family: Family,
    pub include_ieffects: bool,
    pub include_teffects: bool,
    pub correction: Correction,
    /// Trimming parameter for the spectral term (analytical correction only).
    pub lags: usize,
    pub jk_variant: JackknifeVariant,
    pub multiple_m: usize,
    pub multiple_dim: MultipleDim,
    pub ibias: bool,
    pub tbias: bool,
    /// Declared population size for the APE variance; `None` means infinite.
    pub population: Option<u64>,
    /// Base seed for randomized partitions.
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            include_ieffects: true,
            include_teffects: true,
            correction: Correction::None,
            lags: 0,
            jk_variant: JackknifeVariant::Ss2,
            multiple_m: 0,
            multiple_dim: MultipleDim::Both,
            ibias: true,
            tbias: true,
            population: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.include_ieffects && !self.include_teffects {
            return Err(Error::InvalidOptions(
                "ieffects(no) together with teffects(no) is invalid".into(),
            ));
        }
        if !self.ibias && !self.tbias {
            return Err(Error::InvalidOptions(
                "ibias(no) together with tbias(no) is invalid".into(),
            ));
        }
        if self.lags > 0 && self.correction != Correction::Analytical {
            return Err(Error::InvalidOptions(
                "lags applies to the analytical correction only".into(),
            ));
        }
        if self.multiple_m > 0
            && !matches!(
                self.jk_variant,
                JackknifeVariant::Ss1 | JackknifeVariant::Ss2
            )
        {
            return Err(Error::InvalidOptions(
                "multiple partitions apply to the ss1 and ss2 variants only".into(),
            ));
        }
        if self.correction == Correction::Jackknife
            && self.jk_variant == JackknifeVariant::Double
            && self.include_ieffects
            && self.include_teffects
            && (!self.ibias || !self.tbias)
        {
            return Err(Error::InvalidOptions(
                "the double jackknife corrects both dimensions at once; ibias(no)/tbias(no) do not apply".into(),
            ));
        }
        if let Some(m) = self.population {
            if m == 0 {
                return Err(Error::InvalidOptions("population must be positive".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn projection_mode(&self) -> ProjectionMode {
        match (self.include_ieffects, self.include_teffects) {
            (true, true) => ProjectionMode::Both,
            (true, false) => ProjectionMode::Units,
            (false, true) => ProjectionMode::Periods,
            (false, false) => unreachable!("rejected by validate"),
        }
    }
}

/// Warm-start values keyed by original labels, used by subpanel refits.
#[derive(Debug, Clone, Default)]
pub struct StartValues {
    pub beta: Vec<f64>,
    pub alpha_by_unit: HashMap<String, f64>,
    pub gamma_by_period: HashMap<i64, f64>,
}

/// Maximum-likelihood fit: coefficients, normalized effects, and diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub iterations: usize,
    pub converged: bool,
    pub loglik_trace: Vec<f64>,
    /// Estimation sample after perfect-classification drops.
    pub panel: PanelData,
    pub spec: ModelSpec,
}

impl FitResult {
    /// Linear index of an observation of the retained panel.
    pub fn index_of(&self, obs: usize) -> f64 {
        let mut z = self.alpha[self.panel.unit_of(obs)] + self.gamma[self.panel.period_of(obs)];
        for (j, b) in self.beta.iter().enumerate() {
            z += b * self.panel.x_at(obs, j);
        }
        z
    }

    pub fn indices(&self) -> Vec<f64> {
        (0..self.panel.n_obs()).map(|o| self.index_of(o)).collect()
    }
}

/// Fits the fixed-effect MLE. Perfect-classification drops are applied first
/// (a no-op on already clean panels); the retained sample is stored in the
/// result.
pub fn fit_mle(panel: &PanelData, spec: &ModelSpec, tol: f64, max_iter: usize) -> Result<FitResult> {
    fit_mle_warm(panel, spec, tol, max_iter, None)
}

/// `fit_mle` with optional warm-start values (matched by label, so subpanels
/// can reuse full-panel estimates).
pub fn fit_mle_warm(
    panel: &PanelData,
    spec: &ModelSpec,
    tol: f64,
    max_iter: usize,
    start: Option<&StartValues>,
) -> Result<FitResult> {
    spec.validate()?;
    let panel = panel.drop_perfect_classification(spec.include_ieffects, spec.include_teffects)?;
    let k = panel.k();
    if k == 0 {
        return Err(Error::InvalidOptions("at least one covariate required".into()));
    }

    let mut state = State::new(&panel, spec, start);
    // effect scores must sit well below the outer tolerance, otherwise the
    // raw beta score bottoms out near (N + T) times the effect tolerance
    let effect_tol = (tol * 1e-2).max(1e-14);
    state.effect_sweeps(effect_tol)?;

    let mut trace = vec![state.loglik()];
    let mut iterations = 0;
    let mut converged = false;

    // invariant at the top of each pass: the effects are profiled at the
    // current beta, so the trace follows the profile likelihood
    for _ in 0..max_iter {
        let (score_beta, g_profile, curvature) = state.beta_step_pieces()?;
        let sup = state.score_sup_norm(&score_beta);
        if std::env::var_os("PANELFE_TRACE").is_some() {
            eprintln!(
                "iter {iterations}: ll={:.10} sup={sup:.3e} beta={:?}",
                state.loglik(),
                state.beta
            );
        }
        if sup < tol {
            converged = true;
            break;
        }

        let chol = Cholesky::new(curvature.clone())
            .ok_or_else(|| collinear_error(&curvature, panel.covariate_names()))?;
        let delta = chol.solve(&g_profile);

        // halve the step until the profile likelihood does not decrease;
        // each trial re-profiles the effects from the saved point
        let ll_before = *trace.last().unwrap();
        let saved_beta = state.beta.clone();
        let saved_alpha = state.alpha.clone();
        let saved_gamma = state.gamma.clone();
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = saved_beta
                .iter()
                .zip(delta.iter())
                .map(|(b, d)| b + scale * d)
                .collect();
            state.alpha.clone_from(&saved_alpha);
            state.gamma.clone_from(&saved_gamma);
            state.set_beta(trial);
            state.effect_sweeps(effect_tol)?;
            let ll_trial = state.loglik();
            if ll_trial >= ll_before - 1e-12 * (1.0 + ll_before.abs()) {
                trace.push(ll_trial);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // no step improves the profile: restore and treat the current
            // point as stationary
            state.alpha = saved_alpha;
            state.gamma = saved_gamma;
            state.set_beta(saved_beta);
            state.effect_sweeps(effect_tol)?;
            converged = sup < tol.max(1e-6);
            break;
        }

        iterations += 1;
        debug_assert!(
            trace[trace.len() - 1] >= trace[trace.len() - 2] - 1e-7 * (1.0 + ll_before.abs()),
            "likelihood decreased across an outer iteration"
        );
    }

    if !converged {
        let (score_beta, _, _) = state.beta_step_pieces()?;
        if state.score_sup_norm(&score_beta) < tol {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NotConverged(max_iter));
    }

    state.normalize();
    let loglik = state.loglik();
    trace.push(loglik);
    let loglik_null = loglik_null(&panel, spec.family);
    Ok(FitResult {
        beta: state.beta,
        alpha: state.alpha,
        gamma: state.gamma,
        loglik,
        loglik_null,
        iterations,
        converged,
        loglik_trace: trace,
        panel,
        spec: spec.clone(),
    })
}

/// Maximizes the likelihood over the effects at fixed `beta`, under the same
/// normalization as `fit_mle`. The panel is used as given (no drops).
pub fn profile_effects(
    beta: &[f64],
    panel: &PanelData,
    spec: &ModelSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    assert!(beta.iter().all(|b| b.is_finite()));
    let mut state = State::new(panel, spec, None);
    state.set_beta(beta.to_vec());
    state.effect_sweeps((DEFAULT_TOL * 1e-2).max(1e-14))?;
    state.normalize();
    Ok((state.alpha, state.gamma))
}

/// Maximized log-likelihood of the intercept-only model,
/// `n [ybar log ybar + (1 - ybar) log(1 - ybar)]`. The value does not depend
/// on the link family: the intercept-only MLE fits the sample mean exactly
/// under any strictly monotone link.
pub fn loglik_null(panel: &PanelData, _family: Family) -> f64 {
    let n = panel.n_obs() as f64;
    let ybar: f64 = (0..panel.n_obs()).map(|o| panel.y(o)).sum::<f64>() / n;
    if ybar == 0.0 || ybar == 1.0 {
        return 0.0;
    }
    n * (ybar * ybar.ln() + (1.0 - ybar) * (1.0 - ybar).ln())
}

fn collinear_error(m: &DMatrix<f64>, names: &[String]) -> Error {
    // walk the leading principal minors; the first failure names the column
    for size in 1..=m.nrows() {
        let sub = m.view((0, 0), (size, size)).into_owned();
        if Cholesky::new(sub).is_none() {
            return Error::CollinearCovariates {
                column: names.get(size - 1).cloned(),
            };
        }
    }
    Error::CollinearCovariates { column: None }
}

/// Mutable optimization state over the retained panel.
struct State<'a> {
    panel: &'a PanelData,
    spec: &'a ModelSpec,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    xb: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(panel: &'a PanelData, spec: &'a ModelSpec, start: Option<&StartValues>) -> Self {
        let k = panel.k();
        let beta = start
            .filter(|s| s.beta.len() == k)
            .map(|s| s.beta.clone())
            .unwrap_or_else(|| vec![0.0; k]);
        let mut alpha = vec![0.0; panel.n_units()];
        if spec.include_ieffects {
            for i in 0..panel.n_units() {
                let warm = start.and_then(|s| s.alpha_by_unit.get(panel.unit_label(i)));
                alpha[i] = match warm {
                    Some(&a) => a,
                    None => {
                        let list = panel.obs_of_unit(i);
                        let ybar = list.iter().map(|&o| panel.y(o as usize)).sum::<f64>()
                            / list.len() as f64;
                        links::inv_link(ybar.clamp(0.01, 0.99), spec.family)
                    }
                };
            }
        }
        let mut gamma = vec![0.0; panel.n_periods()];
        if spec.include_teffects {
            if let Some(s) = start {
                for t in 0..panel.n_periods() {
                    if let Some(&g) = s.gamma_by_period.get(&panel.period_label(t)) {
                        gamma[t] = g;
                    }
                }
            }
        }
        let mut state = State {
            panel,
            spec,
            beta,
            alpha,
            gamma,
            xb: vec![0.0; panel.n_obs()],
        };
        state.refresh_xb();
        state
    }

    fn refresh_xb(&mut self) {
        let k = self.panel.k();
        for o in 0..self.panel.n_obs() {
            let row = self.panel.x_row(o);
            let mut v = 0.0;
            for j in 0..k {
                v += row[j] * self.beta[j];
            }
            self.xb[o] = v;
        }
    }

    fn set_beta(&mut self, beta: Vec<f64>) {
        self.beta = beta;
        self.refresh_xb();
    }

    fn z(&self, o: usize) -> f64 {
        self.xb[o] + self.alpha[self.panel.unit_of(o)] + self.gamma[self.panel.period_of(o)]
    }

    fn loglik(&self) -> f64 {
        (0..self.panel.n_obs())
            .map(|o| links::loglik_obs(self.panel.y(o), self.z(o), self.spec.family))
            .sum()
    }

    /// Alternating damped Newton updates of each effect until the effect
    /// scores fall below `tol` in sup-norm.
    fn effect_sweeps(&mut self, tol: f64) -> Result<()> {
        if !self.spec.include_ieffects && !self.spec.include_teffects {
            return Ok(());
        }
        for _ in 0..MAX_INNER_SWEEPS {
            let mut sup: f64 = 0.0;
            if self.spec.include_ieffects {
                for i in 0..self.panel.n_units() {
                    let s = self.update_unit(i);
                    sup = sup.max(s.abs());
                }
            }
            if self.spec.include_teffects {
                for t in 0..self.panel.n_periods() {
                    let s = self.update_period(t);
                    sup = sup.max(s.abs());
                }
            }
            if sup < tol {
                return Ok(());
            }
        }
        Err(Error::NotConverged(MAX_INNER_SWEEPS))
    }

    /// One damped Newton update of alpha_i; returns the score before the
    /// update.
    fn update_unit(&mut self, i: usize) -> f64 {
        let family = self.spec.family;
        let mut score = 0.0;
        let mut curv = 0.0;
        let mut ll = 0.0;
        for &o in self.panel.obs_of_unit(i) {
            let o = o as usize;
            let z = self.z(o);
            let y = self.panel.y(o);
            score += links::score_obs(y, z, family);
            curv += links::curvature_obs(y, z, family);
            ll += links::loglik_obs(y, z, family);
        }
        let mut step = (score / curv).clamp(-MAX_EFFECT_STEP, MAX_EFFECT_STEP);
        for _ in 0..MAX_HALVINGS {
            let trial: f64 = self
                .panel
                .obs_of_unit(i)
                .iter()
                .map(|&o| {
                    let o = o as usize;
                    links::loglik_obs(self.panel.y(o), self.z(o) + step, family)
                })
                .sum();
            if trial >= ll - 1e-12 * (1.0 + ll.abs()) {
                self.alpha[i] += step;
                return score;
            }
            step *= 0.5;
        }
        score
    }

    fn update_period(&mut self, t: usize) -> f64 {
        let family = self.spec.family;
        let mut score = 0.0;
        let mut curv = 0.0;
        let mut ll = 0.0;
        for &o in self.panel.obs_of_period(t) {
            let o = o as usize;
            let z = self.z(o);
            let y = self.panel.y(o);
            score += links::score_obs(y, z, family);
            curv += links::curvature_obs(y, z, family);
            ll += links::loglik_obs(y, z, family);
        }
        let mut step = (score / curv).clamp(-MAX_EFFECT_STEP, MAX_EFFECT_STEP);
        for _ in 0..MAX_HALVINGS {
            let trial: f64 = self
                .panel
                .obs_of_period(t)
                .iter()
                .map(|&o| {
                    let o = o as usize;
                    links::loglik_obs(self.panel.y(o), self.z(o) + step, family)
                })
                .sum();
            if trial >= ll - 1e-12 * (1.0 + ll.abs()) {
                self.gamma[t] += step;
                return score;
            }
            step *= 0.5;
        }
        score
    }

    /// Raw beta score, profiled score (against residualized covariates), and
    /// the profile curvature matrix.
    fn beta_step_pieces(&self) -> Result<(Vec<f64>, DVector<f64>, DMatrix<f64>)> {
        let panel = self.panel;
        let k = panel.k();
        let n = panel.n_obs();
        let family = self.spec.family;

        let mut u = vec![0.0; n];
        let mut omega = vec![0.0; n];
        for o in 0..n {
            let z = self.z(o);
            u[o] = links::score_obs(panel.y(o), z, family);
            omega[o] = links::link_eval(z, family).omega;
        }

        let columns: Vec<Vec<f64>> = (0..k)
            .map(|j| (0..n).map(|o| panel.x_at(o, j)).collect())
            .collect();
        let proj = projection::weighted_residualize(
            panel,
            &columns,
            &omega,
            self.spec.projection_mode(),
            projection::DEFAULT_TOL,
            projection::DEFAULT_MAX_ITER,
        )?;

        let mut score = vec![0.0; k];
        let mut g = DVector::zeros(k);
        let mut m = DMatrix::zeros(k, k);
        for o in 0..n {
            for j in 0..k {
                let xt_j = proj.residual[j][o];
                score[j] += u[o] * panel.x_at(o, j);
                g[j] += u[o] * xt_j;
                for l in 0..=j {
                    m[(j, l)] += omega[o] * xt_j * proj.residual[l][o];
                }
            }
        }
        for j in 0..k {
            for l in (j + 1)..k {
                m[(j, l)] = m[(l, j)];
            }
        }
        Ok((score, g, m))
    }

    /// Sup-norm over the full score vector (beta block plus effect scores).
    fn score_sup_norm(&self, score_beta: &[f64]) -> f64 {
        let family = self.spec.family;
        let mut sup = score_beta.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        if self.spec.include_ieffects {
            for i in 0..self.panel.n_units() {
                let s: f64 = self
                    .panel
                    .obs_of_unit(i)
                    .iter()
                    .map(|&o| links::score_obs(self.panel.y(o as usize), self.z(o as usize), family))
                    .sum();
                sup = sup.max(s.abs());
            }
        }
        if self.spec.include_teffects {
            for t in 0..self.panel.n_periods() {
                let s: f64 = self
                    .panel
                    .obs_of_period(t)
                    .iter()
                    .map(|&o| links::score_obs(self.panel.y(o as usize), self.z(o as usize), family))
                    .sum();
                sup = sup.max(s.abs());
            }
        }
        sup
    }

    /// With both effect sets, fixes the additive indeterminacy by setting the
    /// first retained period's effect to zero.
    fn normalize(&mut self) {
        if self.spec.include_ieffects && self.spec.include_teffects && !self.gamma.is_empty() {
            let c = self.gamma[0];
            for g in &mut self.gamma {
                *g -= c;
            }
            for a in &mut self.alpha {
                *a += c;
            }
        }
    }
}
