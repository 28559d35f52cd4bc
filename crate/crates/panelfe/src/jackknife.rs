//! Jackknife bias corrections over subpanel refits.
//!
//! Six variants combine the full-panel estimate with averages of subpanel
//! estimates: simultaneous and separate split-panel halves (ss1, ss2), mixes
//! of delete-one and split-panel schemes (js, sj, jj), and a delete-one
//! scheme over paired cross-section/time indices (double). Splits operate on
//! the sorted retained labels; with multiple partitions the chosen
//! dimension's ordering is reshuffled and the corrected estimates averaged.
//! The same combinations are applied coordinatewise to the APEs using the
//! subpanel APE estimates.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::ape;
use crate::data_model::{DropLog, PanelData};
use crate::error::{Error, Result};
use crate::estimator::{
    fit_mle_warm, FitResult, JackknifeVariant, ModelSpec, MultipleDim, StartValues,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};

/// Named subestimate groups a combination can draw on. Each is the average of
/// the subpanel estimates listed under it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    /// Mean of the four half-units x half-periods fits.
    QuadrantMean,
    /// Mean of the two all-units x half-periods fits.
    HalfTimeMean,
    /// Mean of the two half-units x all-periods fits.
    HalfUnitMean,
    /// Mean of the N leave-one-unit fits.
    LeaveUnitMean,
    /// Mean of the T leave-one-period fits.
    LeavePeriodMean,
    /// Mean of the N leave-one-entity fits (same label removed from both
    /// dimensions).
    LeaveEntityMean,
}

impl Term {
    pub fn as_str(self) -> &'static str {
        match self {
            Term::QuadrantMean => "quadrant-mean",
            Term::HalfTimeMean => "half-time-mean",
            Term::HalfUnitMean => "half-unit-mean",
            Term::LeaveUnitMean => "leave-unit-mean",
            Term::LeavePeriodMean => "leave-period-mean",
            Term::LeaveEntityMean => "leave-entity-mean",
        }
    }
}

/// One subpanel: dense unit/period ids of the base panel plus a printable
/// identity for error reporting.
#[derive(Debug, Clone)]
pub struct SubpanelSpec {
    pub units: Vec<u32>,
    pub periods: Vec<u32>,
    pub id: String,
}

/// The subpanels a term averages over.
#[derive(Debug, Clone)]
pub struct TermPlan {
    pub term: Term,
    pub coefficient: f64,
    pub subpanels: Vec<SubpanelSpec>,
}

/// A full partition plan: the variant, the full-estimate coefficient, and the
/// term groups with their subpanels.
#[derive(Debug, Clone)]
pub struct SubpanelPlan {
    pub variant: JackknifeVariant,
    pub full_coefficient: f64,
    pub terms: Vec<TermPlan>,
    pub permutation_seed: u64,
    pub multiple_m: usize,
    pub multiple_dim: MultipleDim,
}

/// Combination coefficients for a variant, given which biases are being
/// corrected. `n` and `t` are the retained unit and period counts.
///
/// Two-way models use the six standard combinations. When only one bias is
/// corrected, the split or deletion acting on the other dimension is kept and
/// the rest dropped: split-panel corrections halve the time dimension to
/// remove the individual-effect bias and halve the unit dimension to remove
/// the time-effect bias. One-way models collapse to the documented one-way
/// forms (split variants use the half-panel scheme, delete-one variants the
/// leave-one-out scheme on the included dimension).
pub fn combination(
    variant: JackknifeVariant,
    spec: &ModelSpec,
    n: usize,
    t: usize,
) -> (f64, Vec<(Term, f64)>) {
    use JackknifeVariant::*;
    use Term::*;
    let nf = n as f64;
    let tf = t as f64;

    if spec.include_ieffects && !spec.include_teffects {
        if !spec.ibias {
            return (1.0, vec![]);
        }
        return match variant {
            Ss1 | Ss2 | Sj => (2.0, vec![(HalfTimeMean, -1.0)]),
            Js | Jj | Double => (nf, vec![(LeaveUnitMean, -(nf - 1.0))]),
        };
    }
    if spec.include_teffects && !spec.include_ieffects {
        if !spec.tbias {
            return (1.0, vec![]);
        }
        return match variant {
            Ss1 | Ss2 | Js => (2.0, vec![(HalfUnitMean, -1.0)]),
            Sj | Jj | Double => (tf, vec![(LeavePeriodMean, -(tf - 1.0))]),
        };
    }

    let correct_i = spec.ibias;
    let correct_t = spec.tbias;
    match (correct_i, correct_t) {
        (true, true) => match variant {
            Ss1 => (2.0, vec![(QuadrantMean, -1.0)]),
            Ss2 => (3.0, vec![(HalfTimeMean, -1.0), (HalfUnitMean, -1.0)]),
            Js => (
                nf + 1.0,
                vec![(LeaveUnitMean, -(nf - 1.0)), (HalfTimeMean, -1.0)],
            ),
            Sj => (
                tf + 1.0,
                vec![(HalfUnitMean, -1.0), (LeavePeriodMean, -(tf - 1.0))],
            ),
            Jj => (
                nf + tf - 1.0,
                vec![
                    (LeaveUnitMean, -(nf - 1.0)),
                    (LeavePeriodMean, -(tf - 1.0)),
                ],
            ),
            Double => (nf, vec![(LeaveEntityMean, -(nf - 1.0))]),
        },
        // individual-effect bias only: act on the time dimension
        (true, false) => match variant {
            Ss1 | Ss2 | Js => (2.0, vec![(HalfTimeMean, -1.0)]),
            Sj | Jj => (tf, vec![(LeavePeriodMean, -(tf - 1.0))]),
            Double => unreachable!("rejected by validate"),
        },
        // time-effect bias only: act on the unit dimension
        (false, true) => match variant {
            Ss1 | Ss2 | Sj => (2.0, vec![(HalfUnitMean, -1.0)]),
            Js | Jj => (nf, vec![(LeaveUnitMean, -(nf - 1.0))]),
            Double => unreachable!("rejected by validate"),
        },
        (false, false) => unreachable!("rejected by validate"),
    }
}

/// Applies a variant's combination to the full estimate and the named
/// subestimate averages, coordinatewise.
pub fn combine(
    variant: JackknifeVariant,
    spec: &ModelSpec,
    full: &[f64],
    subestimates: &BTreeMap<Term, Vec<f64>>,
    n_eff: usize,
    t_eff: usize,
) -> Result<Vec<f64>> {
    let (full_coef, terms) = combination(variant, spec, n_eff, t_eff);
    let mut out: Vec<f64> = full.iter().map(|v| full_coef * v).collect();
    for (term, coef) in terms {
        let sub = subestimates
            .get(&term)
            .ok_or_else(|| Error::VariantInputMissing(term.as_str().to_string()))?;
        for (o, s) in out.iter_mut().zip(sub) {
            *o += coef * s;
        }
    }
    Ok(out)
}

/// Fits the model on the subpanel of the given unit and period labels and
/// returns the subpanel coefficient and APE estimates.
pub fn subpanel_fit(
    panel: &PanelData,
    spec: &ModelSpec,
    unit_labels: &[String],
    period_labels: &[i64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let units: Vec<u32> = (0..panel.n_units() as u32)
        .filter(|&i| unit_labels.iter().any(|l| l == panel.unit_label(i as usize)))
        .collect();
    let periods: Vec<u32> = (0..panel.n_periods() as u32)
        .filter(|&t| period_labels.contains(&panel.period_label(t as usize)))
        .collect();
    let sub = SubpanelSpec {
        units,
        periods,
        id: "explicit".into(),
    };
    let est = run_subpanel(panel, spec, &sub, None)?;
    Ok((est.beta, est.delta))
}

struct SubEstimate {
    beta: Vec<f64>,
    delta: Vec<f64>,
    drops: DropLog,
}

fn run_subpanel(
    panel: &PanelData,
    spec: &ModelSpec,
    sub: &SubpanelSpec,
    warm: Option<&StartValues>,
) -> Result<SubEstimate> {
    let wrap = |e: Error| Error::Subpanel {
        subset: sub.id.clone(),
        source: Box::new(e),
    };
    if sub.units.is_empty() || sub.periods.is_empty() {
        return Err(wrap(Error::EmptyAfterDrop));
    }
    let restricted = panel.restrict(&sub.units, &sub.periods).map_err(wrap)?;
    let fit = fit_mle_warm(&restricted, spec, DEFAULT_TOL, DEFAULT_MAX_ITER, warm).map_err(wrap)?;
    let pe = ape::partial_effects(&fit.beta, &fit.alpha, &fit.gamma, &fit.panel, spec.family);
    Ok(SubEstimate {
        beta: fit.beta,
        delta: pe.delta,
        drops: fit.panel.drop_log(),
    })
}

/// Per-run bookkeeping surfaced with the corrected estimates: heavy dropping
/// inside subpanels signals unreliable jackknife estimates.
#[derive(Debug, Clone, Default)]
pub struct JackknifeDiagnostics {
    pub subfits: usize,
    pub obs_dropped: usize,
    pub units_dropped: usize,
    pub periods_dropped: usize,
    pub partitions: usize,
}

/// Corrected coefficient and APE estimates.
#[derive(Debug, Clone)]
pub struct JackknifeResult {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub diagnostics: JackknifeDiagnostics,
}

/// Runs the jackknife correction for `spec` on the panel. The full fit is
/// performed internally.
pub fn jackknife_correct(panel: &PanelData, spec: &ModelSpec) -> Result<JackknifeResult> {
    spec.validate()?;
    let fit = fit_mle_warm(panel, spec, DEFAULT_TOL, DEFAULT_MAX_ITER, None)?;
    jackknife_correct_from(&fit, spec)
}

/// Jackknife correction reusing an existing full fit (whose panel is the
/// retained sample).
pub fn jackknife_correct_from(fit: &FitResult, spec: &ModelSpec) -> Result<JackknifeResult> {
    let panel = &fit.panel;
    let pe = ape::partial_effects(&fit.beta, &fit.alpha, &fit.gamma, panel, spec.family);
    let full_beta = fit.beta.clone();
    let full_delta = pe.delta.clone();

    let warm = StartValues {
        beta: fit.beta.clone(),
        alpha_by_unit: (0..panel.n_units())
            .map(|i| (panel.unit_label(i).to_string(), fit.alpha[i]))
            .collect(),
        gamma_by_period: (0..panel.n_periods())
            .map(|t| (panel.period_label(t), fit.gamma[t]))
            .collect(),
    };

    let reps = if spec.multiple_m == 0 { 1 } else { spec.multiple_m };
    let mut beta_acc = vec![0.0; full_beta.len()];
    let mut delta_acc = vec![0.0; full_delta.len()];
    let mut diagnostics = JackknifeDiagnostics {
        partitions: reps,
        ..Default::default()
    };

    for rep in 0..reps {
        let shuffle = spec.multiple_m > 0;
        let plan = build_plan(panel, spec, rep as u64, shuffle)?;
        let (beta_c, delta_c) =
            execute_plan(panel, spec, &plan, &full_beta, &full_delta, &warm, &mut diagnostics)?;
        for (a, v) in beta_acc.iter_mut().zip(&beta_c) {
            *a += v;
        }
        for (a, v) in delta_acc.iter_mut().zip(&delta_c) {
            *a += v;
        }
    }
    for v in &mut beta_acc {
        *v /= reps as f64;
    }
    for v in &mut delta_acc {
        *v /= reps as f64;
    }
    Ok(JackknifeResult {
        beta: beta_acc,
        delta: delta_acc,
        diagnostics,
    })
}

fn execute_plan(
    panel: &PanelData,
    spec: &ModelSpec,
    plan: &SubpanelPlan,
    full_beta: &[f64],
    full_delta: &[f64],
    warm: &StartValues,
    diagnostics: &mut JackknifeDiagnostics,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut beta_means: BTreeMap<Term, Vec<f64>> = BTreeMap::new();
    let mut delta_means: BTreeMap<Term, Vec<f64>> = BTreeMap::new();

    for term_plan in &plan.terms {
        let estimates: Vec<SubEstimate> = term_plan
            .subpanels
            .par_iter()
            .map(|sub| run_subpanel(panel, spec, sub, Some(warm)))
            .collect::<Result<Vec<_>>>()?;
        let count = estimates.len() as f64;
        let mut beta_mean = vec![0.0; full_beta.len()];
        let mut delta_mean = vec![0.0; full_delta.len()];
        for est in &estimates {
            for (a, v) in beta_mean.iter_mut().zip(&est.beta) {
                *a += v / count;
            }
            for (a, v) in delta_mean.iter_mut().zip(&est.delta) {
                *a += v / count;
            }
            diagnostics.subfits += 1;
            diagnostics.obs_dropped += est.drops.n_obs_dropped;
            diagnostics.units_dropped += est.drops.n_units_dropped;
            diagnostics.periods_dropped += est.drops.n_periods_dropped;
        }
        beta_means.insert(term_plan.term, beta_mean);
        delta_means.insert(term_plan.term, delta_mean);
    }

    // apply the plan's own coefficients: they match `combination` except for
    // the delete-one-entity count on asymmetrically dropped square panels
    let apply = |full: &[f64], means: &BTreeMap<Term, Vec<f64>>| -> Result<Vec<f64>> {
        let mut out: Vec<f64> = full.iter().map(|v| plan.full_coefficient * v).collect();
        for term_plan in &plan.terms {
            let sub = means
                .get(&term_plan.term)
                .ok_or_else(|| Error::VariantInputMissing(term_plan.term.as_str().to_string()))?;
            for (o, s) in out.iter_mut().zip(sub) {
                *o += term_plan.coefficient * s;
            }
        }
        Ok(out)
    };
    Ok((apply(full_beta, &beta_means)?, apply(full_delta, &delta_means)?))
}

/// Builds the partition plan for one repetition. With `shuffle`, the
/// dimensions selected by `multiple_dim` are reordered with a stream seeded
/// from `(spec.seed, rep)`; otherwise orderings follow the sorted retained
/// labels.
pub fn build_plan(
    panel: &PanelData,
    spec: &ModelSpec,
    rep: u64,
    shuffle: bool,
) -> Result<SubpanelPlan> {
    let mut units_order: Vec<u32> = (0..panel.n_units() as u32).collect();
    units_order.sort_by(|&a, &b| {
        panel
            .unit_label(a as usize)
            .cmp(panel.unit_label(b as usize))
    });
    let mut periods_order: Vec<u32> = (0..panel.n_periods() as u32).collect();
    periods_order.sort_by_key(|&t| panel.period_label(t as usize));

    if shuffle {
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        rng.set_stream(rep + 1);
        match spec.multiple_dim {
            MultipleDim::Individuals => units_order.shuffle(&mut rng),
            MultipleDim::Time => periods_order.shuffle(&mut rng),
            MultipleDim::Both => {
                units_order.shuffle(&mut rng);
                periods_order.shuffle(&mut rng);
            }
        }
    }
    build_plan_with_orderings(panel, spec, &units_order, &periods_order, rep)
}

/// Builds the plan for explicit orderings (exposed so identity-permutation
/// behavior can be checked directly).
pub fn build_plan_with_orderings(
    panel: &PanelData,
    spec: &ModelSpec,
    units_order: &[u32],
    periods_order: &[u32],
    rep: u64,
) -> Result<SubpanelPlan> {
    let variant = spec.jk_variant;
    let (_, terms_needed) =
        combination(variant, spec, panel.n_units(), panel.n_periods());

    let all_units: Vec<u32> = units_order.to_vec();
    let all_periods: Vec<u32> = periods_order.to_vec();
    let (u_first, u_second) = split_halves(units_order);
    let (p_first, p_second) = split_halves(periods_order);

    let mut terms = Vec::new();
    for (term, coefficient) in terms_needed {
        let subpanels = match term {
            Term::QuadrantMean => vec![
                spec_of(&u_first, &p_first, "units<=half, periods<=half"),
                spec_of(&u_second, &p_first, "units>=half, periods<=half"),
                spec_of(&u_first, &p_second, "units<=half, periods>=half"),
                spec_of(&u_second, &p_second, "units>=half, periods>=half"),
            ],
            Term::HalfTimeMean => vec![
                spec_of(&all_units, &p_first, "periods<=half"),
                spec_of(&all_units, &p_second, "periods>=half"),
            ],
            Term::HalfUnitMean => vec![
                spec_of(&u_first, &all_periods, "units<=half"),
                spec_of(&u_second, &all_periods, "units>=half"),
            ],
            Term::LeaveUnitMean => units_order
                .iter()
                .map(|&drop| {
                    let kept: Vec<u32> =
                        units_order.iter().copied().filter(|&u| u != drop).collect();
                    spec_of(
                        &kept,
                        &all_periods,
                        &format!("drop unit {}", panel.unit_label(drop as usize)),
                    )
                })
                .collect(),
            Term::LeavePeriodMean => periods_order
                .iter()
                .map(|&drop| {
                    let kept: Vec<u32> = periods_order
                        .iter()
                        .copied()
                        .filter(|&t| t != drop)
                        .collect();
                    spec_of(
                        &all_units,
                        &kept,
                        &format!("drop period {}", panel.period_label(drop as usize)),
                    )
                })
                .collect(),
            Term::LeaveEntityMean => leave_entity_subpanels(panel)?,
        };
        terms.push(TermPlan {
            term,
            coefficient,
            subpanels,
        });
    }

    let (mut full_coefficient, _) =
        combination(variant, spec, panel.n_units(), panel.n_periods());
    // the delete-one-entity count is the entity-set size, which can differ
    // from both dimension counts when perfect-classification drops were
    // asymmetric; rebuild the double coefficients from it
    for term_plan in &mut terms {
        if term_plan.term == Term::LeaveEntityMean {
            let entities = term_plan.subpanels.len() as f64;
            full_coefficient = entities;
            term_plan.coefficient = -(entities - 1.0);
        }
    }
    Ok(SubpanelPlan {
        variant,
        full_coefficient,
        terms,
        permutation_seed: spec.seed.wrapping_add(rep),
        multiple_m: spec.multiple_m,
        multiple_dim: spec.multiple_dim,
    })
}

/// First half: positions 1..=ceil(n/2); second half: positions
/// floor(n/2 + 1)..=n (the halves overlap at the middle when n is odd).
fn split_halves(order: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let n = order.len();
    let first_end = n.div_ceil(2);
    let second_start = n / 2;
    (order[..first_end].to_vec(), order[second_start..].to_vec())
}

fn spec_of(units: &[u32], periods: &[u32], id: &str) -> SubpanelSpec {
    SubpanelSpec {
        units: units.to_vec(),
        periods: periods.to_vec(),
        id: id.to_string(),
    }
}

fn leave_entity_subpanels(panel: &PanelData) -> Result<Vec<SubpanelSpec>> {
    // both dimensions must index the same entity space: integer-parsable unit
    // labels, and the two retained label sets mostly coinciding (they can
    // differ by a few entities when perfect-classification drops were
    // asymmetric)
    let mut unit_ints: Vec<i64> = Vec::with_capacity(panel.n_units());
    for i in 0..panel.n_units() {
        match panel.unit_label(i).parse::<i64>() {
            Ok(v) => unit_ints.push(v),
            Err(_) => return Err(Error::DoubleRequiresSquarePanel),
        }
    }
    let unit_set: std::collections::BTreeSet<i64> = unit_ints.iter().copied().collect();
    let period_set: std::collections::BTreeSet<i64> =
        panel.period_labels().iter().copied().collect();
    let overlap = unit_set.intersection(&period_set).count();
    if 2 * overlap < unit_set.len().max(period_set.len()) {
        return Err(Error::DoubleRequiresSquarePanel);
    }
    let entities: Vec<i64> = unit_set.union(&period_set).copied().collect();

    let mut subs = Vec::with_capacity(entities.len());
    for &entity in &entities {
        let units: Vec<u32> = (0..panel.n_units() as u32)
            .filter(|&i| unit_ints[i as usize] != entity)
            .collect();
        let periods: Vec<u32> = (0..panel.n_periods() as u32)
            .filter(|&t| panel.period_label(t as usize) != entity)
            .collect();
        subs.push(SubpanelSpec {
            units,
            periods,
            id: format!("drop entity {entity}"),
        });
    }
    Ok(subs)
}
