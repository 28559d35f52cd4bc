//! Monte Carlo harness for the bias-correction study.
//!
//! The design mirrors a directed-pair panel: a pool of entities appears on
//! both dimensions, each ordered pair (excluding self-pairs) carries a binary
//! covariate and a continuous covariate, and outcomes are drawn from the
//! logit model at the true parameter values. Each replication samples
//! entities without replacement, redraws outcomes, runs the requested
//! estimators, and records estimates, standard errors, and coverage. The pool
//! is either synthetic (standard-normal effects and distance, the binary
//! covariate drawn once from the static model) or calibrated from a file
//! exported by a previous fit.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::analytical;
use crate::ape;
use crate::data_model::{Observation, PanelData};
use crate::error::{Error, Result};
use crate::estimator::{fit_mle, Correction, JackknifeVariant, ModelSpec};
use crate::evalctx::evaluate;
use crate::inference::{self, Z_CRIT_95};
use crate::jackknife;
use crate::links::Family;

/// Default entity pool size for the synthetic design, matching the
/// directed-pair application the study is calibrated against.
pub const DEFAULT_POOL: usize = 157;

const TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

/// Covariate source for the study.
#[derive(Debug, Clone)]
pub enum Design {
    /// Standard-normal effects and distance; the binary covariate is drawn
    /// once from the static model before outcome simulation.
    Synthetic { pool: usize },
    /// Per-pair covariates and effects from a calibration file
    /// (columns id,time,x1,x2,alpha,gamma).
    Calibrated { path: PathBuf },
}

/// Estimators the study can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McEstimator {
    Fe,
    Analytical(usize),
    Jackknife(JackknifeVariant),
}

impl McEstimator {
    pub fn parse(token: &str) -> Result<Self> {
        let t = token.trim().to_lowercase();
        if t == "fe" {
            return Ok(McEstimator::Fe);
        }
        if let Some(rest) = t.strip_prefix("an") {
            if let Ok(l) = rest.parse::<usize>() {
                return Ok(McEstimator::Analytical(l));
            }
        }
        let variant = match t.as_str() {
            "ss1" => Some(JackknifeVariant::Ss1),
            "ss2" => Some(JackknifeVariant::Ss2),
            "js" => Some(JackknifeVariant::Js),
            "sj" => Some(JackknifeVariant::Sj),
            "jj" => Some(JackknifeVariant::Jj),
            "double" => Some(JackknifeVariant::Double),
            _ => None,
        };
        variant
            .map(McEstimator::Jackknife)
            .ok_or_else(|| Error::InvalidOptions(format!("unknown estimator '{token}'")))
    }

    pub fn label(&self) -> String {
        match self {
            McEstimator::Fe => "fe".into(),
            McEstimator::Analytical(l) => format!("an{l}"),
            McEstimator::Jackknife(v) => v.as_str().to_string(),
        }
    }
}

/// Study configuration.
#[derive(Debug, Clone)]
pub struct SimDesign {
    /// True coefficients on (binary, continuous).
    pub beta_true: [f64; 2],
    pub design: Design,
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub estimators: Vec<McEstimator>,
    pub seed: u64,
    /// Population for the APE variance; `None` defaults to the pool's pair
    /// count, mirroring the full-sample population declaration.
    pub population: Option<u64>,
}

impl SimDesign {
    pub fn new() -> Self {
        SimDesign {
            beta_true: [2.838, -0.839],
            design: Design::Synthetic { pool: DEFAULT_POOL },
            sizes: vec![50],
            replications: 200,
            estimators: vec![McEstimator::Fe, McEstimator::Analytical(0)],
            seed: 0,
            population: None,
        }
    }
}

impl Default for SimDesign {
    fn default() -> Self {
        Self::new()
    }
}

/// One metric line: a parameter of one estimator at one sample size.
/// Bias, standard deviation, and RMSE are in percent of the true value
/// unless `absolute_units` is set (true value numerically zero).
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub estimator: String,
    pub n: usize,
    pub parameter: String,
    pub bias_pct: f64,
    pub sd_pct: f64,
    pub rmse_pct: f64,
    pub se_sd_ratio: f64,
    pub coverage95: f64,
    pub absolute_units: bool,
}

#[derive(Debug, Clone)]
pub struct FailureCount {
    pub estimator: String,
    pub n: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub rows: Vec<MetricRow>,
    pub failures: Vec<FailureCount>,
    pub replications: usize,
    pub seed: u64,
}

/// Simulated binary outcome: 1 iff `index` exceeds a standard logistic draw
/// `ln(1/u - 1)` built from the uniform `u`.
pub fn simulate_outcome(index: f64, u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    if index > (1.0 / u - 1.0).ln() {
        1.0
    } else {
        0.0
    }
}

/// Entity pool: per-entity effects plus per-ordered-pair covariates.
struct PairPool {
    labels: Vec<i64>,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    /// (binary, continuous) covariates for present pairs, keyed by pool index.
    pairs: HashMap<(usize, usize), (f64, f64)>,
}

impl PairPool {
    fn n_pairs(&self) -> usize {
        self.pairs.len()
    }
}

fn build_synthetic_pool(pool: usize, beta_cont: f64, seed: u64) -> PairPool {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let normal = |rng: &mut ChaCha12Rng| -> f64 {
        // Box-Muller keeps the draw independent of rand_distr versioning
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let alpha: Vec<f64> = (0..pool).map(|_| normal(&mut rng)).collect();
    let gamma: Vec<f64> = (0..pool).map(|_| normal(&mut rng)).collect();
    let mut dist = HashMap::new();
    for i in 0..pool {
        for j in 0..pool {
            if i != j {
                dist.insert((i, j), normal(&mut rng));
            }
        }
    }
    // the binary covariate is drawn once from the static model
    let mut pairs = HashMap::new();
    for i in 0..pool {
        for j in 0..pool {
            if i == j {
                continue;
            }
            let d = dist[&(i, j)];
            let z = beta_cont * d + alpha[i] + gamma[j];
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let lagged = simulate_outcome(z, u);
            pairs.insert((i, j), (lagged, d));
        }
    }
    PairPool {
        labels: (0..pool as i64).collect(),
        alpha,
        gamma,
        pairs,
    }
}

fn load_calibrated_pool(path: &PathBuf) -> Result<PairPool> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ci, ct) = (col("id")?, col("time")?);
    let (cx1, cx2) = (col("x1")?, col("x2")?);
    let (ca, cg) = (col("alpha")?, col("gamma")?);

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |c: usize| -> Result<f64> {
            record
                .get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidOptions("bad calibration file cell".into()))
        };
        let id = record
            .get(ci)
            .and_then(|s| s.trim().parse::<i64>().ok())
            .ok_or_else(|| Error::InvalidOptions("calibration id must be an integer".into()))?;
        let time = record
            .get(ct)
            .and_then(|s| s.trim().parse::<i64>().ok())
            .ok_or_else(|| Error::InvalidOptions("calibration time must be an integer".into()))?;
        rows.push((id, time, get(cx1)?, get(cx2)?, get(ca)?, get(cg)?));
    }
    if rows.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let mut labels: Vec<i64> = rows.iter().map(|r| r.0).collect();
    labels.extend(rows.iter().map(|r| r.1));
    labels.sort_unstable();
    labels.dedup();
    let index: HashMap<i64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let p = labels.len();
    let mut alpha = vec![f64::NAN; p];
    let mut gamma = vec![f64::NAN; p];
    let mut pairs = HashMap::new();
    for (id, time, x1, x2, a, g) in rows {
        let i = index[&id];
        let j = index[&time];
        alpha[i] = a;
        gamma[j] = g;
        pairs.insert((i, j), (x1, x2));
    }
    if alpha.iter().chain(gamma.iter()).any(|v| v.is_nan()) {
        return Err(Error::InvalidOptions(
            "calibration file must cover every entity on both dimensions".into(),
        ));
    }
    Ok(PairPool {
        labels,
        alpha,
        gamma,
        pairs,
    })
}

struct RepOutcome {
    /// (estimate, truth, se, covered) per estimator per parameter, or None on
    /// failure of that estimator.
    per_estimator: Vec<Option<Vec<(f64, f64, f64, bool)>>>,
}

/// Runs the full study: deterministic for a fixed seed regardless of worker
/// count.
pub fn run_study(design: &SimDesign) -> Result<StudyReport> {
    let pool = match &design.design {
        Design::Synthetic { pool } => build_synthetic_pool(*pool, design.beta_true[1], design.seed),
        Design::Calibrated { path } => load_calibrated_pool(path)?,
    };
    let population = design
        .population
        .unwrap_or(pool.n_pairs() as u64);

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &n in &design.sizes {
        if n < 2 || n > pool.labels.len() {
            return Err(Error::InvalidOptions(format!(
                "sample size {n} outside the available pool of {}",
                pool.labels.len()
            )));
        }
        let outcomes: Vec<RepOutcome> = (0..design.replications)
            .into_par_iter()
            .map(|rep| run_replication(design, &pool, n, rep as u64, population))
            .collect();
        aggregate(design, n, &outcomes, &mut rows, &mut failures);
    }
    Ok(StudyReport {
        rows,
        failures,
        replications: design.replications,
        seed: design.seed,
    })
}

/// Parameter labels in recording order.
fn parameter_names() -> [&'static str; 4] {
    ["ltrade", "ldist", "ape:ltrade", "ape:ldist"]
}

fn run_replication(
    design: &SimDesign,
    pool: &PairPool,
    n: usize,
    rep: u64,
    population: u64,
) -> RepOutcome {
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed);
    rng.set_stream(rep + 1);

    // entity subsample, used for both dimensions
    let mut chosen: Vec<usize> = (0..pool.labels.len()).collect();
    chosen.shuffle(&mut rng);
    chosen.truncate(n);
    chosen.sort_unstable();

    let [b1, b2] = design.beta_true;
    let mut observations = Vec::with_capacity(n * (n - 1));
    for &ei in &chosen {
        for &ej in &chosen {
            if ei == ej {
                continue;
            }
            let Some(&(x1, x2)) = pool.pairs.get(&(ei, ej)) else {
                continue;
            };
            let index = b1 * x1 + b2 * x2 + pool.alpha[ei] + pool.gamma[ej];
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            observations.push(Observation {
                unit_id: pool.labels[ei].to_string(),
                period_id: pool.labels[ej],
                y: simulate_outcome(index, u),
                x: vec![x1, x2],
            });
        }
    }

    let fail_all = RepOutcome {
        per_estimator: vec![None; design.estimators.len()],
    };
    let Ok(drawn) =
        PanelData::from_observations(observations, vec!["ltrade".into(), "ldist".into()])
    else {
        return fail_all;
    };
    let drawn = match drawn.with_ape_binary_override("ltrade", true) {
        Ok(p) => p,
        Err(_) => return fail_all,
    };

    // true APEs on the drawn covariates at the true parameter values
    let truth_alpha: Vec<f64> = (0..drawn.n_units())
        .map(|i| pool.alpha[pool_index(pool, drawn.unit_label(i))])
        .collect();
    let truth_gamma: Vec<f64> = (0..drawn.n_periods())
        .map(|t| {
            let label = drawn.period_label(t);
            pool.gamma[pool.labels.binary_search(&label).unwrap()]
        })
        .collect();
    let truth_pe = ape::partial_effects(
        &[b1, b2],
        &truth_alpha,
        &truth_gamma,
        &drawn,
        Family::Logit,
    );
    let truths = [b1, b2, truth_pe.delta[0], truth_pe.delta[1]];

    let mut spec = ModelSpec::new(Family::Logit);
    spec.population = Some(population);
    spec.seed = design.seed ^ rep;

    let Ok(fit) = fit_mle(&drawn, &spec, TOL, MAX_ITER) else {
        return fail_all;
    };
    let Ok(eval) = evaluate(&fit) else {
        return fail_all;
    };
    let Ok(components) = analytical::bias_components_with_eval(&fit, &fit.panel, &spec, &eval)
    else {
        return fail_all;
    };
    let Ok(fpc) = inference::fpc_factor(Some(population), fit.panel.n_obs()) else {
        return fail_all;
    };
    let Ok(se_b) = inference::se_beta(&components, fit.panel.n_units(), fit.panel.n_periods())
    else {
        return fail_all;
    };
    let Ok(ape_var) = inference::se_ape_with_eval(&fit, &fit.panel, &spec, fpc, &eval) else {
        return fail_all;
    };
    let ses = [se_b[0], se_b[1], ape_var.se[0], ape_var.se[1]];
    let fit_pe =
        ape::partial_effects(&fit.beta, &fit.alpha, &fit.gamma, &fit.panel, Family::Logit);

    let per_estimator = design
        .estimators
        .iter()
        .map(|estimator| {
            let values: Option<[f64; 4]> = match estimator {
                McEstimator::Fe => {
                    Some([fit.beta[0], fit.beta[1], fit_pe.delta[0], fit_pe.delta[1]])
                }
                McEstimator::Analytical(l) => {
                    let mut spec_a = spec.clone();
                    spec_a.correction = Correction::Analytical;
                    spec_a.lags = *l;
                    let comp = if *l == components.l_used {
                        Ok(components.clone())
                    } else {
                        analytical::bias_components_with_eval(&fit, &fit.panel, &spec_a, &eval)
                    };
                    comp.and_then(|comp| {
                        let beta = analytical::correct_beta(
                            &fit,
                            &comp,
                            fit.panel.n_units(),
                            fit.panel.n_periods(),
                        )?;
                        let delta = analytical::correct_ape(&beta, &fit.panel, &spec_a, &comp)?;
                        Ok([beta[0], beta[1], delta[0], delta[1]])
                    })
                    .ok()
                }
                McEstimator::Jackknife(variant) => {
                    let mut spec_j = spec.clone();
                    spec_j.correction = Correction::Jackknife;
                    spec_j.jk_variant = *variant;
                    jackknife::jackknife_correct_from(&fit, &spec_j)
                        .map(|out| [out.beta[0], out.beta[1], out.delta[0], out.delta[1]])
                        .ok()
                }
            };
            values.map(|vals| {
                (0..4)
                    .map(|p| {
                        let covered = (vals[p] - truths[p]).abs() <= Z_CRIT_95 * ses[p];
                        (vals[p], truths[p], ses[p], covered)
                    })
                    .collect()
            })
        })
        .collect();
    RepOutcome { per_estimator }
}

fn pool_index(pool: &PairPool, label: &str) -> usize {
    let v: i64 = label.parse().expect("pool labels are integers");
    pool.labels.binary_search(&v).expect("label in pool")
}

fn aggregate(
    design: &SimDesign,
    n: usize,
    outcomes: &[RepOutcome],
    rows: &mut Vec<MetricRow>,
    failures: &mut Vec<FailureCount>,
) {
    for (e, estimator) in design.estimators.iter().enumerate() {
        let successes: Vec<&Vec<(f64, f64, f64, bool)>> = outcomes
            .iter()
            .filter_map(|o| o.per_estimator[e].as_ref())
            .collect();
        failures.push(FailureCount {
            estimator: estimator.label(),
            n,
            failed: outcomes.len() - successes.len(),
        });
        if successes.is_empty() {
            continue;
        }
        for (p, name) in parameter_names().iter().enumerate() {
            let s = successes.len() as f64;
            let errs: Vec<f64> = successes.iter().map(|r| r[p].0 - r[p].1).collect();
            let bias = errs.iter().sum::<f64>() / s;
            let msq = errs.iter().map(|v| v * v).sum::<f64>() / s;
            let sd = (msq - bias * bias).max(0.0).sqrt();
            let rmse = msq.sqrt();
            let mean_truth = successes.iter().map(|r| r[p].1).sum::<f64>() / s;
            let mean_se = successes.iter().map(|r| r[p].2).sum::<f64>() / s;
            let coverage = successes.iter().filter(|r| r[p].3).count() as f64 / s;
            let absolute_units = mean_truth.abs() < 1e-12;
            let denom = if absolute_units { 1.0 } else { mean_truth.abs() };
            rows.push(MetricRow {
                estimator: estimator.label(),
                n,
                parameter: name.to_string(),
                bias_pct: 100.0 * bias / denom,
                sd_pct: 100.0 * sd / denom,
                rmse_pct: 100.0 * rmse / denom,
                se_sd_ratio: if sd > 0.0 { mean_se / sd } else { f64::NAN },
                coverage95: coverage,
                absolute_units,
            });
        }
    }
}

impl StudyReport {
    pub fn row(&self, estimator: &str, n: usize, parameter: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.n == n && r.parameter == parameter)
    }

    /// CSV with one line per metric row.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "estimator,n,parameter,bias_pct,sd_pct,rmse_pct,se_sd_ratio,coverage95,absolute_units"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.estimator,
                r.n,
                r.parameter,
                r.bias_pct,
                r.sd_pct,
                r.rmse_pct,
                r.se_sd_ratio,
                r.coverage95,
                r.absolute_units
            )?;
        }
        Ok(())
    }

    /// Formatted study table: per estimator panel, one line per sample size
    /// and covariate, coefficient metrics beside APE metrics.
    pub fn format_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "Monte Carlo study: {} replications, seed {}\n",
            self.replications, self.seed
        ));
        s.push_str(&format!(
            "{:<10}{:>5} {:<12}{}{}\n",
            "", "", "", "--------- coefficients ---------  ", "------ average partial effects ------"
        ));
        s.push_str(&format!(
            "{:<10}{:>5} {:<12}{:>8}{:>8}{:>8}{:>7}{:>6}  {:>8}{:>8}{:>8}{:>7}{:>6}\n",
            "estimator", "N", "parameter", "bias%", "sd%", "rmse%", "se/sd", "p95", "bias%",
            "sd%", "rmse%", "se/sd", "p95"
        ));
        let mut estimators: Vec<String> = Vec::new();
        for r in &self.rows {
            if !estimators.contains(&r.estimator) {
                estimators.push(r.estimator.clone());
            }
        }
        let mut sizes: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        sizes.sort_unstable();
        sizes.dedup();
        for est in &estimators {
            for &n in &sizes {
                for var in ["ltrade", "ldist"] {
                    let coef = self.row(est, n, var);
                    let apev = self.row(est, n, &format!("ape:{var}"));
                    if let (Some(c), Some(a)) = (coef, apev) {
                        s.push_str(&format!(
                            "{:<10}{:>5} {:<12}{:>8.3}{:>8.3}{:>8.3}{:>7.3}{:>6.3}  {:>8.3}{:>8.3}{:>8.3}{:>7.3}{:>6.3}\n",
                            est, n, var, c.bias_pct, c.sd_pct, c.rmse_pct, c.se_sd_ratio,
                            c.coverage95, a.bias_pct, a.sd_pct, a.rmse_pct, a.se_sd_ratio,
                            a.coverage95
                        ));
                    }
                }
            }
        }
        let mut any_failed = false;
        for f in &self.failures {
            if f.failed > 0 {
                if !any_failed {
                    s.push_str("failures:\n");
                    any_failed = true;
                }
                s.push_str(&format!(
                    "  {} at N={}: {} of {} replications\n",
                    f.estimator, f.n, f.failed, self.replications
                ));
            }
        }
        if !any_failed {
            s.push_str("no estimator failures\n");
        }
        s
    }
}
