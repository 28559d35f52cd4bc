//! Command-line surface: `fit` estimates a model from a CSV and reports
//! coefficient and APE tables plus a saved-results document; `simulate` runs
//! the Monte Carlo study.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytical::{self, BiasComponents};
use crate::ape;
use crate::data_model::PanelData;
use crate::error::{Error, Result};
use crate::estimator::{fit_mle, Correction, FitResult, JackknifeVariant, ModelSpec, MultipleDim};
use crate::evalctx::evaluate;
use crate::inference::{self, numerical_rank, InferenceResult};
use crate::jackknife::{self, JackknifeDiagnostics};
use crate::links::Family;
use crate::montecarlo::{self, Design, McEstimator, SimDesign};
use crate::output::{self, SavedResults};

/// Everything a `fit` run produces: the reported (possibly corrected)
/// estimates, the bias components, and the variance bundle.
#[derive(Debug, Clone)]
pub struct CorrectedEstimates {
    pub fit: FitResult,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub components: BiasComponents,
    pub inference: InferenceResult,
    pub se_ape_nofpc: Vec<f64>,
    pub jackknife_diagnostics: Option<JackknifeDiagnostics>,
}

/// Fits the model and applies the correction requested by the model spec.
pub fn estimate(
    panel: &PanelData,
    spec: &ModelSpec,
    tol: f64,
    max_iter: usize,
) -> Result<CorrectedEstimates> {
    spec.validate()?;
    let fit = fit_mle(panel, spec, tol, max_iter)?;
    let eval = evaluate(&fit)?;
    let components = analytical::bias_components_with_eval(&fit, &fit.panel, spec, &eval)?;

    let fpc = inference::fpc_factor(spec.population, fit.panel.n_obs())?;
    let se_beta = inference::se_beta(&components, fit.panel.n_units(), fit.panel.n_periods())?;
    let ape_var = inference::se_ape_with_eval(&fit, &fit.panel, spec, fpc, &eval)?;
    let ape_var_nofpc = inference::se_ape_with_eval(&fit, &fit.panel, spec, 1.0, &eval)?;
    let (lr_chi2, p_value, pseudo_r2) = inference::lr_and_fit_stats(&fit);
    let w_inv = nalgebra::Cholesky::new(components.w_hat.clone())
        .ok_or(Error::SingularW)?
        .inverse();
    let vcov_beta = w_inv / (fit.panel.n_units() * fit.panel.n_periods()) as f64;

    let mut jackknife_diagnostics = None;
    let (beta, delta) = match spec.correction {
        Correction::None => {
            let pe = ape::partial_effects(&fit.beta, &fit.alpha, &fit.gamma, &fit.panel, spec.family);
            (fit.beta.clone(), pe.delta)
        }
        Correction::Analytical => {
            let beta = analytical::correct_beta(
                &fit,
                &components,
                fit.panel.n_units(),
                fit.panel.n_periods(),
            )?;
            let delta = analytical::correct_ape(&beta, &fit.panel, spec, &components)?;
            (beta, delta)
        }
        Correction::Jackknife => {
            let out = jackknife::jackknife_correct_from(&fit, spec)?;
            jackknife_diagnostics = Some(out.diagnostics);
            (out.beta, out.delta)
        }
    };

    Ok(CorrectedEstimates {
        inference: InferenceResult {
            se_beta,
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
        },
        se_ape_nofpc: ape_var_nofpc.se,
        fit,
        beta,
        delta,
        components,
        jackknife_diagnostics,
    })
}

#[derive(Parser)]
#[command(
    name = "panelfe",
    version,
    about = "Probit and logit panel models with two-way fixed effects and bias corrections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a model from a long-format CSV.
    Fit(Box<FitArgs>),
    /// Run the Monte Carlo study.
    Simulate(SimArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Probit,
    Logit,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmulateArg {
    Probitfe,
    Logitfe,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum YesNo {
    Yes,
    No,
}

impl YesNo {
    fn as_bool(self) -> bool {
        self == YesNo::Yes
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Ss1,
    Ss2,
    Js,
    Sj,
    Jj,
    Double,
}

impl VariantArg {
    fn to_variant(self) -> JackknifeVariant {
        match self {
            VariantArg::Ss1 => JackknifeVariant::Ss1,
            VariantArg::Ss2 => JackknifeVariant::Ss2,
            VariantArg::Js => JackknifeVariant::Js,
            VariantArg::Sj => JackknifeVariant::Sj,
            VariantArg::Jj => JackknifeVariant::Jj,
            VariantArg::Double => JackknifeVariant::Double,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MultipleDimArg {
    Individuals,
    Time,
    Both,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV path.
    #[arg(long)]
    data: PathBuf,
    /// Panel (unit) variable column.
    #[arg(long)]
    id: String,
    /// Time variable column (integer-valued).
    #[arg(long)]
    time: String,
    /// Binary dependent variable column.
    #[arg(long)]
    depvar: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    indepvars: Vec<String>,
    /// Link family; may be omitted when --emulate is given.
    #[arg(long)]
    family: Option<FamilyArg>,
    /// Print titles matching the corresponding Stata command and set the family.
    #[arg(long)]
    emulate: Option<EmulateArg>,
    /// Uncorrected estimator (the default).
    #[arg(long)]
    nocorrection: bool,
    /// Analytical bias correction.
    #[arg(long)]
    analytical: bool,
    /// Jackknife bias correction.
    #[arg(long)]
    jackknife: bool,
    /// Trimming parameter for spectral terms (analytical only).
    #[arg(long, default_value_t = 0)]
    lags: usize,
    /// Jackknife variant (default ss2 under --jackknife).
    #[arg(long = "jk-variant")]
    jk_variant: Option<VariantArg>,
    /// Number of random multiple partitions (ss1/ss2 only).
    #[arg(long, default_value_t = 0)]
    multiple: usize,
    /// Dimension(s) the multiple partitions reshuffle.
    #[arg(long = "multiple-dim", value_enum, default_value_t = MultipleDimArg::Both)]
    multiple_dim: MultipleDimArg,
    #[arg(long, value_enum, default_value_t = YesNo::Yes)]
    ieffects: YesNo,
    #[arg(long, value_enum, default_value_t = YesNo::Yes)]
    teffects: YesNo,
    #[arg(long, value_enum, default_value_t = YesNo::Yes)]
    ibias: YesNo,
    #[arg(long, value_enum, default_value_t = YesNo::Yes)]
    tbias: YesNo,
    /// Declared population size for the APE variance (default: infinite).
    #[arg(long)]
    population: Option<u64>,
    /// Seed for randomized partitions (falls back to PANELFE_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for subpanel refits.
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the saved-results document here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treat a covariate as binary for partial effects (repeatable).
    #[arg(long = "force-binary")]
    force_binary: Vec<String>,
    /// Treat a covariate as continuous for partial effects (repeatable).
    #[arg(long = "force-continuous")]
    force_continuous: Vec<String>,
    /// Export per-pair covariates and fitted effects for calibrated simulation.
    #[arg(long = "export-calibration")]
    export_calibration: Option<PathBuf>,
    /// Convergence tolerance on the score sup-norm.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Maximum outer iterations.
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,
}

#[derive(Args)]
struct SimArgs {
    /// "synthetic" or "calibrated:<path>".
    #[arg(long, default_value = "synthetic")]
    design: String,
    /// Entity pool size for the synthetic design.
    #[arg(long, default_value_t = montecarlo::DEFAULT_POOL)]
    pool: usize,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "25,50,75,100,157")]
    sizes: Vec<usize>,
    /// Replications per sample size.
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Comma-separated estimators: fe, an<L>, ss1, ss2, js, sj, jj, double.
    #[arg(long, value_delimiter = ',', default_value = "fe,an0,ss2,double")]
    estimators: Vec<String>,
    /// True coefficient on the binary covariate.
    #[arg(long, default_value_t = 2.838, allow_negative_numbers = true)]
    beta1: f64,
    /// True coefficient on the continuous covariate.
    #[arg(long, default_value_t = -0.839, allow_negative_numbers = true)]
    beta2: f64,
    /// Population for the APE variance (default: the pool's pair count).
    #[arg(long)]
    population: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the metric rows as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Entry point: parses `argv`, runs the command, and returns the exit code
/// (0 success, 1 estimation error, 2 usage error).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let tokens: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cmdline = tokens
        .iter()
        .map(|t| t.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let cli = match Cli::try_parse_from(tokens.iter()) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Fit(args) => run_fit(*args, &cmdline),
        Command::Simulate(args) => run_simulate(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn seed_from(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("PANELFE_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

fn with_pool<R>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    match jobs {
        None => f(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .expect("thread pool")
            .install(f),
    }
}

fn build_spec(args: &FitArgs) -> Result<ModelSpec> {
    let family = match (args.family, args.emulate) {
        (Some(FamilyArg::Probit), None) | (None, Some(EmulateArg::Probitfe)) => Family::Probit,
        (Some(FamilyArg::Logit), None) | (None, Some(EmulateArg::Logitfe)) => Family::Logit,
        (Some(FamilyArg::Probit), Some(EmulateArg::Probitfe)) => Family::Probit,
        (Some(FamilyArg::Logit), Some(EmulateArg::Logitfe)) => Family::Logit,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidOptions(
                "--family contradicts --emulate".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidOptions(
                "one of --family or --emulate is required".into(),
            ))
        }
    };

    let picked = [args.nocorrection, args.analytical, args.jackknife]
        .iter()
        .filter(|b| **b)
        .count();
    if picked > 1 {
        return Err(Error::InvalidOptions(
            "--nocorrection, --analytical, and --jackknife are mutually exclusive".into(),
        ));
    }
    let correction = if args.analytical {
        Correction::Analytical
    } else if args.jackknife {
        Correction::Jackknife
    } else {
        Correction::None
    };
    if args.lags > 0 && correction != Correction::Analytical {
        return Err(Error::InvalidOptions(
            "--lags requires --analytical".into(),
        ));
    }
    if args.jk_variant.is_some() && correction != Correction::Jackknife {
        return Err(Error::InvalidOptions(
            "--jk-variant requires --jackknife".into(),
        ));
    }
    if args.multiple > 0 && correction != Correction::Jackknife {
        return Err(Error::InvalidOptions(
            "--multiple requires --jackknife".into(),
        ));
    }
    if !args.ieffects.as_bool() && !args.teffects.as_bool() {
        return Err(Error::InvalidOptions(
            "--ieffects no together with --teffects no is invalid".into(),
        ));
    }
    if !args.ibias.as_bool() && !args.tbias.as_bool() {
        return Err(Error::InvalidOptions(
            "--ibias no together with --tbias no is invalid".into(),
        ));
    }

    let mut spec = ModelSpec::new(family);
    spec.include_ieffects = args.ieffects.as_bool();
    spec.include_teffects = args.teffects.as_bool();
    spec.correction = correction;
    spec.lags = args.lags;
    spec.jk_variant = args
        .jk_variant
        .map(VariantArg::to_variant)
        .unwrap_or(JackknifeVariant::Ss2);
    spec.multiple_m = args.multiple;
    spec.multiple_dim = match args.multiple_dim {
        MultipleDimArg::Individuals => MultipleDim::Individuals,
        MultipleDimArg::Time => MultipleDim::Time,
        MultipleDimArg::Both => MultipleDim::Both,
    };
    spec.ibias = args.ibias.as_bool();
    spec.tbias = args.tbias.as_bool();
    spec.population = args.population;
    spec.seed = seed_from(args.seed);
    spec.validate()?;
    Ok(spec)
}

fn run_fit(args: FitArgs, cmdline: &str) -> Result<()> {
    let spec = build_spec(&args)?;
    if args.indepvars.is_empty() {
        return Err(Error::InvalidOptions("--indepvars must name at least one column".into()));
    }
    let names: BTreeSet<&String> = args.indepvars.iter().collect();
    if names.len() != args.indepvars.len() {
        return Err(Error::InvalidOptions("--indepvars lists a column twice".into()));
    }

    let mut panel = PanelData::load_csv(
        &args.data,
        &args.id,
        &args.time,
        &args.depvar,
        &args.indepvars,
    )?;
    for name in &args.force_binary {
        panel = panel.with_ape_binary_override(name, true)?;
    }
    for name in &args.force_continuous {
        panel = panel.with_ape_binary_override(name, false)?;
    }

    let est = with_pool(args.jobs, || estimate(&panel, &spec, args.tol, args.max_iter))?;
    let saved = build_saved(&est, &spec, &args, cmdline);

    print!("{}", output::format_header(&saved));
    print!(
        "{}",
        output::format_coef_table(
            &args.depvar,
            est.fit.panel.covariate_names(),
            &est.beta,
            &est.inference.se_beta,
            spec.family,
        )
    );
    print!(
        "{}",
        output::format_ape_table(
            est.fit.panel.covariate_names(),
            &est.delta,
            &est.inference.se_ape,
            &est.se_ape_nofpc,
            est.inference.fpc,
        )
    );
    if let Some(d) = &est.jackknife_diagnostics {
        println!(
            "jackknife: {} subpanel fits over {} partition(s); drops inside subpanels: {} obs, {} units, {} periods",
            d.subfits, d.partitions, d.obs_dropped, d.units_dropped, d.periods_dropped
        );
    }
    if est.inference.clamped > 0 {
        println!(
            "warning: {} APE variance entr{} clamped at zero",
            est.inference.clamped,
            if est.inference.clamped == 1 { "y" } else { "ies" }
        );
    }

    if let Some(path) = &args.out {
        let mut file = BufWriter::new(File::create(path)?);
        saved.write_to(&mut file)?;
    }
    if let Some(path) = &args.export_calibration {
        export_calibration(&est.fit, path)?;
    }
    Ok(())
}

fn build_saved(
    est: &CorrectedEstimates,
    spec: &ModelSpec,
    args: &FitArgs,
    cmdline: &str,
) -> SavedResults {
    let panel = &est.fit.panel;
    let (t_min, t_avg, t_max) = panel.group_sizes();
    let k = panel.k();
    let cmd = match spec.family {
        Family::Probit => "probitfe",
        Family::Logit => "logitfe",
    };
    let title = match spec.family {
        Family::Probit => "Probit fixed-effects model",
        Family::Logit => "Logit fixed-effects model",
    };
    let title1 = match (spec.include_ieffects, spec.include_teffects) {
        (true, true) => "Individual and time effects",
        (true, false) => "Individual effects",
        (false, true) => "Time effects",
        (false, false) => unreachable!(),
    };
    let (title2, title3) = match spec.correction {
        Correction::None => ("No correction".to_string(), String::new()),
        Correction::Analytical => (
            "Analytical bias correction".to_string(),
            format!("lags({})", spec.lags),
        ),
        Correction::Jackknife => (
            format!("Jackknife bias correction ({})", spec.jk_variant.as_str()),
            if spec.multiple_m > 0 {
                format!("multiple({})", spec.multiple_m)
            } else {
                String::new()
            },
        ),
    };

    SavedResults {
        n: panel.n_obs(),
        n_drop: panel.drop_log().n_obs_dropped,
        n_group_drop: panel.drop_log().n_units_dropped,
        n_time_drop: panel.drop_log().n_periods_dropped,
        n_group: panel.n_units(),
        t_min,
        t_avg,
        t_max,
        k,
        df_m: k,
        r2_p: est.inference.pseudo_r2,
        chi2: est.inference.lr_chi2,
        p: est.inference.p_value,
        ll: est.fit.loglik,
        ll_0: est.fit.loglik_null,
        fpc: est.inference.fpc,
        rank_v: numerical_rank(&est.inference.vcov_beta),
        rank_v2: numerical_rank(&est.inference.vcov_ape),
        cmd: cmd.to_string(),
        cmdline: cmdline.to_string(),
        depvar: args.depvar.clone(),
        title: title.to_string(),
        title1: title1.to_string(),
        title2,
        title3,
        chi2type: "LR".to_string(),
        id: args.id.clone(),
        time: args.time.clone(),
        colnames: panel.covariate_names().to_vec(),
        b: est.beta.clone(),
        v: est.inference.vcov_beta.clone(),
        b2: est.delta.clone(),
        v2: est.inference.vcov_ape.clone(),
    }
}

/// Writes id,time,x1,x2,alpha,gamma for every retained observation, using the
/// first two covariates. Consumed by `simulate --design calibrated:<path>`.
fn export_calibration(fit: &FitResult, path: &PathBuf) -> Result<()> {
    let panel = &fit.panel;
    if panel.k() < 2 {
        return Err(Error::InvalidOptions(
            "calibration export needs at least two covariates".into(),
        ));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "id,time,x1,x2,alpha,gamma")?;
    for o in 0..panel.n_obs() {
        let i = panel.unit_of(o);
        let t = panel.period_of(o);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            panel.unit_label(i),
            panel.period_label(t),
            panel.x_at(o, 0),
            panel.x_at(o, 1),
            fit.alpha[i],
            fit.gamma[t]
        )?;
    }
    Ok(())
}

fn run_simulate(args: SimArgs) -> Result<()> {
    let design = if args.design == "synthetic" {
        Design::Synthetic { pool: args.pool }
    } else if let Some(path) = args.design.strip_prefix("calibrated:") {
        Design::Calibrated {
            path: PathBuf::from(path),
        }
    } else {
        return Err(Error::InvalidOptions(format!(
            "--design must be 'synthetic' or 'calibrated:<path>', got '{}'",
            args.design
        )));
    };
    let estimators = args
        .estimators
        .iter()
        .map(|t| McEstimator::parse(t))
        .collect::<Result<Vec<_>>>()?;
    if args.reps == 0 {
        return Err(Error::InvalidOptions("--reps must be at least 1".into()));
    }

    let sim = SimDesign {
        beta_true: [args.beta1, args.beta2],
        design,
        sizes: args.sizes.clone(),
        replications: args.reps,
        estimators,
        seed: seed_from(args.seed),
        population: args.population,
    };
    let report = with_pool(args.jobs, || montecarlo::run_study(&sim))?;
    print!("{}", report.format_table());
    if let Some(path) = &args.out {
        let mut file = BufWriter::new(File::create(path)?);
        report.write_csv(&mut file)?;
    }
    Ok(())
}
