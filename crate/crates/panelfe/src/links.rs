//! Pointwise link-function kernel shared by estimation, bias correction, and
//! partial effects.
//!
//! Everything downstream consumes the index `z = x'beta + alpha_i + gamma_t`
//! only through the quantities bundled here: the CDF `F`, its first three
//! derivatives, the score weight `H = dF / [F (1 - F)]`, and the information
//! weight `omega = H * dF`. For the logistic link `H = 1` and `omega = dF`
//! identically.

use statrs::function::erf::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Crossover beyond which probit `H` and `omega` are assembled in log space.
const PROBIT_LOG_SPACE: f64 = 6.0;

/// Smallest value `F`, `dF`, and `omega` are allowed to take, so that ratios
/// stay finite at extreme indices.
const VAL_FLOOR: f64 = 1e-300;

/// Link family of the binary-response model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Probit,
    Logit,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Probit => "probit",
            Family::Logit => "logit",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pointwise link values at a single index value.
#[derive(Debug, Clone, Copy)]
pub struct LinkBundle {
    /// Response probability F(z), clamped inside (0, 1).
    pub f: f64,
    /// Density dF(z) > 0.
    pub df: f64,
    /// Second derivative of F.
    pub d2f: f64,
    /// Third derivative of F.
    pub d3f: f64,
    /// dF / [F (1 - F)]; equals 1 for the logit link.
    pub h: f64,
    /// H * dF > 0.
    pub omega: f64,
}

/// Evaluates the link bundle at index `z`.
pub fn link_eval(z: f64, family: Family) -> LinkBundle {
    match family {
        Family::Logit => logit_bundle(z),
        Family::Probit => probit_bundle(z),
    }
}

fn f_max() -> f64 {
    1.0 - f64::EPSILON / 2.0
}

fn logit_bundle(z: f64) -> LinkBundle {
    // q = exp(-|z|) keeps every piece exact in the tails; F itself is clamped
    // away from {0, 1} but dF and (1 - 2F) are formed from q directly.
    let q = (-z.abs()).exp();
    let denom = 1.0 + q;
    let f_raw = if z >= 0.0 { 1.0 / denom } else { q / denom };
    let one_minus_two_f = if z >= 0.0 {
        (q - 1.0) / denom
    } else {
        (1.0 - q) / denom
    };
    let df = (q / denom / denom).max(VAL_FLOOR);
    let d2f = df * one_minus_two_f;
    let d3f = df * (one_minus_two_f * one_minus_two_f - 2.0 * df);
    LinkBundle {
        f: f_raw.clamp(VAL_FLOOR, f_max()),
        df,
        d2f,
        d3f,
        h: 1.0,
        omega: df,
    }
}

fn probit_bundle(z: f64) -> LinkBundle {
    let phi = (norm_logpdf(z)).exp().max(VAL_FLOOR);
    let f = norm_cdf(z).clamp(VAL_FLOOR, f_max());
    let (h, omega) = if z.abs() <= PROBIT_LOG_SPACE {
        let denom = norm_cdf(z) * norm_cdf(-z);
        let h = phi / denom;
        (h, h * phi)
    } else {
        let log_denom = norm_logcdf(z) + norm_logcdf(-z);
        let lphi = norm_logpdf(z);
        let h = (lphi - log_denom).exp();
        let omega = (2.0 * lphi - log_denom).exp().max(VAL_FLOOR);
        (h, omega)
    };
    LinkBundle {
        f,
        df: phi,
        d2f: -z * phi,
        d3f: (z * z - 1.0) * phi,
        h,
        omega,
    }
}

/// Log-likelihood of a single observation: `y log F(z) + (1-y) log(1-F(z))`,
/// evaluated with tail-stable forms for both families.
pub fn loglik_obs(y: f64, z: f64, family: Family) -> f64 {
    debug_assert!(y == 0.0 || y == 1.0);
    if y == 1.0 {
        log_f(z, family)
    } else {
        log_1mf(z, family)
    }
}

/// log F(z), stable at extreme indices.
pub(crate) fn log_f(z: f64, family: Family) -> f64 {
    match family {
        Family::Logit => -softplus(-z),
        Family::Probit => norm_logcdf(z),
    }
}

/// log (1 - F(z)), stable at extreme indices.
pub(crate) fn log_1mf(z: f64, family: Family) -> f64 {
    match family {
        Family::Logit => -softplus(z),
        Family::Probit => norm_logcdf(-z),
    }
}

/// Score of the observation log-likelihood with respect to the index,
/// `H(z) (y - F(z))`, in the numerically exact hazard form.
pub(crate) fn score_obs(y: f64, z: f64, family: Family) -> f64 {
    match family {
        Family::Logit => y - logit_bundle(z).f,
        Family::Probit => {
            if y == 1.0 {
                (norm_logpdf(z) - norm_logcdf(z)).exp()
            } else {
                -(norm_logpdf(z) - norm_logcdf(-z)).exp()
            }
        }
    }
}

/// Negative second derivative of the observation log-likelihood with respect
/// to the index. Strictly positive for both families.
pub(crate) fn curvature_obs(y: f64, z: f64, family: Family) -> f64 {
    match family {
        Family::Logit => logit_bundle(z).df,
        Family::Probit => {
            let u = score_obs(y, z, Family::Probit);
            (u * (u + z)).max(VAL_FLOOR)
        }
    }
}

/// Inverse link (quantile function), used for starting values.
pub(crate) fn inv_link(p: f64, family: Family) -> f64 {
    let p = p.clamp(1e-10, 1.0 - 1e-10);
    match family {
        Family::Logit => (p / (1.0 - p)).ln(),
        Family::Probit => {
            use statrs::distribution::{ContinuousCDF, Normal};
            Normal::standard().inverse_cdf(p)
        }
    }
}

fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

fn norm_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub(crate) fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// log Phi(z). Direct for z >= -6; Mills-ratio continued fraction in the
/// lower tail, where erfc underflows long before the log does.
pub(crate) fn norm_logcdf(z: f64) -> f64 {
    if z >= -PROBIT_LOG_SPACE {
        norm_cdf(z).ln()
    } else {
        let x = -z;
        norm_logpdf(x) + mills_ratio(x).ln()
    }
}

/// Mills ratio (1 - Phi(x)) / phi(x) for x > 0 via the Laplace continued
/// fraction, evaluated bottom-up at fixed depth.
fn mills_ratio(x: f64) -> f64 {
    let mut v = 0.0;
    for k in (1..=100u32).rev() {
        v = f64::from(k) / (x + v);
    }
    1.0 / (x + v)
}
