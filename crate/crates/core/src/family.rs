//! Losses, links and negative gradients for the modelled distribution
//! parameters.
//!
//! The count part of the hurdle is a zero-truncated negative binomial with
//! mean parameter `mu` and overdispersion `sigma`:
//!
//! ```text
//! Var(Y) = mu + sigma * mu^2        p0 = (1 + sigma * mu)^(-1 / sigma)
//! ```
//!
//! All density arithmetic is done in log space. Linear predictors are clamped
//! to `[-30, 30]` before exponentiation; this is purely a numerical guard.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Bound applied to every linear predictor before it is exponentiated.
pub const ETA_BOUND: f64 = 30.0;

/// Floor for the method-of-moments overdispersion start value.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Above this count the log-gamma ratio switches from an exact sum to
/// `ln_gamma` differences.
const EXACT_SUM_LIMIT: u64 = 10_000;

#[inline]
pub fn clamp_eta(eta: f64) -> f64 {
    eta.clamp(-ETA_BOUND, ETA_BOUND)
}

#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logit,
    Log,
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Logit => logistic(eta),
            Link::Log => clamp_eta(eta).exp(),
        }
    }

    pub fn apply(self, value: f64) -> f64 {
        match self {
            Link::Identity => value,
            Link::Logit => logit(value),
            Link::Log => value.ln(),
        }
    }
}

// ---------------------------------------------------------------------------
// Binomial occupancy

/// Negative Bernoulli log-likelihood on the logit scale.
#[inline]
pub fn binomial_loss(y: f64, eta: f64) -> f64 {
    softplus(eta) - y * eta
}

#[inline]
pub fn binomial_neg_gradient(y: f64, eta: f64) -> f64 {
    y - logistic(eta)
}

// ---------------------------------------------------------------------------
// Zero-truncated negative binomial

fn check_nb(mu: f64, sigma: f64) -> Result<()> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu must be finite and > 0, got {mu}")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be finite and > 0, got {sigma}"
        )));
    }
    Ok(())
}

/// `ln p0 = -ln(1 + sigma*mu) / sigma`.
#[inline]
pub fn ln_p0(mu: f64, sigma: f64) -> f64 {
    -(sigma * mu).ln_1p() / sigma
}

/// Probability of a zero under the untruncated negative binomial.
pub fn p0(mu: f64, sigma: f64) -> f64 {
    ln_p0(mu, sigma).exp()
}

/// `ln(1 - p0)`, accurate when `p0` is close to one.
#[inline]
fn ln_one_minus_p0(lp0: f64) -> f64 {
    (-lp0.exp_m1()).ln()
}

/// `ln Gamma(y + r) - ln Gamma(r)` for integer `y`.
fn ln_gamma_ratio(y: u64, r: f64) -> f64 {
    if y <= EXACT_SUM_LIMIT {
        (0..y).map(|k| (r + k as f64).ln()).sum()
    } else {
        ln_gamma(y as f64 + r) - ln_gamma(r)
    }
}

/// `digamma(y + r) - digamma(r)` for integer `y`.
fn digamma_diff(y: u64, r: f64) -> f64 {
    if y <= EXACT_SUM_LIMIT {
        (0..y).map(|k| 1.0 / (r + k as f64)).sum()
    } else {
        digamma(y as f64 + r) - digamma(r)
    }
}

fn ln_factorial(y: u64) -> f64 {
    ln_gamma(y as f64 + 1.0)
}

/// Log-pmf of the untruncated negative binomial with `Var = mu + sigma mu^2`.
pub fn nb_log_pmf(y: u64, mu: f64, sigma: f64) -> Result<f64> {
    check_nb(mu, sigma)?;
    let r = 1.0 / sigma;
    let sm = sigma * mu;
    let yf = y as f64;
    // y * ln(sm / (1 + sm)) with the y = 0 case kept exact.
    let tail = if y == 0 { 0.0 } else { yf * (sm.ln() - sm.ln_1p()) };
    Ok(ln_gamma_ratio(y, r) - ln_factorial(y) + ln_p0(mu, sigma) + tail)
}

/// Log-pmf of the zero-truncated negative binomial, `y >= 1`.
pub fn truncnb_log_pmf(y: u64, mu: f64, sigma: f64) -> Result<f64> {
    if y == 0 {
        return Err(Error::InvalidArgument(
            "zero count passed to the truncated count model".into(),
        ));
    }
    let lp = nb_log_pmf(y, mu, sigma)? - ln_one_minus_p0(ln_p0(mu, sigma));
    finite(lp, "truncated log-pmf")
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what: what.to_string(), iteration: 0 })
    }
}

/// Negative truncated-NB log-likelihood as a function of the two log-link
/// predictors.
pub fn truncnb_loss(y: u64, eta_mu: f64, eta_sigma: f64) -> Result<f64> {
    let mu = clamp_eta(eta_mu).exp();
    let sigma = clamp_eta(eta_sigma).exp();
    Ok(-truncnb_log_pmf(y, mu, sigma)?)
}

/// `-d loss / d eta_mu` with `eta_sigma` held fixed.
pub fn truncnb_neg_gradient_mu(y: u64, eta_mu: f64, eta_sigma: f64) -> Result<f64> {
    if y == 0 {
        return Err(Error::InvalidArgument("zero count in truncated gradient".into()));
    }
    let mu = clamp_eta(eta_mu).exp();
    let sigma = clamp_eta(eta_sigma).exp();
    let g = grad_mu(y as f64, mu, sigma);
    finite(g, "mu gradient")
}

/// `-d loss / d eta_sigma` with `eta_mu` held fixed.
pub fn truncnb_neg_gradient_sigma(y: u64, eta_mu: f64, eta_sigma: f64) -> Result<f64> {
    if y == 0 {
        return Err(Error::InvalidArgument("zero count in truncated gradient".into()));
    }
    let mu = clamp_eta(eta_mu).exp();
    let sigma = clamp_eta(eta_sigma).exp();
    let g = grad_sigma(y, mu, sigma);
    finite(g, "sigma gradient")
}

#[inline]
fn grad_mu(y: f64, mu: f64, sigma: f64) -> f64 {
    let denom = 1.0 + sigma * mu;
    let lp0 = ln_p0(mu, sigma);
    // p0 / (1 - p0) computed as 1 / expm1(-ln p0)
    let odds0 = 1.0 / (-lp0).exp_m1();
    (y - mu) / denom - odds0 * mu / denom
}

#[inline]
fn grad_sigma(y: u64, mu: f64, sigma: f64) -> f64 {
    let r = 1.0 / sigma;
    let sm = sigma * mu;
    let denom = 1.0 + sm;
    let log1p_sm = sm.ln_1p();
    let yf = y as f64;
    let dlogf = r * (log1p_sm - digamma_diff(y, r)) + (yf - mu) / denom;
    let dlogp0 = r * log1p_sm - mu / denom;
    let odds0 = 1.0 / (-ln_p0(mu, sigma)).exp_m1();
    dlogf + odds0 * dlogp0
}

/// Mean of the zero-truncated negative binomial, `mu / (1 - p0)`.
pub fn truncnb_mean(mu: f64, sigma: f64) -> f64 {
    mu / -ln_p0(mu, sigma).exp_m1()
}

// ---------------------------------------------------------------------------
// Parameter families

/// One modelled distribution parameter: its loss, negative gradient, link and
/// starting value.
///
/// For the two count parameters `other` is the linear predictor of the
/// parameter held fixed; single-parameter families ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterFamily {
    /// Squared error. Used as a check mode against least squares.
    Gaussian,
    Binomial,
    TruncNbMu,
    TruncNbSigma,
}

impl ParameterFamily {
    pub fn name(self) -> &'static str {
        match self {
            ParameterFamily::Gaussian => "gaussian",
            ParameterFamily::Binomial => "occupancy",
            ParameterFamily::TruncNbMu => "count-mu",
            ParameterFamily::TruncNbSigma => "count-sigma",
        }
    }

    pub fn link(self) -> Link {
        match self {
            ParameterFamily::Gaussian => Link::Identity,
            ParameterFamily::Binomial => Link::Logit,
            ParameterFamily::TruncNbMu | ParameterFamily::TruncNbSigma => Link::Log,
        }
    }

    /// Pointwise loss. Returns NaN for responses outside the family support.
    pub fn loss(self, y: f64, eta: f64, other: f64) -> f64 {
        match self {
            ParameterFamily::Gaussian => 0.5 * (y - eta) * (y - eta),
            ParameterFamily::Binomial => binomial_loss(y, eta),
            ParameterFamily::TruncNbMu => {
                truncnb_loss(y as u64, eta, other).unwrap_or(f64::NAN)
            }
            ParameterFamily::TruncNbSigma => {
                truncnb_loss(y as u64, other, eta).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn neg_gradient(self, y: f64, eta: f64, other: f64) -> f64 {
        match self {
            ParameterFamily::Gaussian => y - eta,
            ParameterFamily::Binomial => binomial_neg_gradient(y, eta),
            ParameterFamily::TruncNbMu => {
                truncnb_neg_gradient_mu(y as u64, eta, other).unwrap_or(f64::NAN)
            }
            ParameterFamily::TruncNbSigma => {
                truncnb_neg_gradient_sigma(y as u64, other, eta).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn check_response(self, y: &[f64]) -> Result<()> {
        let bad = match self {
            ParameterFamily::Gaussian => y.iter().position(|v| !v.is_finite()),
            ParameterFamily::Binomial => y.iter().position(|&v| v != 0.0 && v != 1.0),
            ParameterFamily::TruncNbMu | ParameterFamily::TruncNbSigma => {
                y.iter().position(|&v| !(v >= 1.0 && v.fract() == 0.0))
            }
        };
        match bad {
            Some(i) => Err(Error::InvalidArgument(format!(
                "response value {} at position {i} is outside the {} support",
                y[i],
                self.name()
            ))),
            None => Ok(()),
        }
    }

    /// Constant starting predictor.
    pub fn offset(self, y: &[f64]) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::DegenerateResponse("empty response".into()));
        }
        self.check_response(y)?;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        match self {
            ParameterFamily::Gaussian => Ok(mean),
            ParameterFamily::Binomial => {
                if mean <= 0.0 || mean >= 1.0 {
                    Err(Error::DegenerateResponse(format!(
                        "binary response is constant (mean {mean})"
                    )))
                } else {
                    Ok(logit(mean))
                }
            }
            ParameterFamily::TruncNbMu => Ok(mean.ln()),
            ParameterFamily::TruncNbSigma => Ok(moment_sigma(y, mean).ln()),
        }
    }
}

/// Method-of-moments overdispersion `(s^2 - ybar) / ybar^2`, floored.
fn moment_sigma(y: &[f64], mean: f64) -> f64 {
    if y.len() < 2 {
        return SIGMA_FLOOR;
    }
    let s2 = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (y.len() as f64 - 1.0);
    ((s2 - mean) / (mean * mean)).max(SIGMA_FLOOR)
}

/// Mean loss over a response vector.
pub fn mean_loss(family: ParameterFamily, y: &[f64], eta: &[f64], other: &[f64]) -> f64 {
    let total: f64 = if other.is_empty() {
        y.iter().zip(eta).map(|(&yi, &ei)| family.loss(yi, ei, 0.0)).sum()
    } else {
        y.iter()
            .zip(eta)
            .zip(other)
            .map(|((&yi, &ei), &oi)| family.loss(yi, ei, oi))
            .sum()
    };
    total / y.len() as f64
}
