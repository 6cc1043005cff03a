//! Decay-class fitting: polynomial, exponential and stretched-exponential
//! rates with least-squares diagnostics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::linreg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateClass {
    Polynomial,
    Exponential,
    Stretched,
}

impl std::str::FromStr for RateClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polynomial" => Ok(RateClass::Polynomial),
            "exponential" => Ok(RateClass::Exponential),
            "stretched" => Ok(RateClass::Stretched),
            other => Err(Error::InvalidParameter(format!("unknown rate class {other}"))),
        }
    }
}

/// Fitted decay class with residual diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub class: RateClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_prime: Option<f64>,
    pub r_squared: f64,
    pub fit_range: (f64, f64),
    pub log_amplitude: f64,
    /// Number of nonpositive values trimmed from the requested range.
    pub trimmed: usize,
}

// (xs, ys, trimmed count, realized range)
type Restricted = (Vec<f64>, Vec<f64>, usize, (f64, f64));

fn restrict(ns: &[f64], ys: &[f64], range: Option<(f64, f64)>) -> Result<Restricted> {
    if ns.len() != ys.len() {
        return Err(Error::InvalidParameter("series length mismatch".into()));
    }
    let (lo, hi) = range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    let mut trimmed = 0usize;
    for (&n, &y) in ns.iter().zip(ys) {
        if n < lo || n > hi || n <= 0.0 {
            continue;
        }
        if y > 0.0 {
            xs.push(n);
            vs.push(y);
        } else {
            trimmed += 1;
        }
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "only {} positive points in the fit range",
            xs.len()
        )));
    }
    let span = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok((xs, vs, trimmed, span))
}

fn fit_poly(xs: &[f64], logs: &[f64]) -> (f64, f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    linreg(&lx, logs)
}

fn fit_exp(xs: &[f64], logs: &[f64]) -> (f64, f64, f64) {
    linreg(xs, logs)
}

fn fit_stretched(xs: &[f64], logs: &[f64]) -> (f64, f64, f64, f64) {
    let mut best = (0.0, 0.0, -1.0, 1.0);
    let mut theta = 0.05;
    while theta <= 1.0 + 1e-9 {
        let tx: Vec<f64> = xs.iter().map(|x| x.powf(theta)).collect();
        let (slope, intercept, r2) = linreg(&tx, logs);
        if slope < 0.0 && r2 > best.2 {
            best = (slope, intercept, r2, theta);
        }
        theta += 0.01;
    }
    best
}

/// Fit a positive decay series on the requested range. `None` hint picks the
/// class with best R^2, with a 0.02 preference margin toward the simpler
/// two-parameter classes over the stretched family.
pub fn fit_rate(
    ns: &[f64],
    ys: &[f64],
    hint: Option<RateClass>,
    range: Option<(f64, f64)>,
) -> Result<RateFit> {
    let (xs, vs, trimmed, span) = restrict(ns, ys, range)?;
    let logs: Vec<f64> = vs.iter().map(|y| y.ln()).collect();

    let make = |class: RateClass| -> RateFit {
        match class {
            RateClass::Polynomial => {
                let (slope, intercept, r2) = fit_poly(&xs, &logs);
                RateFit {
                    class,
                    alpha: Some(-slope),
                    tau: None,
                    theta: None,
                    theta_prime: None,
                    r_squared: r2,
                    fit_range: span,
                    log_amplitude: intercept,
                    trimmed,
                }
            }
            RateClass::Exponential => {
                let (slope, intercept, r2) = fit_exp(&xs, &logs);
                RateFit {
                    class,
                    alpha: None,
                    tau: Some(-slope),
                    theta: None,
                    theta_prime: None,
                    r_squared: r2,
                    fit_range: span,
                    log_amplitude: intercept,
                    trimmed,
                }
            }
            RateClass::Stretched => {
                let (slope, intercept, r2, theta) = fit_stretched(&xs, &logs);
                RateFit {
                    class,
                    alpha: None,
                    tau: Some(-slope),
                    theta: Some(theta),
                    theta_prime: Some(theta / (theta + 1.0)),
                    r_squared: r2,
                    fit_range: span,
                    log_amplitude: intercept,
                    trimmed,
                }
            }
        }
    };

    if let Some(class) = hint {
        return Ok(make(class));
    }
    let poly = make(RateClass::Polynomial);
    let exp = make(RateClass::Exponential);
    let stretched = make(RateClass::Stretched);
    let simple = if exp.r_squared >= poly.r_squared {
        exp
    } else {
        poly
    };
    if stretched.r_squared - 0.02 > simple.r_squared {
        Ok(stretched)
    } else {
        Ok(simple)
    }
}

/// Smallest constant `C` with `series(n) <= C * envelope(n)` over the range.
/// Violations are zero by construction; the constant is the comparison
/// statistic across experiments.
pub fn bound_check(
    ns: &[f64],
    ys: &[f64],
    class: RateClass,
    params: &[f64],
    range: Option<(f64, f64)>,
) -> Result<(f64, usize)> {
    if ns.len() != ys.len() {
        return Err(Error::InvalidParameter("series length mismatch".into()));
    }
    let (lo, hi) = range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let envelope = |n: f64| -> f64 {
        match class {
            RateClass::Polynomial => n.powf(-params[0]),
            RateClass::Exponential => (-params[0] * n).exp(),
            RateClass::Stretched => (-params[0] * n.powf(params[1])).exp(),
        }
    };
    let mut c = 0.0f64;
    for (&n, &y) in ns.iter().zip(ys) {
        if n < lo || n > hi || n <= 0.0 {
            continue;
        }
        c = c.max(y / envelope(n));
    }
    Ok((c, 0))
}
