//! Gaussian quasi-maximum-likelihood for GARCH(1,1) and GJR-GARCH(1,1).
//!
//! The search runs on the standardized series `y = (x − m)/s` over an
//! unconstrained vector
//!
//! ```text
//! θ = (μ_y, ln a0_y, logit P, logit S [, logit((1 + c)/2)])
//! a1 = S·P/κ(c),  b1 = (1 − S)·P,  c = 2·logistic(θ_4) − 1
//! ```
//!
//! so every `θ` maps to a stationary spec. Estimates map back through
//! `μ = m + s·μ_y`, `a0 = s²·a0_y`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::nelder_mead::{minimize, NelderMeadOptions};
use super::{calibrate_innovations, conditional_scales, kappa, residuals, Family, GarchSpec, Innovation, RESIDUAL_BURN};
use crate::error::{invalid, Error, Result};
use crate::series::TimeSeries;

pub const MIN_FIT_LENGTH: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub simplex: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            simplex: NelderMeadOptions {
                max_evals: 3000,
                ftol: 1e-12,
                xtol: 1e-6,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: GarchSpec,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub residuals: Option<TimeSeries>,
}

impl FitResult {
    /// Wraps a known spec as if it were fitted to `series`.
    pub fn evaluate(spec: GarchSpec, series: &TimeSeries) -> Result<Self> {
        let residuals = residuals(&spec, series)?;
        let loglik = loglik(&spec, series)?;
        Ok(Self {
            spec,
            loglik,
            converged: true,
            iterations: 0,
            residuals: Some(residuals),
        })
    }

    pub fn residuals(&self) -> Result<&TimeSeries> {
        self.residuals
            .as_ref()
            .ok_or_else(|| Error::Contract("fit carries no residuals".into()))
    }

    /// The fitted spec with Gaussian innovations matched to the mean and
    /// standard deviation of the residuals past the initialization burn.
    pub fn calibrated_spec(&self) -> Result<GarchSpec> {
        let resid = self.residuals()?;
        let tail = resid.drop_head(RESIDUAL_BURN.min(resid.len().saturating_sub(2)))?;
        self.spec.clone().with_innovation(calibrate_innovations(&tail)?)
    }
}

/// `−½ Σ [ln 2π + ln σ_t² + (X_t − μ)²/σ_t²]` for an `r = 2` spec.
pub fn loglik(spec: &GarchSpec, series: &TimeSeries) -> Result<f64> {
    if spec.r != 2.0 {
        return invalid("the Gaussian quasi-likelihood is defined for r = 2 only");
    }
    let sigmas = conditional_scales(spec, series)?;
    let total: f64 = series
        .values()
        .iter()
        .zip(&sigmas)
        .map(|(x, s)| {
            let z = (x - spec.mu) / s;
            (2.0 * PI).ln() + 2.0 * s.ln() + z * z
        })
        .sum();
    Ok(-0.5 * total)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct Params {
    mu: f64,
    a0: f64,
    a1: f64,
    b1: f64,
    c1: f64,
}

fn decode(theta: &[f64]) -> Params {
    let c1 = theta.get(4).map_or(0.0, |&t| 2.0 * logistic(t) - 1.0);
    let p = logistic(theta[2]);
    let s = logistic(theta[3]);
    Params {
        mu: theta[0],
        a0: theta[1].exp(),
        a1: s * p / (1.0 + c1 * c1),
        b1: (1.0 - s) * p,
        c1,
    }
}

/// Negative quasi-log-likelihood of a GJR(1,1) on `y`, less the `ln 2π` term.
fn objective(y: &[f64], p: &Params) -> f64 {
    let persistence = p.a1 * (1.0 + p.c1 * p.c1) + p.b1;
    if !(persistence < 1.0 && p.a0 > 0.0 && p.a0.is_finite()) {
        return f64::INFINITY;
    }
    let level = p.a0 / (1.0 - persistence);
    let mut v = level;
    let mut total = 0.0;
    for &yt in y {
        let z = yt - p.mu;
        total += v.ln() + z * z / v;
        let arch = z.abs() - p.c1 * z;
        v = p.a0 + p.a1 * arch * arch + p.b1 * v;
        if !(v > 0.0 && v.is_finite()) {
            return f64::INFINITY;
        }
    }
    0.5 * total
}

/// Fits `family` to `series` by Gaussian quasi-maximum-likelihood.
pub fn fit_qmle(series: &TimeSeries, family: Family, opts: FitOptions) -> Result<FitResult> {
    let n = series.len();
    if n < MIN_FIT_LENGTH {
        return invalid(format!("fitting needs at least {MIN_FIT_LENGTH} observations, got {n}"));
    }
    let m = series.mean();
    let var = series.values().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    if !(var > 0.0) || series.is_constant() {
        return Err(Error::DegenerateSeries("cannot fit a constant series".into()));
    }
    let s = var.sqrt();
    let y: Vec<f64> = series.values().iter().map(|v| (v - m) / s).collect();

    let (a1, b1, c1) = (0.05, 0.90, 0.0);
    let p = a1 * kappa(c1)? + b1;
    let mut theta = vec![0.0, (1.0 - p).ln(), logit(p), logit(a1 * kappa(c1)? / p)];
    if family == Family::Gjr11 {
        theta.push(0.0);
    }
    let step: Vec<f64> = vec![0.05, 0.5, 0.5, 0.5, 0.5][..theta.len()].to_vec();

    let f = |t: &[f64]| objective(&y, &decode(t));
    let mut best = minimize(f, &theta, &step, opts.simplex);
    let mut iterations = best.evals;
    for restart in 1..=opts.restarts {
        let start: Vec<f64> = best
            .x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let sign = if (i + restart) % 2 == 0 { 1.0 } else { -1.0 };
                v + sign * 0.1 * restart as f64
            })
            .collect();
        let run = minimize(f, &start, &step, opts.simplex);
        iterations += run.evals;
        if run.value < best.value || (run.value == best.value && run.converged) {
            best = run;
        }
    }
    if !best.value.is_finite() {
        return Err(Error::Numerical("quasi-likelihood is not finite anywhere visited".into()));
    }

    let est = decode(&best.x);
    let spec = GarchSpec {
        family,
        mu: m + s * est.mu,
        a0: s * s * est.a0,
        a: vec![est.a1],
        b: vec![est.b1],
        c: vec![if family == Family::Gjr11 { est.c1 } else { 0.0 }],
        r: 2.0,
        innovation: Innovation::STANDARD,
    };
    spec.validate()?;
    let mut fit = FitResult::evaluate(spec, series)?;
    fit.converged = best.converged;
    fit.iterations = iterations;
    Ok(fit)
}
