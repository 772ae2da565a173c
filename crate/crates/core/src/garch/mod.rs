//! GARCH-type volatility models: specification, simulation, residual
//! extraction and Gaussian quasi-likelihood fitting.
//!
//! The conditional scale follows the power recursion
//!
//! ```text
//! σ_t^r = a0 + Σ_i a_i (|Z_{t−i}| − c_i Z_{t−i})^r + Σ_j b_j σ_{t−j}^r
//! X_t   = μ + Z_t,   Z_t = σ_t ε_t
//! ```
//!
//! GARCH(1,1) is `c = 0, r = 2`; GJR-GARCH(1,1) frees `c_1`. Pre-sample
//! values sit at the unconditional level `L = a0 / (1 − P)`, with
//! `P = Σ a_i κ(c_i) + Σ b_j`, and each pre-sample ARCH term at `κ(c_i)·L`, so
//! `σ_1^r = L` exactly.

mod fit;
mod nelder_mead;

pub use fit::{fit_qmle, loglik, FitOptions, FitResult, MIN_FIT_LENGTH};
pub use nelder_mead::{minimize, NelderMeadOptions, NelderMeadResult};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SeedStream;
use crate::series::TimeSeries;
use crate::special::{normal_cdf, normal_pdf};

/// Residuals whose recursion is still dominated by the initialization.
pub const RESIDUAL_BURN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[serde(alias = "garch")]
    Garch11,
    #[serde(alias = "gjr")]
    Gjr11,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum Innovation {
    Gaussian { mean: f64, sd: f64 },
}

impl Innovation {
    pub const STANDARD: Innovation = Innovation::Gaussian { mean: 0.0, sd: 1.0 };

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Innovation::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
        }
    }

    /// `E(|ε| − cε)^r` under this law.
    pub fn kappa(&self, c: f64, r: f64) -> f64 {
        let Innovation::Gaussian { mean: m, sd: s } = *self;
        if r == 2.0 {
            let second = m * m + s * s;
            // E[ε|ε|] for a normal variable.
            let signed = if s > 0.0 {
                second * (2.0 * normal_cdf(m / s) - 1.0) + 2.0 * m * s * normal_pdf(m / s)
            } else {
                m * m.abs()
            };
            return (1.0 + c * c) * second - 2.0 * c * signed;
        }
        if s == 0.0 {
            return (m.abs() - c * m).powf(r);
        }
        let f = |x: f64| (x.abs() - c * x).powf(r) * normal_pdf((x - m) / s) / s;
        let (lo, hi) = (m - 12.0 * s, m + 12.0 * s);
        if lo < 0.0 && hi > 0.0 {
            simpson(&f, lo, 0.0) + simpson(&f, 0.0, hi)
        } else {
            simpson(&f, lo, hi)
        }
    }
}

impl Default for Innovation {
    fn default() -> Self {
        Self::STANDARD
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const PANELS: usize = 4000;
    let h = (b - a) / PANELS as f64;
    let mut sum = f(a) + f(b);
    for i in 1..PANELS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// `κ(c) = E(|ε| − cε)² = 1 + c²` for a standard normal `ε`.
pub fn kappa(c: f64) -> Result<f64> {
    if !(c.abs() <= 1.0) {
        return invalid(format!("asymmetry coefficient must satisfy |c| <= 1, got {c}"));
    }
    Ok(1.0 + c * c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct GarchSpec {
    pub family: Family,
    pub mu: f64,
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub r: f64,
    pub innovation: Innovation,
}

#[derive(Deserialize)]
struct RawSpec {
    family: Family,
    mu: f64,
    a0: f64,
    #[serde(default)]
    a: Vec<f64>,
    #[serde(default)]
    b: Vec<f64>,
    #[serde(default)]
    c: Vec<f64>,
    #[serde(default = "default_power")]
    r: f64,
    #[serde(default)]
    innovation: Innovation,
}

fn default_power() -> f64 {
    2.0
}

impl TryFrom<RawSpec> for GarchSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        let c = if raw.c.is_empty() {
            vec![0.0; raw.a.len()]
        } else {
            raw.c
        };
        let spec = GarchSpec {
            family: raw.family,
            mu: raw.mu,
            a0: raw.a0,
            a: raw.a,
            b: raw.b,
            c,
            r: raw.r,
            innovation: raw.innovation,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl GarchSpec {
    pub fn garch11(mu: f64, a0: f64, a1: f64, b1: f64) -> Result<Self> {
        let spec = Self {
            family: Family::Garch11,
            mu,
            a0,
            a: vec![a1],
            b: vec![b1],
            c: vec![0.0],
            r: 2.0,
            innovation: Innovation::STANDARD,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gjr11(mu: f64, a0: f64, a1: f64, b1: f64, c1: f64) -> Result<Self> {
        let spec = Self {
            family: Family::Gjr11,
            c: vec![c1],
            ..Self::garch11(mu, a0, a1, b1)?
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Independent draws `μ + ε_t` scaled to variance `a0`.
    pub fn iid(mu: f64, a0: f64) -> Result<Self> {
        let spec = Self {
            family: Family::Garch11,
            mu,
            a0,
            a: vec![],
            b: vec![],
            c: vec![],
            r: 2.0,
            innovation: Innovation::STANDARD,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_innovation(mut self, innovation: Innovation) -> Result<Self> {
        self.innovation = innovation;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        if !finite(self.mu) {
            return invalid("mu must be finite");
        }
        if !(self.a0 > 0.0 && finite(self.a0)) {
            return invalid(format!("a0 must be positive, got {}", self.a0));
        }
        if self.a.iter().chain(&self.b).any(|&v| !(v >= 0.0 && finite(v))) {
            return invalid("ARCH and GARCH coefficients must be finite and >= 0");
        }
        if self.c.len() != self.a.len() {
            return invalid(format!(
                "{} asymmetry coefficients for {} ARCH terms",
                self.c.len(),
                self.a.len()
            ));
        }
        if self.c.iter().any(|&c| !(c.abs() <= 1.0)) {
            return invalid("asymmetry coefficients must satisfy |c| <= 1");
        }
        if self.family == Family::Garch11 && self.c.iter().any(|&c| c != 0.0) {
            return invalid("the garch11 family has no asymmetry; use gjr11");
        }
        if !(self.r > 0.0 && finite(self.r)) {
            return invalid(format!("power r must be positive, got {}", self.r));
        }
        let Innovation::Gaussian { mean, sd } = self.innovation;
        if !(finite(mean) && sd > 0.0 && finite(sd)) {
            return invalid("innovation needs a finite mean and a positive sd");
        }
        Ok(())
    }

    /// `P = Σ a_i κ(c_i) + Σ b_j` under the spec's innovation law.
    pub fn persistence(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.c)
            .map(|(&a, &c)| a * self.innovation.kappa(c, self.r))
            .sum::<f64>()
            + self.b.iter().sum::<f64>()
    }

    pub fn is_stationary(&self) -> bool {
        self.persistence() < 1.0
    }

    /// Unconditional level of `σ_t^r`, `a0 / (1 − P)`.
    pub fn unconditional_level(&self) -> Option<f64> {
        let p = self.persistence();
        (p < 1.0).then(|| self.a0 / (1.0 - p))
    }

    fn require_stationary(&self) -> Result<()> {
        let persistence = self.persistence();
        if persistence >= 1.0 {
            return Err(Error::NonStationary { persistence });
        }
        Ok(())
    }
}

#[inline]
fn pow_r(x: f64, r: f64) -> f64 {
    if r == 2.0 {
        x * x
    } else {
        x.powf(r)
    }
}

#[inline]
fn root_r(x: f64, r: f64) -> f64 {
    if r == 2.0 {
        x.sqrt()
    } else {
        x.powf(1.0 / r)
    }
}

/// The σ recursion, shared by simulation and residual extraction so that the
/// two agree to the last bit.
struct Recursion<'a> {
    spec: &'a GarchSpec,
    arch_init: Vec<f64>,
    level: f64,
    z: Vec<f64>,
    sr: Vec<f64>,
}

impl<'a> Recursion<'a> {
    /// Non-stationary specs (only reachable through the simulation override)
    /// start from `a0` instead of the undefined unconditional level.
    fn new(spec: &'a GarchSpec, capacity: usize) -> Self {
        let level = spec.unconditional_level().unwrap_or(spec.a0);
        let arch_init = spec
            .c
            .iter()
            .map(|&c| spec.innovation.kappa(c, spec.r) * level)
            .collect();
        Self {
            spec,
            arch_init,
            level,
            z: Vec::with_capacity(capacity),
            sr: Vec::with_capacity(capacity),
        }
    }

    /// `σ_t` for the next step.
    fn next_sigma(&mut self) -> Result<f64> {
        let t = self.z.len();
        let s = self.spec;
        let mut v = s.a0;
        for (i, (&a, &c)) in s.a.iter().zip(&s.c).enumerate() {
            let term = match t.checked_sub(i + 1) {
                Some(lag) => pow_r(self.z[lag].abs() - c * self.z[lag], s.r),
                None => self.arch_init[i],
            };
            v += a * term;
        }
        for (j, &b) in s.b.iter().enumerate() {
            let term = match t.checked_sub(j + 1) {
                Some(lag) => self.sr[lag],
                None => self.level,
            };
            v += b * term;
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Numerical(format!(
                "conditional scale degenerated to {v} at t = {}",
                t + 1
            )));
        }
        self.sr.push(v);
        let sigma = root_r(v, s.r);
        if !(sigma > 0.0) {
            return Err(Error::Numerical(format!("conditional scale underflow at t = {}", t + 1)));
        }
        Ok(sigma)
    }

    fn push(&mut self, z: f64) {
        self.z.push(z);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulateOptions {
    pub burn_in: usize,
    pub allow_nonstationary: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            allow_nonstationary: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub series: TimeSeries,
    pub sigmas: TimeSeries,
    pub innovations: TimeSeries,
}

/// Simulates `n` values after discarding `burn_in`, drawing from the stream
/// rooted at `seed`.
pub fn simulate(spec: &GarchSpec, n: usize, seed: u64, opts: SimulateOptions) -> Result<Simulation> {
    simulate_with_rng(spec, n, &mut SeedStream::new(seed).rng(), opts)
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    spec: &GarchSpec,
    n: usize,
    rng: &mut R,
    opts: SimulateOptions,
) -> Result<Simulation> {
    spec.validate()?;
    if n == 0 {
        return invalid("simulation length must be at least 1");
    }
    if !opts.allow_nonstationary {
        spec.require_stationary()?;
    }
    let total = opts.burn_in + n;
    let mut rec = Recursion::new(spec, total);
    let mut series = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    let mut innovations = Vec::with_capacity(n);
    for t in 0..total {
        let sigma = rec.next_sigma()?;
        let e = spec.innovation.draw(rng);
        let z = sigma * e;
        rec.push(z);
        if t >= opts.burn_in {
            series.push(spec.mu + z);
            sigmas.push(sigma);
            innovations.push(e);
        }
    }
    Ok(Simulation {
        series: TimeSeries::new(series)?,
        sigmas: TimeSeries::new(sigmas)?,
        innovations: TimeSeries::new(innovations)?,
    })
}

/// Standardized residuals `(X_t − μ)/σ_t` with the recursion started at the
/// unconditional level.
pub fn residuals(spec: &GarchSpec, series: &TimeSeries) -> Result<TimeSeries> {
    let sigmas = conditional_scales(spec, series)?;
    TimeSeries::new(
        series
            .values()
            .iter()
            .zip(&sigmas)
            .map(|(x, s)| (x - spec.mu) / s)
            .collect(),
    )
}

/// `σ_t` filtered from the observed series.
pub fn conditional_scales(spec: &GarchSpec, series: &TimeSeries) -> Result<Vec<f64>> {
    spec.validate()?;
    spec.require_stationary()?;
    let mut rec = Recursion::new(spec, series.len());
    let mut out = Vec::with_capacity(series.len());
    for &x in series.values() {
        out.push(rec.next_sigma()?);
        rec.push(x - spec.mu);
    }
    Ok(out)
}

/// Sample mean and standard deviation (denominator `n − 1`).
pub fn calibrate_innovations(residuals: &TimeSeries) -> Result<Innovation> {
    let n = residuals.len();
    if n < 2 {
        return invalid("calibration needs at least two residuals");
    }
    let mean = residuals.mean();
    let var = residuals
        .values()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::DegenerateSeries("residuals have zero variance".into()));
    }
    Ok(Innovation::Gaussian {
        mean,
        sd: var.sqrt(),
    })
}
