//! Check-loss regression on the trigonometric design `(cos ωt, sin ωt, 1)`.

pub mod oracle;
pub(crate) mod simplex;

use serde::{Deserialize, Serialize};

use self::simplex::{DualSimplex, TrigDesign, Vertex};
use crate::error::{invalid, Error, Result};
use crate::series::{FrequencyGrid, TimeSeries};

pub use self::oracle::oracle_trig_quantile;

/// Result of one trigonometric quantile regression at `(ω, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigQuantileFit {
    pub omega: f64,
    pub alpha: f64,
    /// Cosine coefficient `A`.
    pub cos_coef: f64,
    /// Sine coefficient `B`.
    pub sin_coef: f64,
    pub intercept: f64,
    /// Minimized total check loss.
    pub objective: f64,
}

impl TrigQuantileFit {
    pub(crate) fn from_vertex(omega: f64, alpha: f64, v: Vertex, shift: f64) -> Self {
        Self {
            omega,
            alpha,
            cos_coef: v.coef[0],
            sin_coef: v.coef[1],
            intercept: v.coef[2] + shift,
            objective: v.objective,
        }
    }

    /// Fitted value at time `t` (1-based).
    pub fn fitted(&self, t: usize) -> f64 {
        let phase = self.omega * t as f64;
        self.intercept + self.cos_coef * phase.cos() + self.sin_coef * phase.sin()
    }
}

/// Constant-only fit: the sample α-quantile and its check loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleQuantile {
    pub lambda: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// Accept frequencies off the Fourier grid of the series.
    pub allow_arbitrary_omega: bool,
}

#[inline]
pub(crate) fn rho(x: f64, alpha: f64) -> f64 {
    if x < 0.0 {
        (alpha - 1.0) * x
    } else {
        alpha * x
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        invalid(format!("quantile level must lie in (0, 1), got {alpha}"))
    }
}

/// `ρ_α(x) = x (α − I(x < 0))`.
pub fn check_loss(x: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(rho(x, alpha))
}

/// Minimizer of `Σ ρ_α(x_t − λ)`; the lower endpoint when it is an interval.
pub fn sample_quantile(series: &TimeSeries, alpha: f64) -> Result<SampleQuantile> {
    check_alpha(alpha)?;
    let mut sorted = series.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sample_quantile_sorted(series.values(), &sorted, alpha))
}

pub(crate) fn sample_quantile_sorted(values: &[f64], sorted: &[f64], alpha: f64) -> SampleQuantile {
    let n = sorted.len();
    // The order statistic of rank ceil(nα); nα within rounding of an integer
    // is treated as that integer so ties resolve to the lower endpoint.
    let na = n as f64 * alpha;
    let rank = if (na - na.round()).abs() <= 1e-9 * na.max(1.0) {
        na.round() as usize
    } else {
        na.ceil() as usize
    };
    let lambda = sorted[rank.clamp(1, n) - 1];
    let objective = values.iter().map(|&x| rho(x - lambda, alpha)).sum();
    SampleQuantile { lambda, objective }
}

pub fn fit_trig_quantile(series: &TimeSeries, omega: f64, alpha: f64) -> Result<TrigQuantileFit> {
    fit_trig_quantile_with(series, omega, alpha, FitOptions::default())
}

pub fn fit_trig_quantile_with(
    series: &TimeSeries,
    omega: f64,
    alpha: f64,
    options: FitOptions,
) -> Result<TrigQuantileFit> {
    let mut fits = fit_trig_quantile_batch_with(series, omega, &[alpha], options)?;
    Ok(fits.remove(0))
}

/// Fits every level in `alphas` (strictly increasing) at one frequency.
pub fn fit_trig_quantile_batch(
    series: &TimeSeries,
    omega: f64,
    alphas: &[f64],
) -> Result<Vec<TrigQuantileFit>> {
    fit_trig_quantile_batch_with(series, omega, alphas, FitOptions::default())
}

pub fn fit_trig_quantile_batch_with(
    series: &TimeSeries,
    omega: f64,
    alphas: &[f64],
    options: FitOptions,
) -> Result<Vec<TrigQuantileFit>> {
    if alphas.is_empty() {
        return invalid("at least one quantile level is required");
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("quantile levels must be strictly increasing");
    }
    let design = design_for(series.len(), omega, options)?;
    fit_levels(series.values(), &design, alphas).map_err(|(_, e)| e)
}

fn design_for(n: usize, omega: f64, options: FitOptions) -> Result<TrigDesign> {
    if n < 3 {
        return invalid(format!("trigonometric regression needs n >= 3, got {n}"));
    }
    if !(omega > 0.0 && omega < std::f64::consts::PI) {
        return invalid(format!("frequency must lie in (0, π), got {omega}"));
    }
    let grid = FrequencyGrid::new(n)?;
    match grid.index_of(omega) {
        Some(k) => Ok(TrigDesign::fourier(n, k)),
        None if options.allow_arbitrary_omega => {
            let design = TrigDesign::arbitrary(n, omega);
            if design.is_rank_deficient() {
                return Err(Error::DegenerateDesign(format!(
                    "cos/sin regressors are dependent at ω = {omega} for n = {n}"
                )));
            }
            Ok(design)
        }
        None => invalid(format!(
            "ω = {omega} is not a Fourier frequency for n = {n} (enable arbitrary frequencies to allow it)"
        )),
    }
}

/// Solves all levels at one frequency, warm-starting each level from the
/// previous basis. On failure returns the index of the failing level.
pub(crate) fn fit_levels(
    values: &[f64],
    design: &TrigDesign,
    alphas: &[f64],
) -> std::result::Result<Vec<TrigQuantileFit>, (usize, Error)> {
    let shift = median(values);
    let centered: Vec<f64> = values.iter().map(|v| v - shift).collect();
    let mut solver = DualSimplex::new(&centered, design);
    alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            solver
                .solve(alpha)
                .map(|v| TrigQuantileFit::from_vertex(design.omega, alpha, v, shift))
                .map_err(|e| (i, e.into_error(design.omega, alpha, shift)))
        })
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, f64::total_cmp).1
}
