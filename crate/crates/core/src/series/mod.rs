//! Time-series data model, price ingestion and second-order diagnostics.

mod csv;

use std::f64::consts::PI;

use chrono::NaiveDate;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use self::csv::{
    load_csv, load_prices, load_values, read_header, write_dated_values, write_values, CsvSchema, LoadedSeries,
};

/// Smallest length accepted by the spectral operations (three interior
/// Fourier frequencies).
pub const MIN_SPECTRAL_LEN: usize = 8;

/// An ordered series of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("time series must contain at least one value");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite value {} at index {}", values[i], i));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Returns the series without its first `count` values.
    pub fn drop_head(&self, count: usize) -> Result<Self> {
        if count >= self.len() {
            return invalid(format!(
                "cannot drop {count} values from a series of length {}",
                self.len()
            ));
        }
        Ok(Self {
            values: self.values[count..].to_vec(),
        })
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.len())
    }

    pub(crate) fn require_spectral(&self) -> Result<()> {
        if self.len() < MIN_SPECTRAL_LEN {
            return invalid(format!(
                "spectral operations need at least {MIN_SPECTRAL_LEN} values, got {}",
                self.len()
            ));
        }
        Ok(())
    }

    pub(crate) fn is_constant(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|&v| v == first)
    }
}

impl TryFrom<Vec<f64>> for TimeSeries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<TimeSeries> for Vec<f64> {
    fn from(s: TimeSeries) -> Self {
        s.values
    }
}

/// Daily closing values indexed by strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return invalid(format!(
                "{} dates but {} closing values",
                dates.len(),
                closes.len()
            ));
        }
        if closes.is_empty() {
            return invalid("price series is empty");
        }
        for (i, w) in dates.windows(2).enumerate() {
            if w[1] <= w[0] {
                return invalid(format!(
                    "dates must be strictly increasing: row {} ({}) follows {}",
                    i + 2,
                    w[1],
                    w[0]
                ));
            }
        }
        if let Some(i) = closes.iter().position(|&c| !(c.is_finite() && c > 0.0)) {
            return invalid(format!(
                "closing values must be positive: row {} has {}",
                i + 1,
                closes[i]
            ));
        }
        Ok(Self { dates, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// Interior Fourier frequencies `2πk/n`, `k = 1 … ceil(n/2) − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    n: usize,
    omegas: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return invalid(format!("a frequency grid needs n >= 3, got {n}"));
        }
        let count = n.div_ceil(2) - 1;
        let omegas = (1..=count)
            .map(|k| 2.0 * PI * k as f64 / n as f64)
            .collect();
        Ok(Self { n, omegas })
    }

    /// Series length the grid was built for.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of grid frequencies, `K`.
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Angular frequencies; entry `i` is `ω_{i+1}`.
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// Frequencies in cycles per sample, `ω/(2π)`.
    pub fn cycles(&self) -> Vec<f64> {
        (1..=self.len()).map(|k| k as f64 / self.n as f64).collect()
    }

    /// Grid index `k` (1-based) of `omega` if it is a grid frequency.
    pub fn index_of(&self, omega: f64) -> Option<usize> {
        let k = (omega * self.n as f64 / (2.0 * PI)).round();
        if k < 1.0 || k > self.len() as f64 {
            return None;
        }
        let exact = 2.0 * PI * k / self.n as f64;
        ((omega - exact).abs() <= 1e-9 * exact.max(1.0)).then_some(k as usize)
    }
}

pub fn log_returns(prices: &PriceSeries) -> Result<TimeSeries> {
    log_returns_from_closes(prices.closes())
}

/// `X_t = log(Y_t / Y_{t−1})`.
pub fn log_returns_from_closes(closes: &[f64]) -> Result<TimeSeries> {
    if closes.len() < 2 {
        return invalid("log returns need at least two prices");
    }
    if let Some(i) = closes.iter().position(|&c| !(c.is_finite() && c > 0.0)) {
        return invalid(format!("price at index {i} is not positive: {}", closes[i]));
    }
    TimeSeries::new(closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldKind {
    Absolute,
    Square,
}

pub fn fold(series: &TimeSeries, kind: FoldKind) -> TimeSeries {
    let values = series
        .values()
        .iter()
        .map(|&x| match kind {
            FoldKind::Absolute => x.abs(),
            FoldKind::Square => x * x,
        })
        .collect();
    TimeSeries { values }
}

/// Sample autocorrelations `ρ̂_0 … ρ̂_max_lag` with the biased (1/n)
/// autocovariance.
pub fn autocorrelation(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag >= n {
        return invalid(format!("max_lag {max_lag} must be below the series length {n}"));
    }
    let mean = series.mean();
    let centered: Vec<f64> = series.values().iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    if c0 <= 0.0 {
        return Err(Error::DegenerateSeries(
            "autocorrelation of a constant series is undefined".into(),
        ));
    }
    let mut acf = Vec::with_capacity(max_lag + 1);
    acf.push(1.0);
    for lag in 1..=max_lag {
        let c: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum();
        acf.push(c / c0);
    }
    Ok(acf)
}

/// Mean-centred periodogram over the interior Fourier grid, normalized to
/// sum to one.
pub fn ordinary_periodogram(series: &TimeSeries) -> Result<Vec<f64>> {
    series.require_spectral()?;
    let grid = series.frequency_grid()?;
    normalized_power(series.values(), grid.len()).ok_or_else(|| {
        Error::DegenerateSeries("periodogram has no power on the Fourier grid".into())
    })
}

/// Raw periodogram scaled to sum to one, or `None` when the grid carries
/// only rounding-level power (below 1e−12 of the total sum of squares).
pub(crate) fn normalized_power(values: &[f64], count: usize) -> Option<Vec<f64>> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let energy: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let raw = raw_periodogram(values, count);
    let total: f64 = raw.iter().sum();
    if !(total > 1e-12 * energy && total > 0.0) {
        return None;
    }
    Some(raw.into_iter().map(|p| p / total).collect())
}

/// `|Σ (x_t − x̄) e^{−iω_k t}|² / n` for `k = 1 … count`.
pub(crate) fn raw_periodogram(values: &[f64], count: usize) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut buf);
    // The FFT indexes time from 0; a shift to t = 1 only changes phase.
    buf[1..=count]
        .iter()
        .map(|c| c.norm_sqr() / n as f64)
        .collect()
}
