//! Spectral divergence metrics over quantile-frequency regions.
//!
//! Both families compare an observed matrix with a target over a region
//! `A × Ω` (levels × frequencies). Per level:
//!
//! ```text
//! KS(α) = w(α) · √|Ω| · max_{k∈Ω} |Q(ω_k, α) − Q₀(ω_k, α)|
//! WL(α) = w(α) · |Ω|^{−1/2} · Σ_{k∈Ω} d(q̃(ω_k, α) / q̃₀(ω_k, α))
//! ```
//!
//! with `d(x) = x − ln x − 1`, and each family is aggregated over `A` by its
//! maximum and by its mean. Normalization always runs over the full grid,
//! so restricting `Ω` never renormalizes.

mod classical;
mod mixture;

pub use classical::{ljung_box, lm_arch, ClassicalKind, ClassicalTestResult};
pub use mixture::{mixture_periodogram, sensitivity_profile, MixtureSpec, SensitivityProfile};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qfa::{cumulate, MatrixState, PeriodogramKind, QfaMatrix, QuantileGrid};
use crate::series::FrequencyGrid;

/// Level bounds are compared with this slack so that grid levels produced
/// by decimal stepping land on the intended side of a closed bound.
const LEVEL_TOL: f64 = 1e-9;

/// An interval of quantile levels with open or closed ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBounds {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl LevelBounds {
    pub fn contains(&self, alpha: f64) -> bool {
        let above = if self.lo_closed {
            alpha >= self.lo - LEVEL_TOL
        } else {
            alpha > self.lo + LEVEL_TOL
        };
        let below = if self.hi_closed {
            alpha <= self.hi + LEVEL_TOL
        } else {
            alpha < self.hi - LEVEL_TOL
        };
        above && below
    }
}

/// Which grid frequencies enter `Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FreqSelection {
    All,
    /// Closed band in cycles per sample, `ω/(2π)`.
    Band { lo: f64, hi: f64 },
    /// Explicit 1-based grid indices `k`.
    Indices { k: Vec<usize> },
}

/// Level weighting `w(α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Weighting {
    Constant { value: f64 },
    /// Explicit `(alpha, weight)` pairs; every level of `A` must be listed.
    Table { entries: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionPreset {
    Full,
    Middle,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub levels: LevelBounds,
    pub freqs: FreqSelection,
    pub weight: Weighting,
}

impl Region {
    pub fn new(levels: LevelBounds, freqs: FreqSelection, weight: Weighting) -> Self {
        Self {
            levels,
            freqs,
            weight,
        }
    }

    /// All levels in `(0, 1)`, all frequencies, `w ≡ 1`.
    pub fn full() -> Self {
        Self::preset(RegionPreset::Full)
    }

    /// Full = (0, 1), middle = (0.3, 0.7), lower = (0, 0.3], upper = [0.7, 1).
    pub fn preset(preset: RegionPreset) -> Self {
        let (lo, lo_closed, hi, hi_closed) = match preset {
            RegionPreset::Full => (0.0, false, 1.0, false),
            RegionPreset::Middle => (0.3, false, 0.7, false),
            RegionPreset::Lower => (0.0, false, 0.3, true),
            RegionPreset::Upper => (0.7, true, 1.0, false),
        };
        Self {
            levels: LevelBounds {
                lo,
                lo_closed,
                hi,
                hi_closed,
            },
            freqs: FreqSelection::All,
            weight: Weighting::Constant { value: 1.0 },
        }
    }

    /// The levels `{alpha}` only (matched with the level tolerance).
    pub fn single_level(alpha: f64) -> Self {
        Self {
            levels: LevelBounds {
                lo: alpha,
                lo_closed: true,
                hi: alpha,
                hi_closed: true,
            },
            freqs: FreqSelection::All,
            weight: Weighting::Constant { value: 1.0 },
        }
    }

    pub fn with_freqs(mut self, freqs: FreqSelection) -> Self {
        self.freqs = freqs;
        self
    }

    pub fn with_weight(mut self, weight: Weighting) -> Self {
        self.weight = weight;
        self
    }

    /// Resolves the region against concrete grids.
    pub fn resolve(&self, grid: &FrequencyGrid, qgrid: &QuantileGrid) -> Result<ResolvedRegion> {
        let mut level_idx = Vec::new();
        let mut weights = Vec::new();
        for (l, &alpha) in qgrid.levels().iter().enumerate() {
            if !self.levels.contains(alpha) {
                continue;
            }
            let w = match &self.weight {
                Weighting::Constant { value } => *value,
                Weighting::Table { entries } => entries
                    .iter()
                    .find(|(a, _)| (a - alpha).abs() <= LEVEL_TOL)
                    .map(|&(_, w)| w)
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("weight table has no entry for alpha = {alpha}"))
                    })?,
            };
            if !(w >= 0.0 && w.is_finite()) {
                return invalid(format!("weight at alpha = {alpha} must be finite and >= 0, got {w}"));
            }
            level_idx.push(l);
            weights.push(w);
        }
        if level_idx.is_empty() {
            return invalid("region selects no quantile level of the grid");
        }
        if weights.iter().all(|&w| w == 0.0) {
            return invalid("region weights are all zero");
        }

        let k_count = grid.len();
        let freq_idx: Vec<usize> = match &self.freqs {
            FreqSelection::All => (0..k_count).collect(),
            FreqSelection::Band { lo, hi } => grid
                .cycles()
                .iter()
                .enumerate()
                .filter(|(_, &f)| f >= lo - LEVEL_TOL && f <= hi + LEVEL_TOL)
                .map(|(i, _)| i)
                .collect(),
            FreqSelection::Indices { k } => {
                let mut idx = Vec::with_capacity(k.len());
                for &kk in k {
                    if kk == 0 || kk > k_count {
                        return invalid(format!("frequency index {kk} outside 1..={k_count}"));
                    }
                    idx.push(kk - 1);
                }
                idx.sort_unstable();
                idx.dedup();
                idx
            }
        };
        if freq_idx.is_empty() {
            return invalid("region selects no grid frequency");
        }
        Ok(ResolvedRegion {
            level_idx,
            weights,
            freq_idx,
        })
    }
}

impl Default for Region {
    fn default() -> Self {
        Self::full()
    }
}

/// Region indices on a concrete grid (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRegion {
    pub level_idx: Vec<usize>,
    pub weights: Vec<f64>,
    pub freq_idx: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelValue {
    pub alpha: f64,
    pub value: f64,
}

/// One metric family over `A`: max, mean, and the per-level statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub max: f64,
    pub mean: f64,
    pub per_level: Vec<LevelValue>,
}

impl Aggregate {
    fn from_levels(per_level: Vec<LevelValue>) -> Self {
        let max = per_level.iter().fold(0.0f64, |m, v| m.max(v.value));
        let mean = per_level.iter().map(|v| v.value).sum::<f64>() / per_level.len() as f64;
        // Rounding in the sum must not break mean <= max.
        Self {
            max,
            mean: mean.min(max),
            per_level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    KsMax,
    KsMean,
    WlMax,
    WlMean,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::KsMax, Metric::KsMean, Metric::WlMax, Metric::WlMean];

    pub fn name(self) -> &'static str {
        match self {
            Metric::KsMax => "ks_max",
            Metric::KsMean => "ks_mean",
            Metric::WlMax => "wl_max",
            Metric::WlMean => "wl_mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub alpha: f64,
    pub ks: f64,
    pub wl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub region: Region,
    pub ks_max: f64,
    pub ks_mean: f64,
    pub wl_max: f64,
    pub wl_mean: f64,
    pub per_level: Vec<LevelMetrics>,
}

impl DivergenceReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::KsMax => self.ks_max,
            Metric::KsMean => self.ks_mean,
            Metric::WlMax => self.wl_max,
            Metric::WlMean => self.wl_mean,
        }
    }

    pub fn metrics(&self) -> [f64; 4] {
        Metric::ALL.map(|m| self.get(m))
    }
}

/// `d(x) = x − ln x − 1`.
pub fn d_divergence(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return invalid(format!("divergence argument must be positive and finite, got {x}"));
    }
    Ok(d_unchecked(x))
}

/// `d` extended by its limit `+∞` at zero.
#[inline]
fn d_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        f64::INFINITY
    } else {
        (x - x.ln() - 1.0).max(0.0)
    }
}

fn require(m: &QfaMatrix, state: MatrixState, what: &str) -> Result<()> {
    if m.state() != state {
        return Err(Error::Contract(format!(
            "{what} must be {state:?}, got {:?}",
            m.state()
        )));
    }
    Ok(())
}

fn require_aligned(a: &QfaMatrix, b: &QfaMatrix) -> Result<()> {
    if !a.same_grid(b) {
        return Err(Error::Contract(
            "observed and target matrices are on different grids".into(),
        ));
    }
    Ok(())
}

pub fn ks_metrics(observed_cum: &QfaMatrix, target_cum: &QfaMatrix, region: &Region) -> Result<Aggregate> {
    require(observed_cum, MatrixState::Cumulative, "observed matrix")?;
    require(target_cum, MatrixState::Cumulative, "target matrix")?;
    require_aligned(observed_cum, target_cum)?;
    let r = region.resolve(observed_cum.grid(), observed_cum.qgrid())?;
    Ok(ks_resolved(observed_cum, target_cum, &r))
}

fn ks_resolved(obs: &QfaMatrix, target: &QfaMatrix, r: &ResolvedRegion) -> Aggregate {
    let root = (r.freq_idx.len() as f64).sqrt();
    let per_level = r
        .level_idx
        .iter()
        .zip(&r.weights)
        .map(|(&l, &w)| {
            let gap = r
                .freq_idx
                .iter()
                .map(|&k| (obs.get(k, l) - target.get(k, l)).abs())
                .fold(0.0f64, f64::max);
            LevelValue {
                alpha: obs.qgrid().levels()[l],
                value: w * root * gap,
            }
        })
        .collect();
    Aggregate::from_levels(per_level)
}

/// Zero observed ordinates contribute `d(0⁺) = +∞`.
pub fn wl_metrics(observed_norm: &QfaMatrix, target_norm: &QfaMatrix, region: &Region) -> Result<Aggregate> {
    require(observed_norm, MatrixState::Normalized, "observed matrix")?;
    require(target_norm, MatrixState::Normalized, "target matrix")?;
    require_aligned(observed_norm, target_norm)?;
    let r = region.resolve(observed_norm.grid(), observed_norm.qgrid())?;
    wl_resolved(observed_norm, target_norm, &r)
}

fn wl_resolved(obs: &QfaMatrix, target: &QfaMatrix, r: &ResolvedRegion) -> Result<Aggregate> {
    let inv_root = 1.0 / (r.freq_idx.len() as f64).sqrt();
    let mut per_level = Vec::with_capacity(r.level_idx.len());
    for (&l, &w) in r.level_idx.iter().zip(&r.weights) {
        let alpha = obs.qgrid().levels()[l];
        let mut sum = 0.0;
        for &k in &r.freq_idx {
            let t = target.get(k, l);
            if !(t > 0.0) {
                return Err(Error::DegenerateTarget {
                    alpha,
                    freq_index: k + 1,
                });
            }
            sum += d_unchecked(obs.get(k, l) / t);
        }
        per_level.push(LevelValue {
            alpha,
            value: w * inv_root * sum,
        });
    }
    Ok(Aggregate::from_levels(per_level))
}

/// A target in both forms, with the region resolved once for repeated use.
#[derive(Debug, Clone)]
pub struct Target {
    pub normalized: QfaMatrix,
    pub cumulative: QfaMatrix,
}

impl Target {
    pub fn from_normalized(normalized: QfaMatrix) -> Result<Self> {
        let cumulative = cumulate(&normalized)?;
        Ok(Self {
            normalized,
            cumulative,
        })
    }
}

/// All four metrics of a normalized observed matrix against a target.
pub fn divergence_report(observed_norm: &QfaMatrix, target: &Target, region: &Region) -> Result<DivergenceReport> {
    require(observed_norm, MatrixState::Normalized, "observed matrix")?;
    require_aligned(observed_norm, &target.normalized)?;
    let r = region.resolve(observed_norm.grid(), observed_norm.qgrid())?;
    let observed_cum = cumulate(observed_norm)?;
    let ks = ks_resolved(&observed_cum, &target.cumulative, &r);
    let wl = wl_resolved(observed_norm, &target.normalized, &r)?;
    Ok(DivergenceReport {
        region: region.clone(),
        ks_max: ks.max,
        ks_mean: ks.mean,
        wl_max: wl.max,
        wl_mean: wl.mean,
        per_level: ks
            .per_level
            .iter()
            .zip(&wl.per_level)
            .map(|(a, b)| LevelMetrics {
                alpha: a.alpha,
                ks: a.value,
                wl: b.value,
            })
            .collect(),
    })
}

/// Flat `1/K` spectrum and its `k/K` staircase, identical across levels.
pub fn white_noise_target(grid: &FrequencyGrid, qgrid: &QuantileGrid) -> Result<Target> {
    let k_count = grid.len();
    let l_count = qgrid.len();
    let flat = vec![1.0 / k_count as f64; k_count * l_count];
    let stairs = (1..=k_count)
        .flat_map(|k| std::iter::repeat_n(k as f64 / k_count as f64, l_count))
        .collect();
    Ok(Target {
        normalized: QfaMatrix::from_values(
            grid.clone(),
            qgrid.clone(),
            flat,
            MatrixState::Normalized,
            PeriodogramKind::External,
        )?,
        cumulative: QfaMatrix::from_values(
            grid.clone(),
            qgrid.clone(),
            stairs,
            MatrixState::Cumulative,
            PeriodogramKind::External,
        )?,
    })
}
