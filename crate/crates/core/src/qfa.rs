//! Quantile periodogram matrices over the Fourier × quantile-level grid.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qreg::simplex::TrigDesign;
use crate::qreg::{check_alpha, fit_levels, sample_quantile_sorted};
use crate::series::{normalized_power, FrequencyGrid, TimeSeries};

/// Strictly increasing quantile levels inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return invalid("quantile grid is empty");
        }
        for &a in &levels {
            check_alpha(a)?;
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("quantile levels must be strictly increasing");
        }
        Ok(Self { levels })
    }

    /// `lo, lo + step, …` up to `hi` inclusive. Levels are rounded to 12
    /// decimals so that e.g. 0.3 is exactly the literal 0.3.
    pub fn from_range(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi < 1.0 && step > 0.0) {
            return invalid(format!(
                "quantile range needs 0 < lo <= hi < 1 and step > 0, got {lo}:{hi}:{step}"
            ));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let levels = (0..count)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        Self::new(levels)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

impl Default for QuantileGrid {
    /// 0.05, 0.06, …, 0.95.
    fn default() -> Self {
        Self::from_range(0.05, 0.95, 0.01).expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for QuantileGrid {
    type Error = Error;
    fn try_from(levels: Vec<f64>) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<QuantileGrid> for Vec<f64> {
    fn from(g: QuantileGrid) -> Self {
        g.levels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodogramKind {
    /// `(n/4)(A² + B²)`.
    First,
    /// Check-loss reduction relative to the constant fit.
    #[default]
    Second,
    /// Supplied from outside (model targets, synthetic spectra).
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixState {
    Raw,
    Normalized,
    Cumulative,
}

/// A `K × L` matrix over (frequency, quantile level), stored row-major by
/// frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct QfaMatrix {
    grid: FrequencyGrid,
    qgrid: QuantileGrid,
    values: Vec<f64>,
    state: MatrixState,
    kind: PeriodogramKind,
}

const SUM_TOL: f64 = 1e-9;

impl QfaMatrix {
    /// Wraps externally produced values, checking the invariants of `state`.
    pub fn from_values(
        grid: FrequencyGrid,
        qgrid: QuantileGrid,
        values: Vec<f64>,
        state: MatrixState,
        kind: PeriodogramKind,
    ) -> Result<Self> {
        if values.len() != grid.len() * qgrid.len() {
            return invalid(format!(
                "matrix needs {} x {} values, got {}",
                grid.len(),
                qgrid.len(),
                values.len()
            ));
        }
        let m = Self {
            grid,
            qgrid,
            values,
            state,
            kind,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Contract(
                "matrix entries must be finite and nonnegative".into(),
            ));
        }
        for l in 0..self.levels() {
            let col = self.column(l);
            match self.state {
                MatrixState::Raw => {}
                MatrixState::Normalized => {
                    let s: f64 = col.iter().sum();
                    if (s - 1.0).abs() > SUM_TOL {
                        return Err(Error::Contract(format!(
                            "normalized column {l} sums to {s}"
                        )));
                    }
                }
                MatrixState::Cumulative => {
                    let last = col[col.len() - 1];
                    if col.windows(2).any(|w| w[1] < w[0]) || (last - 1.0).abs() > SUM_TOL {
                        return Err(Error::Contract(format!(
                            "cumulative column {l} must be nondecreasing and end at 1"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn qgrid(&self) -> &QuantileGrid {
        &self.qgrid
    }

    pub fn state(&self) -> MatrixState {
        self.state
    }

    pub fn kind(&self) -> PeriodogramKind {
        self.kind
    }

    /// Number of frequencies `K`.
    pub fn freqs(&self) -> usize {
        self.grid.len()
    }

    /// Number of quantile levels `L`.
    pub fn levels(&self) -> usize {
        self.qgrid.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry at frequency index `k` (0-based) and level index `l`.
    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.levels() + l]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.freqs()).map(|k| self.get(k, l)).collect()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let l = self.levels();
        &self.values[k * l..(k + 1) * l]
    }

    /// True when grids (series length, frequencies and levels) coincide.
    pub fn same_grid(&self, other: &QfaMatrix) -> bool {
        self.grid == other.grid && self.qgrid == other.qgrid
    }

    /// Rows with `ω/(2π) ≤ 1/4`, the customary slice for cumulative plots.
    pub fn lower_half(&self) -> LowerHalf<'_> {
        let rows = self.grid.cycles().iter().filter(|&&f| f <= 0.25).count();
        LowerHalf { matrix: self, rows }
    }

    /// CSV with header `freq,alpha,value`, frequency-major.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_long_csv(out, self, self.freqs())
    }

    pub fn to_json(&self) -> QfaMatrixJson {
        QfaMatrixJson {
            n: self.grid.n(),
            kind: self.kind,
            state: self.state,
            freqs: self.grid.cycles(),
            alphas: self.qgrid.levels().to_vec(),
            values: (0..self.freqs()).map(|k| self.row(k).to_vec()).collect(),
        }
    }
}

/// First rows of a matrix (see [`QfaMatrix::lower_half`]).
pub struct LowerHalf<'a> {
    matrix: &'a QfaMatrix,
    rows: usize,
}

impl LowerHalf<'_> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_long_csv(out, self.matrix, self.rows)
    }
}

fn write_long_csv<W: Write>(mut out: W, m: &QfaMatrix, rows: usize) -> Result<()> {
    writeln!(out, "freq,alpha,value")?;
    let cycles = m.grid.cycles();
    for (k, f) in cycles.iter().enumerate().take(rows) {
        for (l, a) in m.qgrid.levels().iter().enumerate() {
            writeln!(out, "{f},{a},{}", m.get(k, l))?;
        }
    }
    Ok(())
}

/// JSON layout of a matrix; `values` is row-major by frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QfaMatrixJson {
    pub n: usize,
    pub kind: PeriodogramKind,
    pub state: MatrixState,
    pub freqs: Vec<f64>,
    pub alphas: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TryFrom<QfaMatrixJson> for QfaMatrix {
    type Error = Error;

    fn try_from(j: QfaMatrixJson) -> Result<Self> {
        let grid = FrequencyGrid::new(j.n)?;
        if j.freqs.len() != grid.len() {
            return invalid("frequency list does not match n");
        }
        if j.values.iter().any(|r| r.len() != j.alphas.len()) {
            return invalid("ragged matrix rows");
        }
        QfaMatrix::from_values(
            grid,
            QuantileGrid::new(j.alphas)?,
            j.values.into_iter().flatten().collect(),
            j.state,
            j.kind,
        )
    }
}

/// Raw quantile periodogram of the first or second kind.
///
/// Frequencies are processed in parallel; each frequency solves all levels
/// with one warm-started solver, and rows are merged by index.
pub fn quantile_periodogram(
    series: &TimeSeries,
    qgrid: &QuantileGrid,
    kind: PeriodogramKind,
) -> Result<QfaMatrix> {
    series.require_spectral()?;
    if kind == PeriodogramKind::External {
        return invalid("only first- and second-kind periodograms can be computed from data");
    }
    let n = series.len();
    let grid = series.frequency_grid()?;
    let x = series.values();
    let alphas = qgrid.levels();

    let constant_loss: Vec<f64> = {
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        alphas
            .iter()
            .map(|&a| sample_quantile_sorted(x, &sorted, a).objective)
            .collect()
    };

    let rows: Vec<Result<Vec<f64>>> = (1..=grid.len())
        .into_par_iter()
        .map(|k| {
            let design = TrigDesign::fourier(n, k);
            let fits = fit_levels(x, &design, alphas).map_err(|(l, e)| Error::Cell {
                k,
                alpha: alphas[l],
                source: Box::new(e),
            })?;
            fits.iter()
                .enumerate()
                .map(|(l, f)| match kind {
                    PeriodogramKind::First => {
                        Ok(n as f64 / 4.0 * (f.cos_coef * f.cos_coef + f.sin_coef * f.sin_coef))
                    }
                    _ => second_kind_entry(constant_loss[l], f.objective).map_err(|e| {
                        Error::Cell {
                            k,
                            alpha: alphas[l],
                            source: Box::new(e),
                        }
                    }),
                })
                .collect()
        })
        .collect();

    let mut values = Vec::with_capacity(grid.len() * qgrid.len());
    for row in rows {
        values.extend(row?);
    }
    Ok(QfaMatrix {
        grid,
        qgrid: qgrid.clone(),
        values,
        state: MatrixState::Raw,
        kind,
    })
}

/// Negative slack within 1e−12 (relative to the constant-fit loss) is
/// rounding and clamps to zero; anything larger means a suboptimal fit.
fn second_kind_entry(constant_loss: f64, trig_loss: f64) -> Result<f64> {
    let d = constant_loss - trig_loss;
    if d >= 0.0 {
        Ok(d)
    } else if d >= -1e-12 * constant_loss.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "trigonometric fit loss {trig_loss} exceeds constant fit loss {constant_loss}"
        )))
    }
}

/// Divides each column by its sum.
pub fn normalize(m: &QfaMatrix) -> Result<QfaMatrix> {
    if m.state != MatrixState::Raw {
        return Err(Error::Contract(format!(
            "normalize expects a raw matrix, got {:?}",
            m.state
        )));
    }
    let sums: Vec<f64> = (0..m.levels())
        .map(|l| (0..m.freqs()).map(|k| m.get(k, l)).sum())
        .collect();
    for (l, &s) in sums.iter().enumerate() {
        if !(s > 0.0) {
            return Err(Error::DegenerateColumn {
                alpha: m.qgrid.levels()[l],
                sum: s,
            });
        }
    }
    let l_count = m.levels();
    let values = m
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v / sums[i % l_count])
        .collect();
    Ok(QfaMatrix {
        values,
        state: MatrixState::Normalized,
        ..m.clone()
    })
}

/// Running sums down each column.
pub fn cumulate(m: &QfaMatrix) -> Result<QfaMatrix> {
    if m.state != MatrixState::Normalized {
        return Err(Error::Contract(format!(
            "cumulate expects a normalized matrix, got {:?}",
            m.state
        )));
    }
    let l_count = m.levels();
    let mut values = m.values.clone();
    for k in 1..m.freqs() {
        for l in 0..l_count {
            values[k * l_count + l] += values[(k - 1) * l_count + l];
        }
    }
    Ok(QfaMatrix {
        values,
        state: MatrixState::Cumulative,
        ..m.clone()
    })
}

/// Normalized ordinary periodogram of the sign series `sgn(X_t − λ_n(α))`,
/// where observations equal to the quantile count as +1.
pub fn level_crossing_periodogram(series: &TimeSeries, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    series.require_spectral()?;
    if series.is_constant() {
        return Err(Error::DegenerateSeries(
            "level-crossing periodogram of a constant series".into(),
        ));
    }
    let x = series.values();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lambda = sample_quantile_sorted(x, &sorted, alpha).lambda;
    let signs: Vec<f64> = x
        .iter()
        .map(|&v| if v >= lambda { 1.0 } else { -1.0 })
        .collect();
    normalized_power(&signs, series.frequency_grid()?.len()).ok_or_else(|| {
        Error::DegenerateSeries(format!(
            "sign series at alpha = {alpha} has no power on the Fourier grid"
        ))
    })
}
