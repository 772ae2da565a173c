//! Model-implied quantile spectra and parametric-bootstrap tests.
//!
//! Every replicate draws from its own substream `(seed, tag, index)`, so
//! results are bit-identical for any thread count. Ensemble sums are
//! accumulated sequentially in replicate order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::garch::{calibrate_innovations, simulate_with_rng, FitResult, GarchSpec, SimulateOptions, RESIDUAL_BURN};
use crate::metrics::{divergence_report, white_noise_target, DivergenceReport, Metric, Region, Target};
use crate::qfa::{normalize, quantile_periodogram, MatrixState, PeriodogramKind, QfaMatrix, QuantileGrid};
use crate::rng::SeedStream;
use crate::series::TimeSeries;

/// Residual series shorter than this get a warning in the report.
pub const RECOMMENDED_MIN_LEN: usize = 250;

/// Replicates evaluated concurrently before folding into the running sums.
const BLOCK: usize = 64;

const EXPECTED_TAG: &str = "expected";
const NULL_TAG: &str = "null";

/// Normalized quantile periodogram of a series.
pub fn normalized_qfa(series: &TimeSeries, qgrid: &QuantileGrid, kind: PeriodogramKind) -> Result<QfaMatrix> {
    normalize(&quantile_periodogram(series, qgrid, kind)?)
}

/// All four metrics of `series` against `target`.
pub fn evaluate_series(
    series: &TimeSeries,
    target: &Target,
    region: &Region,
    kind: PeriodogramKind,
) -> Result<DivergenceReport> {
    let observed = normalized_qfa(series, target.normalized.qgrid(), kind)?;
    divergence_report(&observed, target, region)
}

/// Series for replicate `index` of `stream`'s `tag` subtree.
pub fn replicate_series(
    spec: &GarchSpec,
    n: usize,
    stream: SeedStream,
    tag: &str,
    index: usize,
    sim: SimulateOptions,
) -> Result<TimeSeries> {
    let mut rng = stream.child(tag, index as u64).rng();
    Ok(simulate_with_rng(spec, n, &mut rng, sim)?.series)
}

/// Maps `f` over `0..count` in parallel blocks, handing results to `fold`
/// in index order.
fn ordered_blocks<T, F, G>(count: usize, f: F, mut fold: G) -> Result<()>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
    G: FnMut(usize, T) -> Result<()>,
{
    for start in (0..count).step_by(BLOCK) {
        let end = (start + BLOCK).min(count);
        let results: Vec<Result<T>> = (start..end).into_par_iter().map(&f).collect();
        for (i, r) in results.into_iter().enumerate() {
            let index = start + i;
            let value = r.map_err(|e| Error::Replicate {
                index,
                source: Box::new(e),
            })?;
            fold(index, value)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExpectedSpectrum {
    /// Ensemble-average normalized matrix, renormalized, and its cumulation.
    pub target: Target,
    /// Standard error of each averaged entry before renormalization.
    pub std_errors: Vec<f64>,
    pub n_realizations: usize,
    pub spec: GarchSpec,
    pub series_length: usize,
    pub seed: u64,
}

impl ExpectedSpectrum {
    pub fn normalized(&self) -> &QfaMatrix {
        &self.target.normalized
    }

    pub fn cumulative(&self) -> &QfaMatrix {
        &self.target.cumulative
    }

    pub fn std_error(&self, k: usize, l: usize) -> f64 {
        self.std_errors[k * self.target.normalized.levels() + l]
    }
}

pub fn expected_spectrum(
    spec: &GarchSpec,
    n: usize,
    qgrid: &QuantileGrid,
    n_realizations: usize,
    seed: u64,
    kind: PeriodogramKind,
    sim: SimulateOptions,
) -> Result<ExpectedSpectrum> {
    if n_realizations < 2 {
        return invalid(format!("expected spectrum needs at least 2 realizations, got {n_realizations}"));
    }
    if !sim.allow_nonstationary && !spec.is_stationary() {
        return Err(Error::NonStationary {
            persistence: spec.persistence(),
        });
    }
    let stream = SeedStream::new(seed);
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut template: Option<QfaMatrix> = None;
    ordered_blocks(
        n_realizations,
        |r| normalized_qfa(&replicate_series(spec, n, stream, EXPECTED_TAG, r, sim)?, qgrid, kind),
        |r, m| {
            // Welford update, in replicate order.
            if template.is_none() {
                mean = vec![0.0; m.values().len()];
                m2 = vec![0.0; m.values().len()];
                template = Some(m.clone());
            }
            let count = (r + 1) as f64;
            for ((mu, s), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(m.values()) {
                let delta = v - *mu;
                *mu += delta / count;
                *s += delta * (v - *mu);
            }
            Ok(())
        },
    )?;
    let template = template.ok_or_else(|| Error::Numerical("no realizations evaluated".into()))?;

    let r = n_realizations as f64;
    let std_errors = m2.iter().map(|s| (s / (r - 1.0) / r).sqrt()).collect();
    let (k_count, l_count) = (template.freqs(), template.levels());
    for l in 0..l_count {
        let sum: f64 = (0..k_count).map(|k| mean[k * l_count + l]).sum();
        if !(sum > 0.0) {
            return Err(Error::DegenerateColumn {
                alpha: qgrid.levels()[l],
                sum,
            });
        }
        for k in 0..k_count {
            mean[k * l_count + l] /= sum;
        }
    }
    let normalized = QfaMatrix::from_values(
        template.grid().clone(),
        qgrid.clone(),
        mean,
        MatrixState::Normalized,
        kind,
    )?;
    Ok(ExpectedSpectrum {
        target: Target::from_normalized(normalized)?,
        std_errors,
        n_realizations,
        spec: spec.clone(),
        series_length: n,
        seed,
    })
}

/// `B` rows of `[ks_max, ks_mean, wl_max, wl_mean]` for series simulated
/// from `spec` against a fixed `target`. Replicate `r` draws from
/// `SeedStream::new(seed).child("null", r)`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_null(
    spec: &GarchSpec,
    n: usize,
    target: &Target,
    region: &Region,
    replicates: usize,
    seed: u64,
    kind: PeriodogramKind,
    sim: SimulateOptions,
) -> Result<Vec<[f64; 4]>> {
    if replicates == 0 {
        return invalid("bootstrap needs at least one replicate");
    }
    if target.normalized.grid().n() != n {
        return Err(Error::Contract(format!(
            "target is for series of length {}, null series have length {n}",
            target.normalized.grid().n()
        )));
    }
    let stream = SeedStream::new(seed);
    let mut rows = Vec::with_capacity(replicates);
    ordered_blocks(
        replicates,
        |r| {
            let x = replicate_series(spec, n, stream, NULL_TAG, r, sim)?;
            Ok(evaluate_series(&x, target, region, kind)?.metrics())
        },
        |_, row| {
            rows.push(row);
            Ok(())
        },
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Residual,
    Direct,
    Discriminant,
}

/// How exceedance counts become p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueRule {
    /// `#{null ≥ observed} / B`.
    #[default]
    Exceedance,
    /// `(#{null ≥ observed} + 1) / (B + 1)`.
    PlusOne,
}

pub fn p_value(observed: f64, null: impl IntoIterator<Item = f64>, rule: PValueRule) -> f64 {
    let (mut count, mut total) = (0usize, 0usize);
    for v in null {
        total += 1;
        if v >= observed {
            count += 1;
        }
    }
    match rule {
        PValueRule::Exceedance => count as f64 / total as f64,
        PValueRule::PlusOne => (count + 1) as f64 / (total + 1) as f64,
    }
}

/// One-sided 95% upper confidence bound `p + 1.64·√(p(1 − p)/B)`.
pub fn upper_bound(p: f64, replicates: usize) -> f64 {
    p + 1.64 * (p * (1.0 - p) / replicates as f64).sqrt()
}

/// A metric is flagged when its upper bound does not exceed 0.05.
pub fn is_significant(p: f64, replicates: usize) -> bool {
    upper_bound(p, replicates) <= 0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub q50: [f64; 4],
    pub q90: [f64; 4],
    pub q95: [f64; 4],
    pub q99: [f64; 4],
}

impl NullSummary {
    /// Nearest-rank quantiles per metric.
    fn of(rows: &[[f64; 4]]) -> Self {
        let mut cols: [Vec<f64>; 4] = Default::default();
        for row in rows {
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(*v);
            }
        }
        for c in &mut cols {
            c.sort_by(f64::total_cmp);
        }
        let q = |p: f64| {
            std::array::from_fn(|i| {
                let c = &cols[i];
                let rank = ((p * c.len() as f64).ceil() as usize).clamp(1, c.len());
                c[rank - 1]
            })
        };
        Self {
            q50: q(0.5),
            q90: q(0.9),
            q95: q(0.95),
            q99: q(0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub test_kind: TestKind,
    pub metric_names: [String; 4],
    pub observed: [f64; 4],
    pub p_values: [f64; 4],
    pub upper_bounds: [f64; 4],
    pub significant: [bool; 4],
    pub replicates: usize,
    pub rule: PValueRule,
    pub seed: u64,
    pub region: Region,
    pub series_length: usize,
    /// Generator of the null replicates.
    pub null_spec: GarchSpec,
    pub observed_detail: DivergenceReport,
    pub null_summary: NullSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_samples: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BootstrapReport {
    fn assemble(
        test_kind: TestKind,
        observed_detail: DivergenceReport,
        null: Vec<[f64; 4]>,
        null_spec: GarchSpec,
        series_length: usize,
        opts: &BootstrapOptions,
    ) -> Self {
        let observed = observed_detail.metrics();
        let p_values: [f64; 4] =
            std::array::from_fn(|i| p_value(observed[i], null.iter().map(|row| row[i]), opts.rule));
        let b = null.len();
        Self {
            test_kind,
            metric_names: Metric::ALL.map(|m| m.name().to_string()),
            observed,
            upper_bounds: p_values.map(|p| upper_bound(p, b)),
            significant: p_values.map(|p| is_significant(p, b)),
            p_values,
            replicates: b,
            rule: opts.rule,
            seed: opts.seed,
            region: observed_detail.region.clone(),
            series_length,
            null_spec,
            null_summary: NullSummary::of(&null),
            null_samples: Some(null),
            observed_detail,
            warnings: Vec::new(),
        }
    }

    pub fn p_value(&self, metric: Metric) -> f64 {
        self.p_values[metric_index(metric)]
    }

    /// Drops the full null matrix, keeping the summary quantiles.
    pub fn elide_null(mut self) -> Self {
        self.null_samples = None;
        self
    }
}

fn metric_index(metric: Metric) -> usize {
    Metric::ALL.iter().position(|&m| m == metric).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    /// Realizations behind a model-implied target.
    pub realizations: usize,
    pub seed: u64,
    pub rule: PValueRule,
    /// Leading residuals excluded by the residual test.
    pub drop_head: usize,
    pub kind: PeriodogramKind,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 1000,
            realizations: 1000,
            seed: 0,
            rule: PValueRule::Exceedance,
            drop_head: RESIDUAL_BURN,
            kind: PeriodogramKind::Second,
        }
    }
}

/// White-noise check of model residuals against a Gaussian null calibrated
/// to their mean and standard deviation.
pub fn residual_test(
    residuals: &TimeSeries,
    qgrid: &QuantileGrid,
    region: &Region,
    opts: &BootstrapOptions,
) -> Result<BootstrapReport> {
    let resid = residuals.drop_head(opts.drop_head)?;
    if resid.is_constant() {
        return Err(Error::DegenerateSeries("residuals are constant".into()));
    }
    let n = resid.len();
    let target = white_noise_target(&resid.frequency_grid()?, qgrid)?;
    let observed = evaluate_series(&resid, &target, region, opts.kind)?;
    let law = calibrate_innovations(&resid)?;
    let null_spec = GarchSpec::iid(0.0, 1.0)?.with_innovation(law)?;
    let null = bootstrap_null(
        &null_spec,
        n,
        &target,
        region,
        opts.replicates,
        opts.seed,
        opts.kind,
        SimulateOptions::default(),
    )?;
    let mut report = BootstrapReport::assemble(TestKind::Residual, observed, null, null_spec, n, opts);
    if n < RECOMMENDED_MIN_LEN {
        report
            .warnings
            .push(format!("{n} residuals is below the recommended {RECOMMENDED_MIN_LEN}"));
    }
    Ok(report)
}

/// Metrics of `series` against the spectrum implied by `fitted`, with the
/// null simulated from the same calibrated model.
pub fn direct_test(
    series: &TimeSeries,
    fitted: &FitResult,
    qgrid: &QuantileGrid,
    region: &Region,
    opts: &BootstrapOptions,
) -> Result<BootstrapReport> {
    model_test(TestKind::Direct, series, fitted, qgrid, region, opts)
}

/// [`direct_test`] with the model fitted to a different series.
pub fn discriminant_test(
    series_a: &TimeSeries,
    model_b: &FitResult,
    qgrid: &QuantileGrid,
    region: &Region,
    opts: &BootstrapOptions,
) -> Result<BootstrapReport> {
    model_test(TestKind::Discriminant, series_a, model_b, qgrid, region, opts)
}

fn model_test(
    test_kind: TestKind,
    series: &TimeSeries,
    fitted: &FitResult,
    qgrid: &QuantileGrid,
    region: &Region,
    opts: &BootstrapOptions,
) -> Result<BootstrapReport> {
    if !fitted.spec.is_stationary() {
        return Err(Error::NonStationary {
            persistence: fitted.spec.persistence(),
        });
    }
    // Residual scale slightly above one can lift the calibrated persistence
    // past one; the fitted spec is the stationarity authority.
    let model = fitted.calibrated_spec()?;
    let sim = SimulateOptions {
        allow_nonstationary: true,
        ..Default::default()
    };
    let n = series.len();
    let expected = expected_spectrum(
        &model,
        n,
        qgrid,
        opts.realizations,
        expected_seed(opts.seed),
        opts.kind,
        sim,
    )?;
    let observed = evaluate_series(series, &expected.target, region, opts.kind)?;
    let null = bootstrap_null(
        &model,
        n,
        &expected.target,
        region,
        opts.replicates,
        opts.seed,
        opts.kind,
        sim,
    )?;
    Ok(BootstrapReport::assemble(test_kind, observed, null, model, n, opts))
}

/// Seed of the target's realizations, disjoint from the null replicates'.
pub fn expected_seed(seed: u64) -> u64 {
    SeedStream::new(seed).child(EXPECTED_TAG, u64::MAX).key()
}
