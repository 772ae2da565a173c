//! Portmanteau baselines on squared residuals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::{autocorrelation, fold, FoldKind, TimeSeries};
use crate::special::chi_square_sf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalKind {
    LjungBox,
    LmArch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalTestResult {
    pub kind: ClassicalKind,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// `m(m+2) Σ_{τ≤L} ρ̂_τ² / (m − τ)` on the series after dropping `drop_head`
/// values, squared first when `fold_first` is set.
pub fn ljung_box(series: &TimeSeries, num_lags: usize, fold_first: bool, drop_head: usize) -> Result<ClassicalTestResult> {
    if num_lags == 0 {
        return invalid("Ljung-Box needs at least one lag");
    }
    let x = series.drop_head(drop_head)?;
    let x = if fold_first { fold(&x, FoldKind::Square) } else { x };
    let m = x.len();
    if num_lags >= m {
        return invalid(format!("{num_lags} lags need more than {m} observations"));
    }
    let acf = autocorrelation(&x, num_lags)?;
    let mf = m as f64;
    let statistic = mf
        * (mf + 2.0)
        * (1..=num_lags)
            .map(|tau| acf[tau] * acf[tau] / (mf - tau as f64))
            .sum::<f64>();
    Ok(ClassicalTestResult {
        kind: ClassicalKind::LjungBox,
        statistic,
        dof: num_lags,
        p_value: chi_square_sf(statistic, num_lags),
    })
}

/// Engle's test: regress `x_t²` on an intercept and `order` of its own lags.
/// The statistic is `T·R²` with `T = m − order` regression rows.
pub fn lm_arch(series: &TimeSeries, order: usize, drop_head: usize) -> Result<ClassicalTestResult> {
    if order == 0 {
        return invalid("LM ARCH test needs order >= 1");
    }
    let e = fold(&series.drop_head(drop_head)?, FoldKind::Square);
    let e = e.values();
    let m = e.len();
    if m <= 2 * order + 1 {
        return invalid(format!("order {order} needs more than {} observations, got {m}", 2 * order + 1));
    }
    let rows = m - order;
    let x = DMatrix::from_fn(rows, order + 1, |i, j| if j == 0 { 1.0 } else { e[order + i - j] });
    let y = DVector::from_iterator(rows, e[order..].iter().copied());

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * rows as f64;
    if !(smax > 0.0) || svd.rank(tol) < order + 1 {
        return Err(Error::DegenerateDesign(
            "lagged squared series are collinear (constant series?)".into(),
        ));
    }
    let beta = svd
        .solve(&y, tol)
        .map_err(|msg| Error::Numerical(msg.to_string()))?;
    let resid = &y - &x * beta;
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let ssr = resid.norm_squared();
    let r2 = (1.0 - ssr / sst).clamp(0.0, 1.0);
    let statistic = rows as f64 * r2;
    Ok(ClassicalTestResult {
        kind: ClassicalKind::LmArch,
        statistic,
        dof: order,
        p_value: chi_square_sf(statistic, order),
    })
}
