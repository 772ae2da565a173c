//! White noise mixed with a narrowband Gaussian bump, and the sensitivity
//! of the two metric families to where the bump sits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::{ks_resolved, white_noise_target, wl_resolved, Region};
use crate::error::{invalid, Error, Result};
use crate::qfa::{cumulate, MatrixState, PeriodogramKind, QfaMatrix, QuantileGrid};
use crate::series::FrequencyGrid;

/// `(1 − ρ)/K + ρ·δ(ω_k; ω_c, σ)`, with `δ` a normal density in angular
/// frequency rescaled to sum to one over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub rho: f64,
    pub omega_c: f64,
    pub sigma: f64,
}

impl MixtureSpec {
    pub fn new(rho: f64, omega_c: f64, sigma: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return invalid(format!("mixing weight must lie in (0, 1), got {rho}"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("bump spread must be positive, got {sigma}"));
        }
        if !omega_c.is_finite() {
            return invalid("bump center must be finite");
        }
        Ok(Self {
            rho,
            omega_c,
            sigma,
        })
    }
}

pub fn mixture_periodogram(spec: &MixtureSpec, grid: &FrequencyGrid) -> Result<Vec<f64>> {
    let spec = MixtureSpec::new(spec.rho, spec.omega_c, spec.sigma)?;
    let omegas = grid.omegas();
    let (first, last) = (omegas[0], omegas[omegas.len() - 1]);
    if spec.omega_c < first - 1e-12 || spec.omega_c > last + 1e-12 {
        return invalid(format!(
            "bump center {} lies outside the grid span [{first}, {last}]",
            spec.omega_c
        ));
    }
    // The density's constant cancels in the rescaling.
    let bump: Vec<f64> = omegas
        .iter()
        .map(|w| {
            let z = (w - spec.omega_c) / spec.sigma;
            (-0.5 * z * z).exp()
        })
        .collect();
    let mass: f64 = bump.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateBump(format!(
            "bump at {} with spread {} has no mass on the grid",
            spec.omega_c, spec.sigma
        )));
    }
    let floor = (1.0 - spec.rho) / omegas.len() as f64;
    Ok(bump.iter().map(|b| floor + spec.rho * b / mass).collect())
}

/// Metrics of the mixture against white noise, per center, each divided by
/// its own mean across centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    /// Centers in cycles per sample.
    pub center_freqs: Vec<f64>,
    pub ks: Vec<f64>,
    pub wl: Vec<f64>,
    pub ks_rescaled: Vec<f64>,
    pub wl_rescaled: Vec<f64>,
}

impl SensitivityProfile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "center_freq,ks_rescaled,wl_rescaled")?;
        for i in 0..self.center_freqs.len() {
            writeln!(
                out,
                "{},{},{}",
                self.center_freqs[i], self.ks_rescaled[i], self.wl_rescaled[i]
            )?;
        }
        Ok(())
    }
}

/// `centers` are angular frequencies. A single level, `w = 1`, and the full
/// grid are used throughout.
pub fn sensitivity_profile(
    rho: f64,
    sigma: f64,
    grid: &FrequencyGrid,
    centers: &[f64],
) -> Result<SensitivityProfile> {
    if centers.is_empty() {
        return invalid("sensitivity profile needs at least one center");
    }
    let qgrid = QuantileGrid::new(vec![0.5])?;
    let target = white_noise_target(grid, &qgrid)?;
    let region = Region::full().resolve(grid, &qgrid)?;

    let pairs: Vec<Result<(f64, f64)>> = centers
        .par_iter()
        .map(|&omega_c| {
            let column = mixture_periodogram(&MixtureSpec::new(rho, omega_c, sigma)?, grid)?;
            let observed = QfaMatrix::from_values(
                grid.clone(),
                qgrid.clone(),
                column,
                MatrixState::Normalized,
                PeriodogramKind::External,
            )?;
            let ks = ks_resolved(&cumulate(&observed)?, &target.cumulative, &region);
            let wl = wl_resolved(&observed, &target.normalized, &region)?;
            Ok((ks.max, wl.max))
        })
        .collect();
    let (ks, wl): (Vec<f64>, Vec<f64>) = pairs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    let rescale = |v: &[f64]| -> Result<Vec<f64>> {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::Numerical("metric profile has zero mean".into()));
        }
        Ok(v.iter().map(|x| x / mean).collect())
    };
    Ok(SensitivityProfile {
        center_freqs: centers.iter().map(|w| w / (2.0 * std::f64::consts::PI)).collect(),
        ks_rescaled: rescale(&ks)?,
        wl_rescaled: rescale(&wl)?,
        ks,
        wl,
    })
}
