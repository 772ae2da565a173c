//! Run configuration: flags override the JSON config file, which overrides
//! built-in defaults.

use std::path::Path;

use serde::Deserialize;

use qfa_core::garch::Family;
use qfa_core::metrics::{LevelBounds, Region, RegionPreset};
use qfa_core::montecarlo::PValueRule;
use qfa_core::qfa::{PeriodogramKind, QuantileGrid};
use qfa_core::{Error, Result};

/// Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub alphas: Option<String>,
    pub kind: Option<PeriodogramKind>,
    pub family: Option<Family>,
    pub region: Option<RegionPreset>,
    pub levels: Option<String>,
    pub band: Option<String>,
    pub replicates: Option<usize>,
    pub realizations: Option<usize>,
    pub drop_head: Option<usize>,
    pub p_rule: Option<PValueRule>,
    pub n: Option<usize>,
    pub burn_in: Option<usize>,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub centers: Option<String>,
    pub k: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `lo:hi:step` or a comma-separated list of values.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidInput(format!("'{s}' is not a number in '{text}'")))
    };
    if text.contains(':') {
        let parts: Vec<f64> = text.split(':').map(parse).collect::<Result<_>>()?;
        let [lo, hi, step] = parts[..] else {
            return Err(Error::InvalidInput(format!("range '{text}' must be lo:hi:step")));
        };
        if !(step > 0.0 && lo <= hi) {
            return Err(Error::InvalidInput(format!("range '{text}' needs lo <= hi and step > 0")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| round12(lo + i as f64 * step)).collect())
    } else {
        text.split(',').map(parse).collect()
    }
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

pub fn parse_qgrid(text: &str) -> Result<QuantileGrid> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() == 3 {
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("'{s}' is not a number in '{text}'")))
            };
            return QuantileGrid::from_range(num(parts[0])?, num(parts[1])?, num(parts[2])?);
        }
    }
    QuantileGrid::new(parse_values(text)?)
}

/// `lo:hi`, both ends closed.
fn parse_pair(text: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::InvalidInput(format!("{what} '{text}' must be lo:hi"));
    let [lo, hi] = parts[..] else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo <= hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

pub fn build_region(preset: RegionPreset, levels: Option<&str>, band: Option<&str>) -> Result<Region> {
    let mut region = Region::preset(preset);
    if let Some(text) = levels {
        let (lo, hi) = parse_pair(text, "level bounds")?;
        region.levels = LevelBounds {
            lo,
            lo_closed: true,
            hi,
            hi_closed: true,
        };
    }
    if let Some(text) = band {
        let (lo, hi) = parse_pair(text, "frequency band")?;
        region = region.with_freqs(qfa_core::metrics::FreqSelection::Band { lo, hi });
    }
    Ok(region)
}
