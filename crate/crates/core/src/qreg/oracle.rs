//! Brute-force certification oracle for the trigonometric regression.
//!
//! Some optimal check-loss fit interpolates three observations with linearly
//! independent regressor rows, so scoring every such interpolating triple
//! finds the optimum. Constant fits through one observation and
//! single-harmonic fits through two are scored too; they are feasible and
//! cover rank-deficient designs. Cost is O(n⁴); only small `n` is accepted.

use super::{check_alpha, rho, TrigQuantileFit};
use crate::error::{invalid, Result};
use crate::qreg::simplex::{det3, invert3};
use crate::series::TimeSeries;

pub const ORACLE_MAX_LEN: usize = 64;

pub fn oracle_trig_quantile(series: &TimeSeries, omega: f64, alpha: f64) -> Result<TrigQuantileFit> {
    check_alpha(alpha)?;
    let y = series.values();
    let n = y.len();
    if n > ORACLE_MAX_LEN {
        return invalid(format!(
            "oracle enumeration is limited to n <= {ORACLE_MAX_LEN}, got {n}"
        ));
    }
    if !(omega > 0.0 && omega < std::f64::consts::PI) {
        return invalid(format!("frequency must lie in (0, π), got {omega}"));
    }
    let rows: Vec<[f64; 3]> = (1..=n)
        .map(|t| {
            let p = omega * t as f64;
            [p.cos(), p.sin(), 1.0]
        })
        .collect();
    let score = |c: &[f64; 3]| -> f64 {
        rows.iter()
            .zip(y)
            .map(|(x, &v)| rho(v - c[0] * x[0] - c[1] * x[1] - c[2] * x[2], alpha))
            .sum()
    };

    let mut best = ([0.0, 0.0, y[0]], f64::INFINITY);
    let mut consider = |c: [f64; 3]| {
        let s = score(&c);
        if s < best.1 {
            best = (c, s);
        }
    };

    for &v in y {
        consider([0.0, 0.0, v]);
    }
    for i in 0..n {
        for j in i + 1..n {
            // λ + A cos through points i, j; then λ + B sin.
            for col in 0..2 {
                let d = rows[i][col] - rows[j][col];
                if d.abs() > 1e-12 {
                    let slope = (y[i] - y[j]) / d;
                    let mut c = [0.0, 0.0, y[i] - slope * rows[i][col]];
                    c[col] = slope;
                    consider(c);
                }
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = [rows[i], rows[j], rows[k]];
                if det3(&m).abs() < 1e-12 {
                    continue;
                }
                if let Some(inv) = invert3(&m) {
                    let rhs = [y[i], y[j], y[k]];
                    let c = std::array::from_fn(|r| {
                        inv[r][0] * rhs[0] + inv[r][1] * rhs[1] + inv[r][2] * rhs[2]
                    });
                    consider(c);
                }
            }
        }
    }

    let (c, objective) = best;
    Ok(TrigQuantileFit {
        omega,
        alpha,
        cos_coef: c[0],
        sin_coef: c[1],
        intercept: c[2],
        objective,
    })
}
