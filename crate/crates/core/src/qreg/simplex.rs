//! Exact solver for the three-parameter trigonometric check-loss regression.
//!
//! The regression `min Σ ρ_α(y_t − λ − A cos ωt − B sin ωt)` is solved through
//! its bounded dual
//!
//! ```text
//! max Σ y_t a_t   s.t.   Σ x_t a_t = (1 − α) Σ x_t,   0 ≤ a_t ≤ 1,
//! ```
//!
//! with `x_t = (cos ωt, sin ωt, 1)`. A basis is a triple of observations the
//! fitted curve interpolates; the reduced costs of the non-basic columns are
//! exactly the regression residuals. The solver runs the dual simplex method
//! with a bound-flipping (long-step) ratio test, so every iteration moves to
//! a vertex with a check loss no larger than the previous one, and stops when
//! the basic dual variables are inside `[0, 1]`.
//!
//! The basis survives a change of `α` (only the right-hand side moves), which
//! makes solving an ascending list of levels cheap.

use std::f64::consts::PI;

use crate::error::Error;

/// Cosine / sine regressors for `t = 1 … n` at one frequency.
#[derive(Debug, Clone)]
pub(crate) struct TrigDesign {
    pub(crate) omega: f64,
    pub(crate) cos: Vec<f64>,
    pub(crate) sin: Vec<f64>,
}

impl TrigDesign {
    /// Fourier frequency `2πk/n`; angles are reduced exactly through `kt mod n`.
    pub(crate) fn fourier(n: usize, k: usize) -> Self {
        let (cos, sin) = (1..=n)
            .map(|t| {
                let phase = 2.0 * PI * ((k * t) % n) as f64 / n as f64;
                (phase.cos(), phase.sin())
            })
            .unzip();
        Self {
            omega: 2.0 * PI * k as f64 / n as f64,
            cos,
            sin,
        }
    }

    pub(crate) fn arbitrary(n: usize, omega: f64) -> Self {
        let (cos, sin) = (1..=n)
            .map(|t| {
                let phase = omega * t as f64;
                (phase.cos(), phase.sin())
            })
            .unzip();
        Self { omega, cos, sin }
    }

    pub(crate) fn len(&self) -> usize {
        self.cos.len()
    }

    #[inline]
    pub(crate) fn row(&self, t: usize) -> [f64; 3] {
        [self.cos[t], self.sin[t], 1.0]
    }

    /// True when the columns (cos, sin, 1) are numerically dependent.
    pub(crate) fn is_rank_deficient(&self) -> bool {
        let mut g = [[0.0f64; 3]; 3];
        for t in 0..self.len() {
            let x = self.row(t);
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] += x[i] * x[j];
                }
            }
        }
        let n = self.len() as f64;
        if (0..3).any(|i| g[i][i] <= 1e-10 * n) {
            return true;
        }
        det3(&g).abs() <= 1e-10 * g[0][0] * g[1][1] * g[2][2]
    }
}

/// Solution at one vertex: coefficients `(A, B, λ)` and the check loss.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Vertex {
    pub(crate) coef: [f64; 3],
    pub(crate) objective: f64,
}

#[derive(Debug)]
pub(crate) enum SolveError {
    Budget { iterations: usize, incumbent: Vertex },
    Numerical(String),
}

impl SolveError {
    pub(crate) fn into_error(self, omega: f64, alpha: f64, shift: f64) -> Error {
        match self {
            SolveError::Budget {
                iterations,
                incumbent,
            } => Error::SolverFailure {
                iterations,
                incumbent: Box::new(super::TrigQuantileFit::from_vertex(
                    omega, alpha, incumbent, shift,
                )),
            },
            SolveError::Numerical(msg) => Error::Numerical(msg),
        }
    }
}

/// Dual simplex state for one series and one frequency.
pub(crate) struct DualSimplex<'a> {
    y: &'a [f64],
    design: &'a TrigDesign,
    basis: [usize; 3],
    /// 1.0 for non-basic observations, 0.0 for basic ones.
    free: Vec<f64>,
    /// 1.0 when the dual variable sits at its upper bound.
    upper: Vec<f64>,
    resid: Vec<f64>,
    pivot: Vec<f64>,
    candidates: Vec<Breakpoint>,
    zero_tol: f64,
    budget: usize,
    started: bool,
}

const FEAS_TOL: f64 = 1e-9;
const LANES: usize = 4;

/// Ratio-test breakpoint.
#[derive(Debug, Clone, Copy)]
struct Breakpoint {
    ratio: f64,
    weight: f64,
    t: usize,
}

impl Breakpoint {
    /// Smallest ratio first, then the largest pivot weight, then the lowest
    /// index. Both floats are nonnegative, so their bit patterns order them.
    #[inline]
    fn key(&self) -> (u64, u64, usize) {
        (self.ratio.to_bits(), !self.weight.to_bits(), self.t)
    }
}

impl<'a> DualSimplex<'a> {
    /// `y` should be roughly centred (the callers subtract the median).
    pub(crate) fn new(y: &'a [f64], design: &'a TrigDesign) -> Self {
        let n = y.len();
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            y,
            design,
            basis: [0, 1, 2],
            free: vec![1.0; n],
            upper: vec![0.0; n],
            resid: vec![0.0; n],
            pivot: vec![0.0; n],
            candidates: vec![
                Breakpoint {
                    ratio: 0.0,
                    weight: 0.0,
                    t: 0,
                };
                n
            ],
            zero_tol: 1e-12 * scale.max(f64::MIN_POSITIVE),
            budget: 50 * n,
            started: false,
        }
    }

    /// Solves at level `alpha`, warm-starting from the previous basis if any.
    pub(crate) fn solve(&mut self, alpha: f64) -> std::result::Result<Vertex, SolveError> {
        if !self.started {
            self.crash_basis(alpha)?;
            self.started = true;
        }
        let n = self.y.len();
        let mut rhs0 = [0.0f64; 3];
        for t in 0..n {
            let x = self.design.row(t);
            for j in 0..3 {
                rhs0[j] += x[j];
            }
        }
        for v in &mut rhs0 {
            *v *= 1.0 - alpha;
        }

        let mut iterations = 0usize;
        loop {
            let inv = self.basis_inverse()?;
            let coef = self.dual_prices(&inv);
            let (objective, nonbasic_sum) = self.price(&coef, alpha);
            let vertex = Vertex { coef, objective };

            // Basic dual values a_B = B⁻¹ (b − Σ_N x_t a_t).
            let r = [
                rhs0[0] - nonbasic_sum[0],
                rhs0[1] - nonbasic_sum[1],
                rhs0[2] - nonbasic_sum[2],
            ];
            let xb: [f64; 3] = std::array::from_fn(|i| dot(&inv[i], &r));
            let (p, violation) = (0..3)
                .map(|i| (i, (-xb[i]).max(xb[i] - 1.0)))
                .fold((0, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                });
            if violation <= FEAS_TOL || objective <= self.zero_tol {
                return Ok(vertex);
            }
            if iterations >= self.budget {
                return Err(SolveError::Budget {
                    iterations,
                    incumbent: vertex,
                });
            }
            iterations += 1;

            let to_lower = xb[p] < 0.0;
            let row = inv[p];
            let piv_tol = 1e-11 * (row[0].abs() + row[1].abs() + row[2].abs());
            // `a_t · sgn` is positive exactly for the columns whose bound flip
            // reduces the violation when they sit at the upper bound.
            let sgn = if to_lower { 1.0 } else { -1.0 };
            {
                let (cos, sin, pivot) = (&self.design.cos[..n], &self.design.sin[..n], &mut self.pivot[..n]);
                for t in 0..n {
                    pivot[t] = sgn * (row[0] * cos[t] + row[1] * sin[t] + row[2]);
                }
            }
            // Branch-free compaction: every slot is written, only eligible
            // ones are kept.
            let (pivot, upper, free, resid) = (&self.pivot[..n], &self.upper[..n], &self.free[..n], &self.resid[..n]);
            let slots = &mut self.candidates[..n];
            let mut m = 0usize;
            for t in 0..n {
                let a = pivot[t];
                let w = a.abs();
                slots[m] = Breakpoint {
                    ratio: resid[t].abs() / w,
                    weight: w,
                    t,
                };
                let eligible = free[t] != 0.0 && w > piv_tol && (a > 0.0) == (upper[t] != 0.0);
                m += eligible as usize;
            }
            // Breakpoints are consumed in key order, but usually only a few of
            // them; sort growing prefixes instead of the whole list.
            let mut remaining = violation;
            let mut entering = None;
            let cands = &mut self.candidates[..m];
            let (mut start, mut chunk) = (0usize, 8usize);
            'walk: while start < cands.len() {
                let end = (start + chunk).min(cands.len());
                if end < cands.len() {
                    cands[start..].select_nth_unstable_by_key(end - 1 - start, Breakpoint::key);
                }
                cands[start..end].sort_unstable_by_key(Breakpoint::key);
                for b in &cands[start..end] {
                    if b.weight < remaining {
                        self.upper[b.t] = 1.0 - self.upper[b.t];
                        remaining -= b.weight;
                    } else {
                        entering = Some(b.t);
                        break 'walk;
                    }
                }
                start = end;
                chunk *= 4;
            }
            let Some(q) = entering else {
                return Err(SolveError::Numerical(
                    "dual ratio test found no entering observation".into(),
                ));
            };
            let leaving = self.basis[p];
            self.free[leaving] = 1.0;
            self.upper[leaving] = if to_lower { 0.0 } else { 1.0 };
            self.free[q] = 0.0;
            self.basis[p] = q;
        }
    }

    /// Residuals at `coef`; refreshes the non-basic bound states from the
    /// residual signs and returns (check loss, Σ_N x_t a_t).
    ///
    /// Element-wise passes with four-lane accumulators so the loops vectorize;
    /// the summation order is fixed, so results are reproducible.
    fn price(&mut self, coef: &[f64; 3], alpha: f64) -> (f64, [f64; 3]) {
        let n = self.y.len();
        let (y, cos, sin) = (&self.y[..n], &self.design.cos[..n], &self.design.sin[..n]);
        let (resid, upper, free) = (&mut self.resid[..n], &mut self.upper[..n], &self.free[..n]);
        let tol = self.zero_tol;
        for t in 0..n {
            resid[t] = y[t] - coef[0] * cos[t] - coef[1] * sin[t] - coef[2];
        }
        for t in 0..n {
            let r = resid[t];
            let keep = free[t] == 0.0 || r.abs() <= tol;
            upper[t] = if keep { upper[t] } else if r > 0.0 { 1.0 } else { 0.0 };
        }
        let mut acc = [[0.0f64; LANES]; 4];
        for (((r, u), f), (c, s)) in resid
            .chunks(LANES)
            .zip(upper.chunks(LANES))
            .zip(free.chunks(LANES))
            .zip(cos.chunks(LANES).zip(sin.chunks(LANES)))
        {
            for i in 0..r.len() {
                let w = u[i] * f[i];
                acc[0][i] += r[i] * (alpha - if r[i] < 0.0 { 1.0 } else { 0.0 });
                acc[1][i] += w * c[i];
                acc[2][i] += w * s[i];
                acc[3][i] += w;
            }
        }
        let total = |a: &[f64; LANES]| (a[0] + a[1]) + (a[2] + a[3]);
        (total(&acc[0]), [total(&acc[1]), total(&acc[2]), total(&acc[3])])
    }

    /// Inverse of the matrix whose columns are the basic regressor rows.
    fn basis_inverse(&self) -> std::result::Result<[[f64; 3]; 3], SolveError> {
        let m: [[f64; 3]; 3] = std::array::from_fn(|j| {
            std::array::from_fn(|i| self.design.row(self.basis[i])[j])
        });
        invert3(&m).ok_or_else(|| SolveError::Numerical("singular basis".into()))
    }

    /// Solves `x_{h_i} · π = y_{h_i}` for the interpolating coefficients.
    fn dual_prices(&self, inv: &[[f64; 3]; 3]) -> [f64; 3] {
        let yb: [f64; 3] = std::array::from_fn(|i| self.y[self.basis[i]]);
        std::array::from_fn(|j| (0..3).map(|i| inv[i][j] * yb[i]).sum())
    }

    /// Starting basis: three observations close to the constant α-quantile
    /// fit whose regressor rows are well spread.
    fn crash_basis(&mut self, alpha: f64) -> std::result::Result<(), SolveError> {
        let n = self.y.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.y[a].total_cmp(&self.y[b]).then(a.cmp(&b)));
        let pos = ((n as f64 * alpha).ceil() as usize).clamp(1, n) - 1;
        let level = self.y[order[pos]];
        order.sort_by(|&a, &b| {
            (self.y[a] - level)
                .abs()
                .total_cmp(&(self.y[b] - level).abs())
                .then(a.cmp(&b))
        });

        let pool = &order[..n.min(12)];
        let mut best = (0.0f64, [0usize; 3]);
        for i in 0..pool.len() {
            for j in i + 1..pool.len() {
                for k in j + 1..pool.len() {
                    let tri = [pool[i], pool[j], pool[k]];
                    let d = self.triple_det(tri).abs();
                    if d > best.0 {
                        best = (d, tri);
                    }
                }
            }
        }
        if best.0 < 1e-3 {
            best = self.greedy_triple(order[0]);
        }
        if best.0 <= 1e-12 {
            return Err(SolveError::Numerical(
                "no nonsingular starting basis: design is rank deficient".into(),
            ));
        }
        self.basis = best.1;
        for &t in &self.basis {
            self.free[t] = 0.0;
        }
        Ok(())
    }

    fn greedy_triple(&self, first: usize) -> (f64, [usize; 3]) {
        let n = self.y.len();
        let x1 = self.design.row(first);
        let cross_norm = |t: usize| {
            let c = cross(&x1, &self.design.row(t));
            dot(&c, &c)
        };
        let second = (0..n)
            .max_by(|&a, &b| cross_norm(a).total_cmp(&cross_norm(b)))
            .unwrap_or(first);
        let third = (0..n)
            .max_by(|&a, &b| {
                self.triple_det([first, second, a])
                    .abs()
                    .total_cmp(&self.triple_det([first, second, b]).abs())
            })
            .unwrap_or(first);
        let tri = [first, second, third];
        (self.triple_det(tri).abs(), tri)
    }

    fn triple_det(&self, tri: [usize; 3]) -> f64 {
        det3(&[
            self.design.row(tri[0]),
            self.design.row(tri[1]),
            self.design.row(tri[2]),
        ])
    }
}

#[inline]
fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = det3(m);
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if det.abs() <= 1e-14 * scale.powi(3) || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    Some([
        [
            c(1, 1, 2, 2) * inv_det,
            -c(0, 1, 2, 2) * inv_det,
            c(0, 1, 1, 2) * inv_det,
        ],
        [
            -c(1, 0, 2, 2) * inv_det,
            c(0, 0, 2, 2) * inv_det,
            -c(0, 0, 1, 2) * inv_det,
        ],
        [
            c(1, 0, 2, 1) * inv_det,
            -c(0, 0, 2, 1) * inv_det,
            c(0, 0, 1, 1) * inv_det,
        ],
    ])
}
