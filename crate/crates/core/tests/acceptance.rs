//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line to stderr,
//! bypassing output capture, before asserting.

use std::f64::consts::{E, PI};
use std::io::Write;
use std::time::Instant;

use qfa_core::garch::{
    fit_qmle, residuals, simulate, FitOptions, FitResult, Family, GarchSpec, SimulateOptions,
};
use qfa_core::metrics::{
    d_divergence, ks_metrics, sensitivity_profile, wl_metrics, Metric, Region,
};
use qfa_core::montecarlo::{
    direct_test, discriminant_test, expected_spectrum, is_significant, residual_test,
    BootstrapOptions,
};
use qfa_core::qfa::{
    cumulate, quantile_periodogram, MatrixState, PeriodogramKind, QfaMatrix, QuantileGrid,
};
use qfa_core::qreg::{fit_trig_quantile, oracle_trig_quantile, sample_quantile};
use qfa_core::series::{FrequencyGrid, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SECOND: PeriodogramKind = PeriodogramKind::Second;

fn verdict(id: u32, claim: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {id:>2} {}: {claim} [{detail}]",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = writeln!(std::io::stderr().lock(), "{line}");
    assert!(pass, "{line}");
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn nineteen_levels() -> QuantileGrid {
    QuantileGrid::from_range(0.05, 0.95, 0.05).unwrap()
}

fn iid_series(n: usize, seed: u64) -> TimeSeries {
    simulate(&GarchSpec::iid(0.0, 1.0).unwrap(), n, seed, SimulateOptions::default())
        .unwrap()
        .series
}

#[test]
fn c01_solver_matches_vertex_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let alphas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut worst = 0.0f64;
    let mut cells = 0;
    for i in 0..50 {
        let n = [8, 16, 24, 32][i % 4];
        let s = TimeSeries::new(gaussian(&mut rng, n)).unwrap();
        for &w in FrequencyGrid::new(n).unwrap().omegas() {
            for &a in &alphas {
                let f = fit_trig_quantile(&s, w, a).unwrap().objective;
                let o = oracle_trig_quantile(&s, w, a).unwrap().objective;
                worst = worst.max((f - o).abs() / o.abs().max(f64::MIN_POSITIVE));
                cells += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "solver objective within relative 1e-6 of the oracle",
        worst <= 1e-6 && secs < 120.0,
        format!("{cells} cells, worst relative gap {worst:.2e}, {secs:.1} s"),
    );
}

#[test]
fn c02_exact_trigonometric_fit() {
    let (n, k) = (64usize, 5usize);
    let w = 2.0 * PI * k as f64 / n as f64;
    let x: Vec<f64> = (1..=n)
        .map(|t| 2.0 * (w * t as f64).cos() + 3.0 * (w * t as f64).sin() + 0.5)
        .collect();
    let s = TimeSeries::new(x).unwrap();
    let qgrid = QuantileGrid::new(vec![0.25, 0.5, 0.75]).unwrap();
    let raw = quantile_periodogram(&s, &qgrid, SECOND).unwrap();
    let mut worst_loss = 0.0f64;
    let mut argmax_ok = true;
    let mut entry_ok = true;
    for (l, &a) in qgrid.levels().iter().enumerate() {
        let fit = fit_trig_quantile(&s, w, a).unwrap();
        worst_loss = worst_loss.max(fit.objective.abs());
        let constant = sample_quantile(&s, a).unwrap().objective;
        let entry = raw.get(k - 1, l);
        entry_ok &= (entry - (constant - fit.objective)).abs() <= 1e-9 * constant;
        let col = raw.column(l);
        let argmax = (0..col.len()).max_by(|&i, &j| col[i].total_cmp(&col[j])).unwrap();
        argmax_ok &= argmax == k - 1;
    }
    verdict(
        2,
        "zero trigonometric loss at the planted frequency, column argmax there",
        worst_loss <= 1e-9 && argmax_ok && entry_ok,
        format!("worst trig loss {worst_loss:.2e}, entry is the loss difference: {entry_ok}, argmax at k: {argmax_ok}"),
    );
}

fn normalized(grid: &FrequencyGrid, qgrid: &QuantileGrid, cols: Vec<Vec<f64>>) -> QfaMatrix {
    let (k_count, l_count) = (grid.len(), qgrid.len());
    let mut values = vec![0.0; k_count * l_count];
    for (l, col) in cols.iter().enumerate() {
        let sum: f64 = col.iter().sum();
        for k in 0..k_count {
            values[k * l_count + l] = col[k] / sum;
        }
    }
    QfaMatrix::from_values(
        grid.clone(),
        qgrid.clone(),
        values,
        MatrixState::Normalized,
        PeriodogramKind::External,
    )
    .unwrap()
}

#[test]
fn c03_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let grid = FrequencyGrid::new(33).unwrap();
    let qgrid = QuantileGrid::new(vec![0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
    let random = |rng: &mut ChaCha8Rng| {
        let cols = (0..qgrid.len())
            .map(|_| (0..grid.len()).map(|_| rng.random_range(0.01..1.0)).collect())
            .collect();
        normalized(&grid, &qgrid, cols)
    };
    let region = Region::full();

    let mut zero_ok = true;
    let mut order_ok = true;
    for _ in 0..100 {
        let (a, b) = (random(&mut rng), random(&mut rng));
        let ks_self = ks_metrics(&cumulate(&a).unwrap(), &cumulate(&a).unwrap(), &region).unwrap();
        let wl_self = wl_metrics(&a, &a, &region).unwrap();
        zero_ok &= [ks_self.max, ks_self.mean, wl_self.max, wl_self.mean] == [0.0; 4];
        let ks = ks_metrics(&cumulate(&a).unwrap(), &cumulate(&b).unwrap(), &region).unwrap();
        let wl = wl_metrics(&a, &b, &region).unwrap();
        order_ok &= ks.mean <= ks.max && wl.mean <= wl.max;
    }

    let d_gap = (d_divergence(E).unwrap() - (E - 2.0)).abs();

    let grid4 = FrequencyGrid::new(10).unwrap();
    let single = QuantileGrid::new(vec![0.5]).unwrap();
    let uniform = normalized(&grid4, &single, vec![vec![1.0; 4]]);
    let spike = normalized(&grid4, &single, vec![vec![1.0, 0.0, 0.0, 0.0]]);
    let stair = ks_metrics(&cumulate(&uniform).unwrap(), &cumulate(&spike).unwrap(), &region)
        .unwrap()
        .max;

    verdict(
        3,
        "zero self-divergence, mean <= max, d(e) = e - 2, staircase value 1.5",
        zero_ok && order_ok && d_gap <= 1e-12 && stair == 1.5,
        format!("self zero {zero_ok}, mean <= max {order_ok}, |d(e) - (e - 2)| {d_gap:.1e}, staircase {stair}"),
    );
}

#[test]
fn c04_sensitivity_profiles() {
    let start = Instant::now();
    let grid = FrequencyGrid::new(2000).unwrap();
    assert_eq!(grid.len(), 999);
    let cycles: Vec<f64> = (2..=48).map(|i| i as f64 / 100.0).collect();
    let centers: Vec<f64> = cycles.iter().map(|c| 2.0 * PI * c).collect();
    let p = sensitivity_profile(0.1, 0.003, &grid, &centers).unwrap();
    let ratio = |v: &[f64]| {
        let max = v.iter().copied().fold(f64::MIN, f64::max);
        let min = v.iter().copied().fold(f64::MAX, f64::min);
        max / min
    };
    let (ks_ratio, wl_ratio) = (ratio(&p.ks_rescaled), ratio(&p.wl_rescaled));
    let at = |c: f64| p.ks[cycles.iter().position(|x| (x - c).abs() < 1e-12).unwrap()];
    let (low, mid, high) = (at(0.05), at(0.25), at(0.45));
    verdict(
        4,
        "WL profile flatter than KS, KS larger at the band edges",
        wl_ratio < ks_ratio && low > mid && high > mid,
        format!(
            "max/min WL {wl_ratio:.4} vs KS {ks_ratio:.4}; KS at 0.05/0.25/0.45 = {low:.4}/{mid:.4}/{high:.4}; {:.2} s",
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn c05_simulation_moments_and_stationarity() {
    let spec = GarchSpec::garch11(5.29e-4, 1.42e-6, 4.33e-2, 9.19e-1).unwrap();
    let x = simulate(&spec, 1_000_000, 1992, SimulateOptions::default()).unwrap().series;
    let v = x.values();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (v.len() - 1) as f64;
    let target = 1.42e-6 / (1.0 - 4.33e-2 - 9.19e-1);
    let rel = (var / target - 1.0).abs();

    let gjr = [
        (4.18e-4, 2.74e-6, 2.68e-2, 8.73e-1),
        (-3.58e-4, 6.66e-6, 4.85e-2, 8.71e-1),
        (1.77e-4, 2.65e-6, 4.33e-2, 8.97e-1),
    ];
    let persistences: Vec<f64> = gjr
        .iter()
        .map(|&(mu, a0, a1, b1)| GarchSpec::gjr11(mu, a0, a1, b1, 1.0).unwrap().persistence())
        .collect();
    let formula_ok = gjr
        .iter()
        .zip(&persistences)
        .all(|(&(_, _, a1, b1), p)| (p - (2.0 * a1 + b1)).abs() < 1e-9 && *p < 1.0);
    verdict(
        5,
        "sample variance within 5% of a0/(1 - a1 - b1), GJR persistences below 1",
        rel < 0.05 && formula_ok,
        format!("variance {var:.4e} vs {target:.4e} ({:.2}%), GJR {persistences:.4?}", 100.0 * rel),
    );
}

#[test]
fn c06_expected_spectrum_symmetry() {
    let start = Instant::now();
    let qgrid = nineteen_levels();
    let l_count = qgrid.len();
    let sim = SimulateOptions::default();
    let sym = GarchSpec::garch11(2.32e-4, 2.48e-6, 1.08e-1, 8.83e-1).unwrap();
    let e = expected_spectrum(&sym, 256, &qgrid, 200, 6, SECOND, sim).unwrap();
    let k_count = e.normalized().freqs();
    let mut outside = 0;
    let mut worst = 0.0f64;
    for k in 0..k_count {
        for l in 0..l_count / 2 {
            let m = l_count - 1 - l;
            let gap = (e.normalized().get(k, l) - e.normalized().get(k, m)).abs();
            let se = e.std_error(k, l).hypot(e.std_error(k, m));
            worst = worst.max(gap / se);
            outside += usize::from(gap > 3.0 * se);
        }
    }

    let asym = GarchSpec::gjr11(1.77e-4, 2.65e-6, 4.33e-2, 8.97e-1, 1.0).unwrap();
    let g = expected_spectrum(&asym, 256, &qgrid, 200, 6, SECOND, sim).unwrap();
    let decile = k_count.div_ceil(10);
    let mass = |alpha: f64| {
        let l = qgrid.levels().iter().position(|a| (a - alpha).abs() < 1e-9).unwrap();
        (0..decile).map(|k| g.normalized().get(k, l)).sum::<f64>()
    };
    let (low, high) = (mass(0.1), mass(0.9));
    verdict(
        6,
        "symmetric model within 3 standard errors at every cell, GJR low-frequency mass larger at 0.1 than 0.9",
        outside == 0 && low > high,
        format!(
            "{outside} cells outside, worst {worst:.2} se; GJR mass {low:.4} vs {high:.4}; {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    );
}

fn residual_opts(seed: u64) -> BootstrapOptions {
    BootstrapOptions {
        replicates: 99,
        realizations: 0,
        seed,
        drop_head: 0,
        ..Default::default()
    }
}

#[test]
fn c07_bootstrap_size() {
    let start = Instant::now();
    let qgrid = nineteen_levels();
    let mut low = [0usize; 4];
    for trial in 0..20u64 {
        let x = iid_series(512, 7000 + trial);
        let report = residual_test(&x, &qgrid, &Region::full(), &residual_opts(700 + trial)).unwrap();
        assert_eq!(report.series_length, 512);
        for (count, p) in low.iter_mut().zip(report.p_values) {
            *count += usize::from(p < 0.05);
        }
    }
    let names = Metric::ALL.map(Metric::name);
    verdict(
        7,
        "at most 4 of 20 white-noise p-values below 0.05 for each metric",
        low.iter().all(|&c| c <= 4),
        format!("counts {names:?} = {low:?}; {:.0} s", start.elapsed().as_secs_f64()),
    );
}

#[test]
fn c08_planted_signal_power() {
    let start = Instant::now();
    let qgrid = nineteen_levels();
    let n = 512;
    let (mut by_mean, mut by_max) = (0, 0);
    for trial in 0..20u64 {
        let noise = iid_series(n, 8000 + trial);
        let x: Vec<f64> = noise
            .values()
            .iter()
            .enumerate()
            .map(|(t, v)| v + 0.5 * (2.0 * PI * 4.0 * t as f64 / n as f64).cos())
            .collect();
        let report = residual_test(
            &TimeSeries::new(x).unwrap(),
            &qgrid,
            &Region::full(),
            &residual_opts(800 + trial),
        )
        .unwrap();
        by_mean += usize::from(report.p_value(Metric::KsMean) < 0.05);
        by_max += usize::from(report.p_value(Metric::KsMax) < 0.05);
    }
    verdict(
        8,
        "KS_mean detects a low-frequency sinusoid in at least 18 of 20 trials",
        by_mean >= 18,
        format!(
            "KS_mean {by_mean} of 20, KS_max {by_max} of 20; {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn c09_qmle_recovery() {
    let garch = GarchSpec::garch11(2.34e-4, 7.12e-6, 9.49e-2, 8.68e-1).unwrap();
    let x = simulate(&garch, 5000, 1998, SimulateOptions::default()).unwrap().series;
    let fit = fit_qmle(&x, Family::Garch11, FitOptions::default()).unwrap();
    let p = fit.spec.a[0] + fit.spec.b[0];

    let gjr = GarchSpec::gjr11(1.77e-4, 2.65e-6, 4.33e-2, 8.97e-1, 1.0).unwrap();
    let y = simulate(&gjr, 10_000, 2008, SimulateOptions::default()).unwrap().series;
    let c = fit_qmle(&y, Family::Gjr11, FitOptions::default()).unwrap().spec.c[0];
    verdict(
        9,
        "a1 + b1 within 0.05 of 0.9629, GJR sign coefficient above 0.5",
        (p - 0.9629).abs() < 0.05 && c > 0.5,
        format!("a1 + b1 = {p:.4}, c1 = {c:.3}"),
    );
}

#[test]
fn c10_significance_threshold() {
    let pass_039 = is_significant(0.039, 1000);
    let pass_040 = is_significant(0.040, 1000);
    verdict(
        10,
        "upper-bound rule accepts p = 0.039 and rejects p = 0.040 at B = 1000",
        pass_039 && !pass_040,
        format!("0.039 -> {pass_039}, 0.040 -> {pass_040}"),
    );
}

/// Every randomized pipeline, serialized, under a pool of `threads` workers.
fn pipelines(threads: usize) -> Vec<String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let qgrid = QuantileGrid::new(vec![0.2, 0.5, 0.8]).unwrap();
        let region = Region::full();
        let spec = GarchSpec::garch11(1e-4, 2e-6, 0.08, 0.9).unwrap();
        let sim = simulate(&spec, 600, 41, SimulateOptions::default()).unwrap();
        let fit = fit_qmle(&sim.series, Family::Garch11, FitOptions::default()).unwrap();
        let expected = expected_spectrum(&spec, 128, &qgrid, 16, 42, SECOND, SimulateOptions::default()).unwrap();
        let opts = BootstrapOptions {
            replicates: 19,
            realizations: 8,
            seed: 43,
            ..Default::default()
        };
        let short = TimeSeries::new(sim.series.values()[..128].to_vec()).unwrap();
        let known = FitResult::evaluate(spec.clone(), &short).unwrap();
        let raw = quantile_periodogram(&short, &qgrid, SECOND).unwrap();
        vec![
            serde_json::to_string(&sim.series.values()).unwrap(),
            serde_json::to_string(&fit).unwrap(),
            serde_json::to_string(&expected.normalized().values()).unwrap(),
            serde_json::to_string(&expected.std_errors).unwrap(),
            serde_json::to_string(&raw.values()).unwrap(),
            serde_json::to_string(&residual_test(fit.residuals().unwrap(), &qgrid, &region, &opts).unwrap()).unwrap(),
            serde_json::to_string(&direct_test(&short, &known, &qgrid, &region, &opts).unwrap()).unwrap(),
            serde_json::to_string(&discriminant_test(&short, &known, &qgrid, &region, &opts).unwrap()).unwrap(),
        ]
    })
}

#[test]
fn c11_determinism_across_runs_and_threads() {
    let one = pipelines(1);
    let again = pipelines(1);
    let four = pipelines(4);
    let same = one == again && one == four;
    verdict(
        11,
        "byte-identical outputs across runs and thread counts",
        same,
        format!("{} pipelines compared at 1 and 4 threads", one.len()),
    );
}

#[test]
fn c12_residual_round_trip() {
    let mut worst = 0.0f64;
    for (seed, spec) in [
        (12, GarchSpec::garch11(2.34e-4, 7.12e-6, 9.49e-2, 8.68e-1).unwrap()),
        (13, GarchSpec::gjr11(-3.58e-4, 6.66e-6, 4.85e-2, 8.71e-1, 1.0).unwrap()),
    ] {
        let sim = simulate(&spec, 3000, seed, SimulateOptions::default()).unwrap();
        let eps = residuals(&spec, &sim.series).unwrap();
        worst = eps.values()[1000..]
            .iter()
            .zip(&sim.innovations.values()[1000..])
            .map(|(a, b)| (a - b).abs())
            .fold(worst, f64::max);
    }
    verdict(
        12,
        "residuals recover simulated innovations to 1e-8 after burn-in",
        worst < 1e-8,
        format!("worst deviation {worst:.2e}"),
    );
}
