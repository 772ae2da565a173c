use std::f64::consts::PI;

use proptest::prelude::*;
use qfa_core::qfa::{normalize, quantile_periodogram, PeriodogramKind, QuantileGrid};
use qfa_core::series::TimeSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn levels() -> QuantileGrid {
    QuantileGrid::from_range(0.1, 0.9, 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalized_matrix_is_scale_and_shift_invariant(
        seed in 0u64..1000,
        n in 16usize..64,
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let x = gaussian(seed, n);
        let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        let q = levels();
        let a = normalize(&quantile_periodogram(&TimeSeries::new(x).unwrap(), &q, PeriodogramKind::Second).unwrap()).unwrap();
        let b = normalize(&quantile_periodogram(&TimeSeries::new(y).unwrap(), &q, PeriodogramKind::Second).unwrap()).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            prop_assert!((u - v).abs() <= 1e-9, "{} vs {}", u, v);
        }
    }

    #[test]
    fn raw_entries_are_nonnegative_and_columns_sum_to_one(seed in 0u64..1000, n in 8usize..48) {
        let s = TimeSeries::new(gaussian(seed, n)).unwrap();
        let raw = quantile_periodogram(&s, &levels(), PeriodogramKind::Second).unwrap();
        prop_assert!(raw.values().iter().all(|v| *v >= 0.0));
        let nm = normalize(&raw).unwrap();
        for l in 0..nm.levels() {
            let sum: f64 = nm.column(l).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn white_noise_ordinates_are_roughly_exponential() {
    let n = 512;
    let s = TimeSeries::new(gaussian(2024, n)).unwrap();
    let q = QuantileGrid::new(vec![0.5]).unwrap();
    let col = quantile_periodogram(&s, &q, PeriodogramKind::Second).unwrap().column(0);
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    let scaled: Vec<f64> = col.iter().map(|v| v / mean).collect();
    let var = scaled.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>() / (scaled.len() - 1) as f64;
    let cv = var.sqrt();
    assert!((cv - 1.0).abs() <= 0.15, "coefficient of variation {cv}");
}

#[test]
fn thread_count_does_not_change_the_matrix() {
    let s = TimeSeries::new(gaussian(9, 96)).unwrap();
    let q = levels();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| quantile_periodogram(&s, &q, PeriodogramKind::Second).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert!(one.values().iter().zip(four.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn sinusoid_in_noise_peaks_at_its_frequency() {
    let n = 256;
    let k = 20;
    let noise = gaussian(77, n);
    let x: Vec<f64> = noise
        .iter()
        .enumerate()
        .map(|(i, e)| 2.0 * (2.0 * PI * k as f64 * (i + 1) as f64 / n as f64).cos() + e)
        .collect();
    let s = TimeSeries::new(x).unwrap();
    let q = QuantileGrid::new(vec![0.4, 0.5, 0.6]).unwrap();
    let m = quantile_periodogram(&s, &q, PeriodogramKind::Second).unwrap();
    for l in 0..m.levels() {
        let col = m.column(l);
        let argmax = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        assert_eq!(argmax + 1, k);
    }
}
