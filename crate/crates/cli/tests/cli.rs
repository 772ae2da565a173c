use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfa"))
        .args(args)
        .env_remove("QFA_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = qfa(args);
    assert!(
        out.status.success(),
        "qfa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, contents).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const IID_MODEL: &str = r#"{"family":"garch11","mu":0.0,"a0":1.0}"#;

/// Simulates `n` i.i.d. standard normal values into `dir/series.csv`.
fn white_noise(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let model = write(dir, "iid.json", IID_MODEL);
    ok(&["--seed", &seed.to_string(), "--out", s(dir), "simulate", s(&model), "--n", &n.to_string()]);
    dir.join("series.csv")
}

#[test]
fn returns_from_prices() {
    let dir = TempDir::new().unwrap();
    let prices = write(
        dir.path(),
        "prices.csv",
        "date,close\n2020-01-02,100\n2020-01-03,101\n2020-01-06,99.5\n",
    );
    let out = dir.path().join("out");
    ok(&["--out", s(&out), "returns", s(&prices)]);
    let text = fs::read_to_string(out.join("returns.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("date,return\n2020-01-03,"));
    // Cumulative sums plus the first log price reconstruct the log prices.
    let r = column(&out.join("returns.csv"));
    let mut level = 100f64.ln();
    for (ret, close) in r.iter().zip([101.0f64, 99.5]) {
        level += ret;
        assert!((level - close.ln()).abs() < 1e-12);
    }
    assert_eq!(json(&out.join("manifest.json"))["command"], "returns");
}

#[test]
fn malformed_price_row_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let prices = write(dir.path(), "p.csv", "date,close\n2020-01-02,100\n2020-01-03,N/A\n");
    let out = qfa(&["--out", s(dir.path()), "returns", s(&prices)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn qfa_outputs_and_white_noise_band() {
    let dir = TempDir::new().unwrap();
    let series = white_noise(dir.path(), 256, 4);
    let out = dir.path().join("qfa");
    ok(&["--out", s(&out), "qfa", s(&series), "--alphas", "0.25,0.5,0.75"]);
    for f in ["raw.csv", "normalized.csv", "cumulative.csv", "lower_half.csv", "qfa.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let q = json(&out.join("qfa.json"));
    let cum = &q["cumulative"];
    let k = cum["freqs"].as_array().unwrap().len();
    assert_eq!(k, 127);
    let values: Vec<f64> = cum["values"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|row| row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()))
        .collect();
    for l in 0..3 {
        let gap = (0..k)
            .map(|i| (values[i * 3 + l] - (i + 1) as f64 / k as f64).abs())
            .fold(0.0, f64::max);
        // 99% Kolmogorov band for the staircase.
        assert!((k as f64).sqrt() * gap < 1.63, "level {l}: scaled gap {}", (k as f64).sqrt() * gap);
    }
    // Lower half keeps frequencies up to a quarter cycle.
    let lower = fs::read_to_string(out.join("lower_half.csv")).unwrap();
    assert_eq!(lower.lines().next(), Some("freq,alpha,value"));
    assert!(lower
        .lines()
        .skip(1)
        .all(|l| l.split(',').next().unwrap().parse::<f64>().unwrap() <= 0.25));
}

#[test]
fn default_alpha_range_has_91_levels() {
    let dir = TempDir::new().unwrap();
    let series = white_noise(dir.path(), 32, 5);
    let out = dir.path().join("qfa");
    ok(&["--out", s(&out), "qfa", s(&series), "--alphas", "0.05:0.95:0.01"]);
    let levels = json(&out.join("manifest.json"))["settings"]["alphas"].as_array().unwrap().len();
    assert_eq!(levels, 91);
}

#[test]
fn degenerate_series_fails() {
    let dir = TempDir::new().unwrap();
    let series = write(dir.path(), "flat.csv", &format!("x\n{}", "1.0\n".repeat(40)));
    let out = qfa(&["--out", s(dir.path()), "qfa", s(&series), "--alphas", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_file())
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let series = white_noise(dir.path(), 128, 6);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "4")] {
        ok(&["--threads", threads, "--out", s(out), "qfa", s(&series), "--alphas", "0.1:0.9:0.2"]);
        ok(&[
            "--threads", threads, "--seed", "11", "--out", s(&out.join("t")), "test", "--mode", "residual",
            s(&series), "-B", "9", "--alphas", "0.3,0.5,0.7",
        ]);
    }
    assert_eq!(files(&a), files(&b));
    assert_eq!(files(&a.join("t")), files(&b.join("t")));
}

#[test]
fn fit_recovers_persistence_and_round_trips_through_simulate() {
    let dir = TempDir::new().unwrap();
    let truth = write(
        dir.path(),
        "truth.json",
        r#"{"family":"garch11","mu":2.34e-4,"a0":7.12e-6,"a":[0.0949],"b":[0.868]}"#,
    );
    let sim = dir.path().join("sim");
    ok(&["--seed", "2024", "--out", s(&sim), "simulate", s(&truth), "--n", "5000"]);
    let fit = dir.path().join("fit");
    ok(&["--out", s(&fit), "fit", s(&sim.join("series.csv")), "--family", "garch"]);
    let report = json(&fit.join("fit.json"));
    let p = report["persistence"].as_f64().unwrap();
    assert!((p - 0.9629).abs() < 0.05, "persistence {p}");
    assert_eq!(report["ljung_box"]["dof"], 10);
    assert_eq!(report["lm_arch"]["dof"], 10);
    assert_eq!(column(&fit.join("residuals.csv")).len(), 5000);

    let again = dir.path().join("again");
    ok(&["--seed", "3", "--out", s(&again), "simulate", s(&fit.join("model.json")), "--n", "100"]);
    assert_eq!(column(&again.join("series.csv")).len(), 100);
}

#[test]
fn fit_on_iid_data_passes_classical_tests() {
    let dir = TempDir::new().unwrap();
    let series = white_noise(dir.path(), 2000, 8);
    let fit = dir.path().join("fit");
    ok(&["--out", s(&fit), "fit", s(&series)]);
    let report = json(&fit.join("fit.json"));
    for test in ["ljung_box", "lm_arch"] {
        let p = report[test]["p_value"].as_f64().unwrap();
        assert!(p > 0.01 && p < 0.99, "{test}: {p}");
    }
}

#[test]
fn simulate_is_seeded_and_nests_garch_in_gjr() {
    let dir = TempDir::new().unwrap();
    let garch = write(dir.path(), "g.json", r#"{"family":"garch11","mu":0.0,"a0":1e-6,"a":[0.08],"b":[0.9]}"#);
    let gjr = write(
        dir.path(),
        "j.json",
        r#"{"family":"gjr11","mu":0.0,"a0":1e-6,"a":[0.08],"b":[0.9],"c":[0.0]}"#,
    );
    let run = |model: &Path, seed: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&["--seed", seed, "--out", s(&out), "simulate", s(model), "--n", "300"]);
        fs::read(out.join("series.csv")).unwrap()
    };
    assert_eq!(run(&garch, "5", "a"), run(&garch, "5", "b"));
    assert_ne!(run(&garch, "5", "c"), run(&garch, "6", "d"));
    assert_eq!(run(&garch, "5", "e"), run(&gjr, "5", "f"));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "iid.json", IID_MODEL);
    let out = Command::new(env!("CARGO_BIN_EXE_qfa"))
        .args(["--out", s(dir.path()), "simulate", s(&model), "--n", "10"])
        .env("QFA_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&dir.path().join("manifest.json"))["seed"], 77);
}

#[test]
fn missing_seed_is_generated_and_echoed() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "iid.json", IID_MODEL);
    let out = ok(&["--out", s(dir.path()), "simulate", s(&model), "--n", "10"]);
    let echoed: u64 = String::from_utf8_lossy(&out.stderr)
        .trim()
        .strip_prefix("seed: ")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(json(&dir.path().join("manifest.json"))["seed"], echoed);
}

#[test]
fn residual_test_report() {
    let dir = TempDir::new().unwrap();
    let series = white_noise(dir.path(), 256, 9);
    let out = dir.path().join("t");
    ok(&[
        "--seed", "1", "--out", s(&out), "test", "--mode", "residual", s(&series), "--B", "99", "--alphas",
        "0.2,0.4,0.6,0.8", "--region", "middle", "--elide-null",
    ]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["test_kind"], "residual");
    assert_eq!(report["replicates"], 99);
    assert_eq!(report["seed"], 1);
    assert!(report.get("null_samples").is_none());
    assert_eq!(report["region"]["levels"]["lo"], 0.3);
    assert_eq!(report["region"]["levels"]["hi"], 0.7);
    // Only the two interior levels enter the middle region.
    assert_eq!(report["observed_detail"]["per_level"].as_array().unwrap().len(), 2);
    for p in report["p_values"].as_array().unwrap() {
        assert!(p.as_f64().unwrap() > 0.01);
    }
}

#[test]
fn model_modes_need_their_inputs() {
    let dir = TempDir::new().unwrap();
    let series = white_noise(dir.path(), 64, 10);
    let out = qfa(&["--seed", "1", "--out", s(dir.path()), "test", "--mode", "direct", s(&series)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
}

#[test]
fn direct_and_discriminant_modes() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "m.json", r#"{"family":"garch11","mu":0.0,"a0":1e-6,"a":[0.1],"b":[0.8]}"#);
    let sim = dir.path().join("sim");
    ok(&["--seed", "3", "--out", s(&sim), "simulate", s(&model), "--n", "128"]);
    let x = sim.join("series.csv");
    let common = ["--B", "9", "--realizations", "8", "--alphas", "0.25,0.5,0.75"];
    let direct = dir.path().join("direct");
    let mut args = vec!["--seed", "4", "--out", s(&direct), "test", "--mode", "direct", s(&x), "--model", s(&model)];
    args.extend(common);
    ok(&args);
    let disc = dir.path().join("disc");
    let mut args = vec![
        "--seed", "4", "--out", s(&disc), "test", "--mode", "discriminant", s(&x), "--model", s(&model),
        "--model-series", s(&x),
    ];
    args.extend(common);
    ok(&args);
    let (a, b) = (json(&direct.join("report.json")), json(&disc.join("report.json")));
    assert_eq!(a["test_kind"], "direct");
    assert_eq!(b["test_kind"], "discriminant");
    assert_eq!(a["p_values"], b["p_values"]);
    assert_eq!(a["null_samples"], b["null_samples"]);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let series = white_noise(dir.path(), 64, 12);
    let config = write(dir.path(), "c.json", r#"{"seed": 5, "replicates": 3, "alphas": "0.5"}"#);
    let out = dir.path().join("t");
    ok(&["--config", s(&config), "--out", s(&out), "test", "--mode", "residual", s(&series), "--B", "4"]);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["settings"]["options"]["replicates"], 4);
    assert_eq!(manifest["settings"]["alphas"], serde_json::json!([0.5]));

    let bad = write(dir.path(), "bad.json", r#"{"replicatez": 3}"#);
    let out = qfa(&["--config", s(&bad), "--out", s(dir.path()), "test", "--mode", "residual", s(&series)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sensitivity_profile_defaults() {
    let dir = TempDir::new().unwrap();
    ok(&["--out", s(dir.path()), "sensitivity"]);
    let text = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 47);
    let mean = |i: usize| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64;
    assert!((mean(1) - 1.0).abs() < 1e-9 && (mean(2) - 1.0).abs() < 1e-9);
    let ratio = |i: usize| {
        let max = rows.iter().map(|r| r[i]).fold(f64::MIN, f64::max);
        let min = rows.iter().map(|r| r[i]).fold(f64::MAX, f64::min);
        max / min
    };
    assert!(ratio(2) < ratio(1));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["settings"]["K"], 999);
    assert_eq!(manifest["settings"]["rho"], 0.1);
}
