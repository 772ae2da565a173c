use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use qfa_core::garch::{fit_qmle, simulate, Family, FitOptions, FitResult, GarchSpec, SimulateOptions, RESIDUAL_BURN};
use qfa_core::metrics::{ljung_box, lm_arch, sensitivity_profile, RegionPreset};
use qfa_core::montecarlo::{direct_test, discriminant_test, residual_test, BootstrapOptions, PValueRule};
use qfa_core::qfa::{cumulate, normalize, quantile_periodogram, PeriodogramKind, QuantileGrid};
use qfa_core::series::{load_prices, load_values, log_returns, read_header, write_dated_values, write_values, FrequencyGrid, TimeSeries};
use qfa_core::{Error, Result};

use crate::config::{build_region, parse_qgrid, parse_values, ConfigFile};
use crate::{Cli, Command, FamilyArg, FitArgs, InputArgs, KindArg, ModeArg, QfaArgs, RegionArg, ReturnsArgs, SensitivityArgs, SimulateArgs, TestArgs};

/// Ljung-Box lags and LM order used by `fit`.
const DIAGNOSTIC_LAGS: usize = 10;

pub enum Outcome {
    Done,
    NotConverged,
}

/// Files written by one run, recorded in its manifest.
struct Run<'a> {
    out: &'a Path,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(out: &'a Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Self {
            out,
            outputs: Vec::new(),
        })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Everything needed to reproduce the outputs; no timestamps or thread
    /// counts, so reruns are byte-identical.
    fn finish(mut self, command: &str, seed: Option<u64>, inputs: &[&Path], settings: Value) -> Result<()> {
        let outputs = std::mem::take(&mut self.outputs);
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "settings": settings,
            "outputs": outputs,
        });
        self.json("manifest.json", &manifest)
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let run = Run::new(&cli.out)?;
    match &cli.command {
        Command::Returns(args) => returns(run, args),
        Command::Qfa(args) => qfa(run, args, &config),
        Command::Fit(args) => fit(run, args, &config),
        Command::Simulate(args) => simulate_cmd(run, args, &config, resolve_seed(cli, &config)),
        Command::Test(args) => test(run, args, &config, resolve_seed(cli, &config)),
        Command::Sensitivity(args) => sensitivity(run, args, &config),
    }
}

fn resolve_seed(cli: &Cli, config: &ConfigFile) -> u64 {
    if let Some(seed) = cli.seed.or(config.seed) {
        return seed;
    }
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    let seed = nanos ^ ((std::process::id() as u64) << 32);
    eprintln!("seed: {seed}");
    seed
}

fn load_input(input: &InputArgs) -> Result<TimeSeries> {
    load_series(&input.input, input.column.as_deref())
}

fn load_series(path: &Path, column: Option<&str>) -> Result<TimeSeries> {
    match column {
        Some(c) => load_values(path, c),
        None => {
            let header = read_header(path)?;
            let last = header.last().cloned().unwrap_or_default();
            load_values(path, &last)
        }
    }
}

fn load_model(path: &Path) -> Result<GarchSpec> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn kind_of(arg: Option<KindArg>, config: &ConfigFile) -> PeriodogramKind {
    match arg {
        Some(KindArg::First) => PeriodogramKind::First,
        Some(KindArg::Second) => PeriodogramKind::Second,
        None => config.kind.unwrap_or_default(),
    }
}

fn qgrid_of(flag: Option<&str>, config: &ConfigFile) -> Result<QuantileGrid> {
    match flag.or(config.alphas.as_deref()) {
        Some(text) => parse_qgrid(text),
        None => Ok(QuantileGrid::default()),
    }
}

fn returns(mut run: Run, args: &ReturnsArgs) -> Result<Outcome> {
    let prices = load_prices(&args.prices, &args.date_column, &args.close_column)?;
    let r = log_returns(&prices)?;
    let mut w = run.file("returns.csv")?;
    write_dated_values(&mut w, &prices.dates()[1..], "return", r.values())?;
    w.flush()?;
    let settings = json!({"date_column": args.date_column, "close_column": args.close_column});
    run.finish("returns", None, &[&args.prices], settings)?;
    Ok(Outcome::Done)
}

fn qfa(mut run: Run, args: &QfaArgs, config: &ConfigFile) -> Result<Outcome> {
    let series = load_input(&args.input)?;
    let kind = kind_of(args.kind, config);
    let qgrid = qgrid_of(args.alphas.as_deref(), config)?;
    let raw = quantile_periodogram(&series, &qgrid, kind)?;
    let normalized = normalize(&raw)?;
    let cumulative = cumulate(&normalized)?;

    for (name, m) in [
        ("raw.csv", &raw),
        ("normalized.csv", &normalized),
        ("cumulative.csv", &cumulative),
    ] {
        let mut w = run.file(name)?;
        m.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut w = run.file("lower_half.csv")?;
    normalized.lower_half().write_csv(&mut w)?;
    w.flush()?;
    run.json(
        "qfa.json",
        &json!({
            "raw": raw.to_json(),
            "normalized": normalized.to_json(),
            "cumulative": cumulative.to_json(),
        }),
    )?;
    let settings = json!({"kind": kind, "alphas": qgrid.levels(), "column": args.input.column});
    run.finish("qfa", None, &[&args.input.input], settings)?;
    Ok(Outcome::Done)
}

fn fit(mut run: Run, args: &FitArgs, config: &ConfigFile) -> Result<Outcome> {
    let series = load_input(&args.input)?;
    let family = match args.family {
        Some(FamilyArg::Garch) => Family::Garch11,
        Some(FamilyArg::Gjr) => Family::Gjr11,
        None => config.family.unwrap_or(Family::Garch11),
    };
    let fitted = fit_qmle(&series, family, FitOptions::default())?;
    let resid = fitted.residuals()?;
    let lb = ljung_box(resid, DIAGNOSTIC_LAGS, true, RESIDUAL_BURN)?;
    let lm = lm_arch(resid, DIAGNOSTIC_LAGS, RESIDUAL_BURN)?;

    run.json("model.json", &fitted.spec)?;
    let mut w = run.file("residuals.csv")?;
    write_values(&mut w, "residual", resid.values())?;
    w.flush()?;
    run.json(
        "fit.json",
        &json!({
            "spec": fitted.spec,
            "loglik": fitted.loglik,
            "converged": fitted.converged,
            "iterations": fitted.iterations,
            "persistence": fitted.spec.persistence(),
            "ljung_box": lb,
            "lm_arch": lm,
        }),
    )?;
    let settings = json!({
        "family": family,
        "column": args.input.column,
        "diagnostic_lags": DIAGNOSTIC_LAGS,
        "dropped_residuals": RESIDUAL_BURN,
    });
    run.finish("fit", None, &[&args.input.input], settings)?;
    Ok(if fitted.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

fn simulate_cmd(mut run: Run, args: &SimulateArgs, config: &ConfigFile, seed: u64) -> Result<Outcome> {
    let spec = load_model(&args.model)?;
    let n = args
        .n
        .or(config.n)
        .ok_or_else(|| Error::InvalidInput("simulate needs --n".into()))?;
    let opts = SimulateOptions {
        burn_in: args.burn_in.or(config.burn_in).unwrap_or(SimulateOptions::default().burn_in),
        allow_nonstationary: false,
    };
    let sim = simulate(&spec, n, seed, opts)?;
    let mut w = run.file("series.csv")?;
    write_values(&mut w, "x", sim.series.values())?;
    w.flush()?;
    let settings = json!({"n": n, "burn_in": opts.burn_in});
    run.finish("simulate", Some(seed), &[&args.model], settings)?;
    Ok(Outcome::Done)
}

fn test(mut run: Run, args: &TestArgs, config: &ConfigFile, seed: u64) -> Result<Outcome> {
    let series = load_input(&args.input)?;
    let qgrid = qgrid_of(args.alphas.as_deref(), config)?;
    let preset = match args.region {
        Some(RegionArg::Full) => RegionPreset::Full,
        Some(RegionArg::Middle) => RegionPreset::Middle,
        Some(RegionArg::Lower) => RegionPreset::Lower,
        Some(RegionArg::Upper) => RegionPreset::Upper,
        None => config.region.unwrap_or(RegionPreset::Full),
    };
    let region = build_region(
        preset,
        args.levels.as_deref().or(config.levels.as_deref()),
        args.band.as_deref().or(config.band.as_deref()),
    )?;
    let defaults = BootstrapOptions::default();
    let opts = BootstrapOptions {
        replicates: args.replicates.or(config.replicates).unwrap_or(defaults.replicates),
        realizations: args.realizations.or(config.realizations).unwrap_or(defaults.realizations),
        seed,
        rule: if args.plus_one {
            PValueRule::PlusOne
        } else {
            config.p_rule.unwrap_or_default()
        },
        drop_head: args.drop_head.or(config.drop_head).unwrap_or(defaults.drop_head),
        kind: kind_of(args.kind, config),
    };

    let require = |p: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        p.clone()
            .ok_or_else(|| Error::InvalidInput(format!("{flag} is required in this mode")))
    };
    let mut inputs: Vec<PathBuf> = vec![args.input.input.clone()];
    let report = match args.mode {
        ModeArg::Residual => residual_test(&series, &qgrid, &region, &opts)?,
        ModeArg::Direct => {
            let model = require(&args.model, "--model")?;
            let fitted = FitResult::evaluate(load_model(&model)?, &series)?;
            inputs.push(model);
            direct_test(&series, &fitted, &qgrid, &region, &opts)?
        }
        ModeArg::Discriminant => {
            let model = require(&args.model, "--model")?;
            let model_series = require(&args.model_series, "--model-series")?;
            let own = load_series(&model_series, None)?;
            let fitted = FitResult::evaluate(load_model(&model)?, &own)?;
            inputs.push(model);
            inputs.push(model_series);
            discriminant_test(&series, &fitted, &qgrid, &region, &opts)?
        }
    };
    let report = if args.elide_null {
        report.elide_null()
    } else {
        report
    };
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    run.json("report.json", &report)?;
    let settings = json!({
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "alphas": qgrid.levels(),
        "region": region,
        "options": opts,
        "column": args.input.column,
    });
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    run.finish("test", Some(seed), &input_refs, settings)?;
    Ok(Outcome::Done)
}

fn sensitivity(mut run: Run, args: &SensitivityArgs, config: &ConfigFile) -> Result<Outcome> {
    let rho = args.rho.or(config.rho).unwrap_or(0.1);
    let sigma = args.sigma.or(config.sigma).unwrap_or(0.003);
    let k = args.k.or(config.k).unwrap_or(999);
    let centers_text = args
        .centers
        .clone()
        .or(config.centers.clone())
        .unwrap_or_else(|| "0.02:0.48:0.01".into());
    let centers = parse_values(&centers_text)?;
    if k == 0 {
        return Err(Error::InvalidInput("--K must be at least 1".into()));
    }
    let grid = FrequencyGrid::new(2 * (k + 1))?;
    let angular: Vec<f64> = centers.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect();
    let profile = sensitivity_profile(rho, sigma, &grid, &angular)?;

    let mut w = run.file("profile.csv")?;
    profile.write_csv(&mut w)?;
    w.flush()?;
    run.json("profile.json", &profile)?;
    let settings = json!({"rho": rho, "sigma": sigma, "K": k, "centers": centers});
    run.finish("sensitivity", None, &[], settings)?;
    Ok(Outcome::Done)
}
