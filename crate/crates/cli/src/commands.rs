use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use mqrlr::calibrate::{grid_search, write_heatmap_csv, write_table_csv, CalibrationContext, Metric, ThetaGrid, DEFAULT_ZERO_TOL};
use mqrlr::data::{build_lag_matrix, normalize, read_series_csv, write_series_csv, QuantileGrid};
use mqrlr::evalharness::{
    generate_ar1, run_ar1_study, run_backtest, write_backtest_csv, write_prob_prob_csv, write_slope_summary_csv,
    write_slopes_csv, Ar1StudyConfig, BacktestConfig,
};
use mqrlr::lp::SolverOptions;
use mqrlr::mqr::{build_lp, estimate, read_model, write_coefficients_csv, write_model, RegPair};
use mqrlr::scenario::{quantiles_from_paths, sample_paths, write_fans_csv, write_scenarios_csv, PathMode, SimConfig};

use crate::config::FileConfig;
use crate::{
    Ar1Args, Ar1Params, BacktestArgs, CalibrateArgs, Cli, Command, EstimateArgs, MetricArg, ModelParams, RollingParams,
    SimulateArgs, SynthArgs,
};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_WINDOW: usize = 240;
const DEFAULT_N_WINDOWS: usize = 100;
const DEFAULT_PATHS: usize = 1000;

/// Settings shared by every subcommand.
struct Global {
    seed: u64,
    out: PathBuf,
    opts: SolverOptions,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let opts = SolverOptions {
        feas_tol: cli.feas_tol.or(file.feas_tol).unwrap_or(SolverOptions::default().feas_tol),
        opt_tol: cli.opt_tol.or(file.opt_tol).unwrap_or(SolverOptions::default().opt_tol),
        ..SolverOptions::default()
    };
    ensure!(opts.feas_tol > 0.0 && opts.opt_tol > 0.0, "solver tolerances must be positive");
    let g = Global {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        opts,
    };
    if let Some(t) = cli.threads.or(file.threads) {
        ensure!(t >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth(&g, &file, a),
        Command::Estimate(a) => estimate_cmd(&g, &file, a),
        Command::Calibrate(a) => calibrate(&g, &file, a),
        Command::Simulate(a) => simulate(&g, &file, a),
        Command::Backtest(a) => backtest(&g, &file, a),
        Command::Ar1study(a) => ar1study(&g, &file, a),
    }
}

fn output_dir(g: &Global) -> Result<&Path> {
    fs::create_dir_all(&g.out).with_context(|| format!("creating output directory {}", g.out.display()))?;
    Ok(&g.out)
}

fn grid(flag: &Option<Vec<f64>>, file: &FileConfig) -> Result<QuantileGrid> {
    match flag.clone().or(file.grid.clone()) {
        Some(a) => Ok(QuantileGrid::new(a)?),
        None => Ok(QuantileGrid::default_grid()),
    }
}

fn model_params(m: &ModelParams, file: &FileConfig) -> Result<(QuantileGrid, Vec<usize>)> {
    let lags = m.lags.clone().or(file.lags.clone()).unwrap_or_else(|| vec![1]);
    ensure!(!lags.is_empty() && lags.iter().all(|&l| l > 0), "lags must be positive");
    Ok((grid(&m.grid, file)?, lags))
}

fn theta(lambda: Option<f64>, gamma: Option<f64>, file: &FileConfig) -> Result<RegPair> {
    Ok(RegPair::new(lambda.or(file.lambda).unwrap_or(0.0), gamma.or(file.gamma).unwrap_or(0.0))?)
}

fn clamp(flag: &Option<Vec<f64>>, file: &FileConfig) -> Result<Option<(f64, f64)>> {
    let c = match flag {
        Some(v) => Some((v[0], v[1])),
        None => file.clamp.map(|[lo, hi]| (lo, hi)),
    };
    if let Some((lo, hi)) = c {
        ensure!(lo.is_finite() && hi.is_finite() && lo <= hi, "clamp needs finite LO <= HI, got [{lo}, {hi}]");
    }
    Ok(c)
}

fn mode(pooled: bool, file: &FileConfig) -> PathMode {
    if pooled || file.pooled.unwrap_or(false) {
        PathMode::Pooled
    } else {
        PathMode::PerPath
    }
}

fn ar1_config(g: &Global, p: &Ar1Params, file: &FileConfig) -> Ar1StudyConfig {
    let d = Ar1StudyConfig::default();
    Ar1StudyConfig {
        beta0: p.beta0.or(file.beta0).unwrap_or(d.beta0),
        beta1: p.beta1.or(file.beta1).unwrap_or(d.beta1),
        sigma: p.sigma.or(file.sigma).unwrap_or(d.sigma),
        n: p.n.or(file.n).unwrap_or(d.n),
        seed: g.seed,
        ..d
    }
}

fn synth(g: &Global, file: &FileConfig, a: SynthArgs) -> Result<()> {
    let cfg = ar1_config(g, &a.ar1, file);
    cfg.validate()?;
    let series = generate_ar1(&cfg, a.replication)?;
    let path = output_dir(g)?.join(&a.file);
    write_series_csv(&path, &series)?;
    println!("wrote {} observations to {}", series.len(), path.display());
    Ok(())
}

fn estimate_cmd(g: &Global, file: &FileConfig, a: EstimateArgs) -> Result<()> {
    let (grid, lags) = model_params(&a.model, file)?;
    let theta = theta(a.lambda, a.gamma, file)?;
    let frame = read_series_csv(&a.input)?;
    let max_lag = *lags.iter().max().unwrap();
    let mut exog = Vec::new();
    for name in &a.exog {
        let Some((_, col)) = frame.extra.iter().find(|(n, _)| n == name) else {
            bail!("column `{name}` not found in {}", a.input.display());
        };
        ensure!(col.len() > max_lag, "series too short for maximum lag {max_lag}");
        exog.push((name.clone(), col[max_lag..].to_vec()));
    }
    let data = build_lag_matrix(&frame.series, &lags)?.with_columns(&exog)?;
    let model = estimate(&data, &grid, theta, &g.opts).context("estimation failed")?;

    let dir = output_dir(g)?;
    write_model(&dir.join("model.txt"), &model)?;
    write_coefficients_csv(&dir.join("coefficients.csv"), &model)?;
    if a.dump_lp {
        let (std_data, _) = normalize(&data)?;
        let lp = build_lp(&std_data, &grid, theta, &model.weights)?;
        let f = fs::File::create(dir.join("lp.txt"))?;
        lp.write_text(std::io::BufWriter::new(f))?;
    }
    println!("model {} objective {}", model.label(), model.objective);
    Ok(())
}

struct Rolling {
    window: usize,
    n_windows: usize,
    horizon: usize,
    paths: usize,
    clamp: Option<(f64, f64)>,
    mode: PathMode,
}

fn rolling(r: &RollingParams, file: &FileConfig) -> Result<Rolling> {
    let out = Rolling {
        window: r.window.or(file.window).unwrap_or(DEFAULT_WINDOW),
        n_windows: r.n_windows.or(file.n_windows).unwrap_or(DEFAULT_N_WINDOWS),
        horizon: r.horizon.or(file.horizon).unwrap_or(1),
        paths: r.paths.or(file.paths).unwrap_or(DEFAULT_PATHS),
        clamp: clamp(&r.clamp, file)?,
        mode: mode(r.pooled, file),
    };
    ensure!(out.n_windows >= 1 && out.horizon >= 1 && out.paths >= 1, "n_windows, horizon and paths must be at least 1");
    Ok(out)
}

fn backtest_config(g: &Global, grid: QuantileGrid, lags: Vec<usize>, theta: RegPair, r: &Rolling) -> BacktestConfig {
    BacktestConfig {
        grid,
        seed: g.seed,
        paths: r.paths,
        clamp: r.clamp,
        mode: r.mode,
        ..BacktestConfig::new(r.window, r.n_windows, r.horizon, lags, theta)
    }
}

fn calibrate(g: &Global, file: &FileConfig, a: CalibrateArgs) -> Result<()> {
    let (grid, lags) = model_params(&a.model, file)?;
    let r = rolling(&a.rolling, file)?;
    let d = ThetaGrid::default_grid();
    let thetas = ThetaGrid::new(
        a.lambdas.or(file.lambdas.clone()).unwrap_or_else(|| d.lambdas().to_vec()),
        a.gammas.or(file.gammas.clone()).unwrap_or_else(|| d.gammas().to_vec()),
    )?;
    let metric = match a.metric {
        Some(MetricArg::Sic) => Metric::Sic,
        Some(MetricArg::Mae) => Metric::Mae,
        Some(MetricArg::Both) => Metric::Both,
        None => match file.metric.as_deref() {
            None | Some("both") => Metric::Both,
            Some("sic") => Metric::Sic,
            Some("mae") => Metric::Mae,
            Some(other) => bail!("unknown metric `{other}` (expected sic, mae or both)"),
        },
    };
    let series = read_series_csv(&a.input)?.series;
    let spec = backtest_config(g, grid, lags, RegPair::unregularized(), &r).spec(series.len())?;
    let ctx = CalibrationContext { series: &series, spec, opts: g.opts, zero_tol: DEFAULT_ZERO_TOL };
    let report = grid_search(&thetas, metric, &ctx)?;

    let dir = output_dir(g)?;
    write_heatmap_csv(&dir.join("heatmap.csv"), &report)?;
    write_table_csv(&dir.join("calibration.csv"), &report.table_rows())?;
    for (name, best) in [("best_by_sic", report.best_by_sic), ("best_by_mae", report.best_by_mae)] {
        if let Some(t) = best {
            println!("{name} lambda={} gamma={}", t.lambda, t.gamma);
        }
    }
    let failed = report.rows.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} cells failed", report.rows.len());
    }
    Ok(())
}

fn simulate(g: &Global, file: &FileConfig, a: SimulateArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let history = read_series_csv(&a.history)?.series;
    let cfg = SimConfig {
        steps: a.steps.or(file.horizon).unwrap_or(1),
        paths: a.paths.or(file.paths).unwrap_or(DEFAULT_PATHS),
        seed: g.seed,
        clamp: clamp(&a.clamp, file)?,
        mode: mode(a.pooled, file),
    };
    cfg.validate()?;
    let scen = sample_paths(&model, &history, &cfg)?;
    let fans = (1..=cfg.steps).map(|k| quantiles_from_paths(&scen, &model.grid, k)).collect::<Result<Vec<_>, _>>()?;

    let dir = output_dir(g)?;
    write_scenarios_csv(&dir.join("scenarios.csv"), &scen)?;
    write_fans_csv(&dir.join("fans.csv"), &fans)?;
    println!("simulated {} paths x {} steps ({} rearranged fans)", scen.n_paths(), scen.n_steps(), scen.rearrangements);
    Ok(())
}

fn backtest(g: &Global, file: &FileConfig, a: BacktestArgs) -> Result<()> {
    let (grid, lags) = model_params(&a.model, file)?;
    let theta = theta(a.lambda, a.gamma, file)?;
    let r = rolling(&a.rolling, file)?;
    let cfg = backtest_config(g, grid, lags, theta, &r);
    cfg.validate()?;
    let series = read_series_csv(&a.input)?.series;
    let report = run_backtest(&series, &cfg, &g.opts)?;

    let dir = output_dir(g)?;
    write_backtest_csv(&dir.join("backtest.csv"), &report)?;
    write_prob_prob_csv(&dir.join("probprob.csv"), &report)?;
    write_table_csv(&dir.join("report.csv"), &[report.table_row()])?;
    println!(
        "{} windows ({} failed): MAE {:.4}%, extreme MAE {}",
        report.run.forecasts.len(),
        report.run.failed.len(),
        100.0 * report.mae,
        report.extreme_mae.map_or("n/a".to_string(), |m| format!("{:.4}%", 100.0 * m))
    );
    Ok(())
}

fn ar1study(g: &Global, file: &FileConfig, a: Ar1Args) -> Result<()> {
    let d = Ar1StudyConfig::default();
    let cfg = Ar1StudyConfig {
        replications: a.replications.or(file.replications).unwrap_or(d.replications),
        gamma_grid: a.gamma_grid.or(file.gamma_grid.clone()).unwrap_or(d.gamma_grid.clone()),
        folds: a.folds.or(file.folds).unwrap_or(d.folds),
        ..ar1_config(g, &a.ar1, file)
    };
    cfg.validate()?;
    let grid = grid(&a.grid, file)?;
    let report = run_ar1_study(&cfg, &grid, &g.opts)?;

    let dir = output_dir(g)?;
    write_slopes_csv(&dir.join("slopes.csv"), &report)?;
    write_slope_summary_csv(&dir.join("slope_summary.csv"), &report)?;
    println!("{} replications ({} failed)", report.replications.len(), report.failed.len());
    Ok(())
}
