use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mqrlr(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqrlr"))
        .env_remove("MQRLR_OUT")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = mqrlr(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn synth(dir: &Path, n: usize, seed: u64) -> PathBuf {
    ok(dir, &["synth", "--beta1", "0.3", "--n", &n.to_string(), "--seed", &seed.to_string()]);
    dir.join("series.csv")
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn synth_writes_requested_rows_reproducibly() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let pa = synth(a.path(), 400, 7);
    let pb = synth(b.path(), 400, 7);
    assert_eq!(lines(&pa).len(), 401);
    assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
}

#[test]
fn nonstationary_synth_is_rejected() {
    let d = TempDir::new().unwrap();
    let o = mqrlr(d.path(), &["synth", "--beta1", "1.5"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stationarity"));
    assert!(!d.path().join("series.csv").exists());
}

#[test]
fn estimate_labels_follow_the_penalties() {
    let d = TempDir::new().unwrap();
    let input = synth(d.path(), 200, 1);
    let before = fs::read(&input).unwrap();
    for (l, g, label) in [("0", "0", "MQR-B1"), ("2", "0", "MQR-B2"), ("2", "1", "MQR-LR")] {
        let out = d.path().join(label);
        ok(&out, &["estimate", "--input", input.to_str().unwrap(), "--lambda", l, "--gamma", g]);
        assert!(lines(&out.join("model.txt")).contains(&format!("label {label}")));
        let coefs = lines(&out.join("coefficients.csv"));
        assert_eq!(coefs[0], "alpha,covariate,value");
        assert_eq!(coefs.len(), 1 + 2 * 19);
    }
    assert_eq!(fs::read(&input).unwrap(), before, "input file was modified");
}

#[test]
fn estimate_can_dump_the_lp() {
    let d = TempDir::new().unwrap();
    let input = synth(d.path(), 80, 1);
    ok(d.path(), &["estimate", "--input", input.to_str().unwrap(), "--grid", "0.25,0.5,0.75", "--dump-lp"]);
    let text = fs::read_to_string(d.path().join("lp.txt")).unwrap();
    assert!(text.starts_with("# lp vars="));
}

#[test]
fn missing_value_column_names_the_file() {
    let d = TempDir::new().unwrap();
    let bad = d.path().join("bad.csv");
    fs::write(&bad, "x\n1\n2\n3\n").unwrap();
    let o = mqrlr(d.path(), &["estimate", "--input", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.csv") && err.contains("value"), "{err}");
}

#[test]
fn calibrate_reports_every_cell_and_both_winners() {
    let d = TempDir::new().unwrap();
    let input = synth(d.path(), 200, 3);
    let args = ["--window", "80", "--n-windows", "10", "--lambdas", "0,1", "--gammas", "0,1,7"];
    let stdout = ok(d.path(), &[&["calibrate", "--input", input.to_str().unwrap()][..], &args].concat());
    assert!(stdout.contains("best_by_sic") && stdout.contains("best_by_mae"));
    let heat = lines(&d.path().join("heatmap.csv"));
    assert_eq!(heat[0], "lambda,gamma,metric,value");
    assert_eq!(heat.iter().filter(|l| l.ends_with(",sic") || l.contains(",sic,")).count(), 6);
    assert_eq!(heat.iter().filter(|l| l.contains(",mae,")).count(), 6);
    let table = lines(&d.path().join("calibration.csv"));
    assert_eq!(table[0], "model,horizon,lambda,gamma,sic,mae_percent");
    assert_eq!(table.len(), 3);
}

#[test]
fn one_by_one_grid_selects_its_only_cell() {
    let d = TempDir::new().unwrap();
    let input = synth(d.path(), 150, 3);
    let stdout = ok(
        d.path(),
        &["calibrate", "--input", input.to_str().unwrap(), "--window", "80", "--n-windows", "5", "--lambdas", "2.5", "--gammas", "1"],
    );
    assert!(stdout.contains("best_by_sic lambda=2.5 gamma=1"));
    assert!(stdout.contains("best_by_mae lambda=2.5 gamma=1"));
}

#[test]
fn simulate_shapes_seeds_and_clamp() {
    let d = TempDir::new().unwrap();
    let input = synth(d.path(), 200, 5);
    ok(d.path(), &["estimate", "--input", input.to_str().unwrap()]);
    let model = d.path().join("model.txt");
    let sim = |out: &Path, extra: &[&str]| {
        let base = ["simulate", "--model", model.to_str().unwrap(), "--history", input.to_str().unwrap()];
        ok(out, &[&base[..], extra].concat());
    };

    let single = d.path().join("single");
    sim(&single, &["--steps", "1", "--paths", "1"]);
    assert_eq!(lines(&single.join("scenarios.csv")).len(), 2);

    let (a, b) = (d.path().join("a"), d.path().join("b"));
    sim(&a, &["--steps", "4", "--paths", "50", "--seed", "9"]);
    sim(&b, &["--steps", "4", "--paths", "50", "--seed", "9"]);
    assert_eq!(fs::read(a.join("scenarios.csv")).unwrap(), fs::read(b.join("scenarios.csv")).unwrap());
    assert_eq!(fs::read(a.join("fans.csv")).unwrap(), fs::read(b.join("fans.csv")).unwrap());

    let c = d.path().join("c");
    sim(&c, &["--steps", "4", "--paths", "200", "--clamp", "-0.5", "0.5"]);
    for l in lines(&c.join("scenarios.csv")).iter().skip(1) {
        let v: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!((-0.5..=0.5).contains(&v), "{v}");
    }
}

#[test]
fn backtest_and_study_smoke() {
    let d = TempDir::new().unwrap();
    let input = synth(d.path(), 200, 2);
    ok(d.path(), &["backtest", "--input", input.to_str().unwrap(), "--window", "100", "--n-windows", "10", "--gamma", "1"]);
    let bt = lines(&d.path().join("backtest.csv"));
    assert!(bt[0].starts_with("window,tau,step,y_true,pinball,q_0.05"));
    assert_eq!(bt.len(), 11);
    assert_eq!(lines(&d.path().join("probprob.csv"))[0], "alpha,empirical_f");
    let report = lines(&d.path().join("report.csv"));
    assert_eq!(report[0], "model,horizon,lambda,gamma,sic,mae_percent");
    assert!(report[1].starts_with("MQR-LR,1,0,1,"));

    ok(d.path(), &["ar1study", "--replications", "1", "--n", "100"]);
    let slopes = lines(&d.path().join("slopes.csv"));
    assert_eq!(slopes[0], "alpha,model,replication,estimate");
    assert_eq!(slopes.len(), 1 + 19 * 2);
}

#[test]
fn failing_windows_give_nonzero_exit() {
    let d = TempDir::new().unwrap();
    let flat = d.path().join("flat.csv");
    fs::write(&flat, std::iter::once("value".to_string()).chain((0..60).map(|_| "1.0".into())).collect::<Vec<_>>().join("\n")).unwrap();
    let o = mqrlr(d.path(), &["backtest", "--input", flat.to_str().unwrap(), "--window", "30", "--n-windows", "10"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed windows"));
}

#[test]
fn flags_override_the_config_file_and_env_sets_output() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, "n = 120\nbeta1 = 0.5\nseed = 4\n").unwrap();
    let env_out = d.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_mqrlr"))
        .env("MQRLR_OUT", &env_out)
        .args(["--config", cfg.to_str().unwrap(), "synth", "--n", "60"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&env_out.join("series.csv")).len(), 61);

    fs::write(&cfg, "nonsense_key = 1\n").unwrap();
    let o = mqrlr(d.path(), &["--config", cfg.to_str().unwrap(), "synth"]);
    assert!(!o.status.success());
}
