use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Datelike, NaiveDate, Weekday};
use serde_json::Value;

use recstats::distributions::DistributionSpec;
use recstats::montecarlo::substream;
use recstats::processes::ProcessConfig;

fn recstats(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recstats")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = recstats(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn json(p: PathBuf) -> Value {
    serde_json::from_str(&read(p)).unwrap()
}

/// Long-format GRM panel on business days.
fn write_panel(path: &Path, tickers: usize, days: usize, seed: u64) {
    let cfg = ProcessConfig::random_walk(DistributionSpec::gaussian(0.01).unwrap(), 0.0005);
    let dates: Vec<NaiveDate> = NaiveDate::from_ymd_opt(2010, 1, 4)
        .unwrap()
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(days)
        .collect();
    let mut out = String::from("date,ticker,close\n");
    for t in 0..tickers {
        let lp = cfg.generate(days - 1, &mut substream(seed, t as u64)).unwrap().values;
        for (d, x) in dates.iter().zip(lp) {
            writeln!(out, "{d},S{t},{}", 50.0 * x.exp()).unwrap();
        }
    }
    std::fs::write(path, out).unwrap();
}

#[test]
fn formulas_rw_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["formulas", "--rw", "--n-max", "4", "--out-dir", s(dir.path())]);
    let text = read(dir.path().join("formulas_rw.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,exact_rate,asymptotic_rate,exact_mean,asymptotic_mean");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    // C(2n, n) / 4^n and its partial sums
    let exact = [(1.0, 0.5, 1.5), (2.0, 0.375, 1.875), (3.0, 0.3125, 2.1875), (4.0, 0.2734375, 2.4609375)];
    assert_eq!(rows.len(), 4);
    for (row, (n, q, m)) in rows.iter().zip(exact) {
        assert_eq!(row[0], n);
        assert!((row[1] - q).abs() < 1e-12 && (row[3] - m).abs() < 1e-12, "{row:?}");
    }
    let manifest = json(dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "formulas");
    assert!(manifest["invocation"].as_str().unwrap().starts_with("recstats formulas --rw"));
    assert_eq!(manifest["files"][0]["file"], "formulas_rw.csv");
}

#[test]
fn simulate_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        ok(&[
            "simulate", "--process", "ar1", "--alpha", "0.9", "--n", "60", "--replicas", "3000", "--seed", "5",
            "--workers", workers, "--out-dir", s(&out),
        ]);
        out
    };
    let (a, b) = (run("a", "1"), run("b", "3"));
    for f in ["rates_upper.csv", "rates_lower.csv", "record_numbers_upper.csv", "report.json"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    let report = json(a.join("report.json"));
    assert_eq!(report["metadata"]["master_seed"], 5);
}

#[test]
fn exit_codes() {
    assert_eq!(recstats(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(recstats(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let out = recstats(&["simulate", "--n", "10", "--replicas", "0", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let missing = dir.path().join("nope.csv");
    assert_eq!(recstats(&["analyze", "--input", s(&missing)]).status.code(), Some(1));
    let out = recstats(&["simulate", "--process", "garch11", "--alpha1", "0.5", "--beta1", "0.6", "--n", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_weekly_and_fit_on_a_panel() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    write_panel(&panel, 6, 300, 11);
    let out = dir.path().join("analyze");
    ok(&["analyze", "--input", s(&panel), "--interval", "100", "--normalize", "--out-dir", s(&out)]);
    let summary = json(out.join("summary.json"));
    assert_eq!(summary["tickers"], 6);
    assert_eq!(summary["intervals"], 3);
    assert_eq!(summary["drift"]["sigma"].as_f64().unwrap(), 1.0);
    let ratio = summary["drift"]["raw_c_over_sigma"].as_f64().unwrap();
    assert!((ratio - 0.05).abs() < 0.05, "{ratio}");
    let price = read(out.join("price_records.csv"));
    assert!(price.starts_with("n,upper_rate,"));
    assert_eq!(price.lines().count(), 101);
    let manifest = json(out.join("manifest.json"));
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap()).collect();
    for f in ["price_records.csv", "return_records.csv", "np_n_upper.csv", "top_days_lower.csv", "summary.json"] {
        assert!(files.contains(&f), "{f} missing from {files:?}");
        assert!(out.join(f).exists());
    }

    let out = dir.path().join("weekly");
    ok(&["weekly", "--input", s(&panel), "--out-dir", s(&out)]);
    let weekly = read(out.join("weekly.csv"));
    let rows: Vec<&str> = weekly.lines().collect();
    assert_eq!(rows[0], "weekday,upper,lower,upper_ratio,lower_ratio");
    assert_eq!(rows.len(), 6);
    assert!(rows[1].starts_with("Monday,") && rows[1].ends_with(",1,1"));

    let out = dir.path().join("fit");
    ok(&["fit", "--input", s(&panel), "--ticker", "S2", "--no-garch", "--out-dir", s(&out)]);
    let fits = json(out.join("fits.json"));
    let fits = fits.as_array().unwrap();
    assert_eq!(fits.len(), 1);
    assert_eq!(fits[0]["ticker"], "S2");
}

#[test]
fn ensemble_and_fpt_simulated() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ens");
    ok(&["ensemble", "--walkers", "2,8", "--n", "80", "--replicas", "500", "--out-dir", s(&out)]);
    assert!(read(out.join("collapse.csv")).starts_with("n,N2,N8,spread\n"));
    let n8 = read(out.join("ensemble_N8.csv"));
    assert!(n8.starts_with("walkers,n,rate,stderr,mean_records,mean_records_stderr\n"));
    assert_eq!(n8.lines().count(), 82);

    let out = dir.path().join("fpt");
    ok(&["fpt", "--windows", "4,16", "--replicas", "20000", "--out-dir", s(&out)]);
    let text = read(out.join("fpt.csv"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let pm = header.iter().position(|h| *h == "partial_mean_pos").unwrap();
    let sw = header.iter().position(|h| *h == "symmetric_walk").unwrap();
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        // E[T; T <= N] = N Q_N exactly for a symmetric continuous walk
        let n = v[0] as u64;
        let mut q = 1.0;
        for k in 1..=n {
            q *= (2 * k - 1) as f64 / (2 * k) as f64;
        }
        assert!((v[pm] - n as f64 * q).abs() < 0.05 * n as f64 * q, "{line}");
        assert!(v[sw] > 0.0);
    }
}
