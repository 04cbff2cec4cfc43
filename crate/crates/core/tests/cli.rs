mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::fixture_path;
use serde_json::Value;

fn parkgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parkgrid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn fixture_arg() -> String {
    fixture_path().display().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn run_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = parkgrid(&["run", "--scenario", &fixture_arg(), "--method", "proposed", "--out", out]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let summary: Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["method"], "proposed");
    assert_eq!(summary["accounting"], "offset_and_sell");
    assert_eq!(summary["scenario_digest"].as_str().unwrap().len(), 64);

    let (header, rows) = read_csv(&dir.path().join("timeseries.csv"));
    assert_eq!(header, parkgrid::cli::TIMESERIES_COLUMNS);
    assert_eq!(rows.len(), 96);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (mut cost, mut grid_kwh, mut discharge_kwh, mut peak) = (0.0, 0.0, 0.0, 0.0f64);
    for row in &rows {
        let supply = row[col("grid_to_load")] + row[col("grid_to_ev")] + row[col("pv_to_load")]
            + row[col("pv_to_ev")]
            + row[col("ev_discharge")];
        let demand = row[col("base_kw")] + row[col("ev_charge")] + row[col("export")];
        assert!(close(supply, demand), "slot {}: {supply} vs {demand}", row[0]);
        let grid = row[col("grid_to_load")] + row[col("grid_to_ev")];
        cost += row[col("cost_usd")];
        grid_kwh += grid * 0.25;
        discharge_kwh += row[col("ev_discharge")] * 0.25;
        peak = peak.max(grid);
    }
    let totals = &summary["totals"];
    assert!(close(cost, totals["cost_usd"].as_f64().unwrap()));
    assert!(close(grid_kwh, totals["grid_kwh"].as_f64().unwrap()));
    assert!(close(discharge_kwh, totals["discharge_kwh"].as_f64().unwrap()));
    assert!(close(peak, totals["peak_grid_kw"].as_f64().unwrap()));

    let (soc_header, soc_rows) = read_csv(&dir.path().join("soc.csv"));
    assert_eq!(soc_header.len(), 51);
    assert_eq!(soc_rows.len(), 96);
}

#[test]
fn uncontrolled_charges_from_arrival() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&parkgrid(&["run", "--scenario", &fixture_arg(), "--method", "uncontrolled", "--out", out])), 0);
    let (_, rows) = read_csv(&dir.path().join("timeseries.csv"));
    // arrivals fall in 15:00-21:00; every EV starts charging on arrival
    let evening: f64 = rows[60..84].iter().map(|r| r[7]).sum();
    let night: f64 = rows[84..96].iter().chain(&rows[0..36]).map(|r| r[7]).sum();
    assert!(evening > night, "{evening} vs {night}");
}

#[test]
fn proposed_discharges_when_net_load_is_high() {
    let config = common::fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&parkgrid(&["run", "--scenario", &fixture_arg(), "--out", out])), 0);
    let (_, rows) = read_csv(&dir.path().join("timeseries.csv"));
    let flag = config.scenario.flag_power;
    assert!(rows.iter().any(|r| r[1] - r[2] >= flag && r[8] > 0.0));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let res = parkgrid(&["compare", "--scenario", &fixture_arg(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&res), 0);
    }
    for rel in ["compare.json", "proposed/timeseries.csv", "uncontrolled/soc.csv", "scheduling_only/summary.json"] {
        assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn overrides_change_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let scenario = fixture_arg();
    let digest = |extra: &[&str]| {
        let mut args = vec!["run", "--scenario", scenario.as_str(), "--out", out];
        args.extend_from_slice(extra);
        assert_eq!(code(&parkgrid(&args)), 0);
        let s: Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
        (s["scenario_digest"].as_str().unwrap().to_string(), s["flag_power_kw"].as_f64().unwrap())
    };
    let (base, auto_flag) = digest(&[]);
    let (same, _) = digest(&["--flag-power", "auto"]);
    let (seeded, _) = digest(&["--seed", "2"]);
    let (flagged, flag) = digest(&["--flag-power", "150"]);
    assert_eq!(base, same);
    assert_ne!(base, seeded);
    assert_ne!(base, flagged);
    assert!((auto_flag - 127.916667).abs() < 1e-6);
    assert_eq!(flag, 150.0);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = ["sweep", "--scenario", &fixture_arg(), "--param", "flag_power", "--values", "50,100,150,200", "--out", out];
    assert_eq!(code(&parkgrid(&args)), 0);
    let first = fs::read(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(code(&parkgrid(&args)), 0);
    assert_eq!(first, fs::read(dir.path().join("sweep.csv")).unwrap());
    let (header, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(header[0], "flag_power");
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![50.0, 100.0, 150.0, 200.0]);
}

#[test]
fn gen_fleet_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let res = parkgrid(&["gen-fleet", "--n", "20", "--seed", "4", "--mode-split", "0.25", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let fleet = parkgrid::fleet::load_fleet(&path, 1.0, 1.0).unwrap();
    assert_eq!(fleet.len(), 20);
    assert_eq!(fleet.iter().filter(|ev| ev.mode == parkgrid::model::ChargeMode::M2).count(), 5);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&parkgrid(&[])), 1);
    assert_eq!(code(&parkgrid(&["run"])), 1);
    assert_eq!(code(&parkgrid(&["run", "--scenario", &fixture_arg(), "--method", "greedy"])), 1);
    assert_eq!(code(&parkgrid(&["sweep", "--scenario", &fixture_arg(), "--param", "soc_mean", "--values", "1"])), 1);
    assert_eq!(code(&parkgrid(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let res = parkgrid(&["run", "--scenario", missing.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(!res.stderr.is_empty());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[tariff]\nsmp = 0.09\n").unwrap();
    let out = dir.path().join("out");
    let res = parkgrid(&["run", "--scenario", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("base_load"));
    assert!(!out.join("summary.json").exists());
}
