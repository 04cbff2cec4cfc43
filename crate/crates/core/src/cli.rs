//! The `run`, `compare`, `gen-fleet`, and `sweep` commands.
//!
//! Every command writes into its own output directory. Numbers in emitted
//! files carry nine significant digits (see [`crate::format`]).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::dispatch::{simulate, SimulationResult, Totals};
use crate::fleet::{sample_fleet, FleetConfig};
use crate::format::{fmt_sig, round_sig};
use crate::ingest::ScenarioConfig;
use crate::model::{EvSpec, TimeGrid};
use crate::policy::Method;
use crate::{Error, Result};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SOC_FILE: &str = "soc.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARE_FILE: &str = "compare.json";
pub const SWEEP_FILE: &str = "sweep.csv";

pub const TIMESERIES_COLUMNS: [&str; 13] = [
    "slot",
    "base_kw",
    "pv_kw",
    "grid_to_load",
    "grid_to_ev",
    "pv_to_load",
    "pv_to_ev",
    "ev_charge",
    "ev_discharge",
    "export",
    "cost_usd",
    "grid_rate",
    "pv_rate",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportTotals {
    pub cost_usd: f64,
    pub grid_kwh: f64,
    pub pv_kwh: f64,
    pub discharge_kwh: f64,
    pub peak_grid_kw: f64,
}

impl From<&Totals> for ReportTotals {
    fn from(t: &Totals) -> Self {
        Self {
            cost_usd: round_sig(t.cost_usd),
            grid_kwh: round_sig(t.grid_kwh),
            pv_kwh: round_sig(t.pv_kwh),
            discharge_kwh: round_sig(t.discharge_kwh),
            peak_grid_kw: round_sig(t.peak_grid_kw),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepartureSummary {
    pub count: usize,
    pub min_soc: Option<f64>,
    pub mean_soc: Option<f64>,
    pub below_target: usize,
}

impl DepartureSummary {
    fn new(result: &SimulationResult, fleet: &[EvSpec]) -> Self {
        let socs = &result.departure_soc;
        let (min, mean) = if socs.is_empty() {
            (None, None)
        } else {
            let min = socs.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = socs.iter().sum::<f64>() / socs.len() as f64;
            (Some(round_sig(min)), Some(round_sig(mean)))
        };
        let below_target = socs
            .iter()
            .zip(fleet)
            .filter(|(soc, ev)| **soc < ev.target_soc - 1e-9)
            .count();
        Self {
            count: socs.len(),
            min_soc: min,
            mean_soc: mean,
            below_target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario_digest: String,
    pub method: Method,
    pub flag_power_kw: f64,
    pub accounting: String,
    pub totals: ReportTotals,
    pub departure: DepartureSummary,
    /// Emitted files, relative to the output directory.
    pub files: Vec<String>,
}

fn simulate_checked(config: &ScenarioConfig, fleet: &[EvSpec], method: Method) -> Result<SimulationResult> {
    let result = simulate(&config.scenario, fleet, method)?;
    result.audit(&config.scenario, fleet)?;
    Ok(result)
}

fn timeseries_csv(config: &ScenarioConfig, result: &SimulationResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMESERIES_COLUMNS)?;
    let tariffs = &config.scenario.tariffs;
    for d in &result.slots {
        let values = [
            d.base_load,
            d.pv_available,
            d.grid_to_load,
            d.grid_to_ev,
            d.pv_to_load,
            d.pv_to_ev,
            d.ev_charge_total,
            d.ev_discharge_total,
            d.export,
            d.cost,
            tariffs.grid_rates()[d.slot],
            tariffs.pv_rates()[d.slot],
        ];
        let mut record = vec![d.slot.to_string()];
        record.extend(values.iter().map(|v| fmt_sig(*v)));
        w.write_record(&record)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn soc_csv(result: &SimulationResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["slot".to_string()];
    header.extend(result.ev_ids.iter().cloned());
    w.write_record(&header)?;
    for (t, row) in result.soc.iter().enumerate() {
        let mut record = vec![t.to_string()];
        record.extend(row.iter().map(|v| fmt_sig(*v)));
        w.write_record(&record)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write_run(out_dir: &Path, config: &ScenarioConfig, fleet: &[EvSpec], result: &SimulationResult) -> Result<RunReport> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(TIMESERIES_FILE), timeseries_csv(config, result)?)?;
    fs::write(out_dir.join(SOC_FILE), soc_csv(result)?)?;
    let report = RunReport {
        scenario_digest: config.digest(),
        method: result.method,
        flag_power_kw: round_sig(config.scenario.flag_power),
        accounting: config.scenario.options.accounting.to_string(),
        totals: ReportTotals::from(&result.totals),
        departure: DepartureSummary::new(result, fleet),
        files: vec![TIMESERIES_FILE.into(), SOC_FILE.into(), SUMMARY_FILE.into()],
    };
    fs::write(out_dir.join(SUMMARY_FILE), to_json(&report)?)?;
    Ok(report)
}

/// Simulates one method and writes `timeseries.csv`, `soc.csv`, and `summary.json`.
pub fn cmd_run(config: &ScenarioConfig, method: Method, out_dir: &Path) -> Result<RunReport> {
    let fleet = config.fleet_specs()?;
    let result = simulate_checked(config, &fleet, method)?;
    write_run(out_dir, config, &fleet, &result)
}

/// `(baseline − proposed) / baseline × 100`; `None` for a zero baseline.
pub fn reduction_pct(baseline: f64, proposed: f64) -> Option<f64> {
    if baseline == 0.0 {
        None
    } else {
        Some((baseline - proposed) / baseline * 100.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reductions {
    pub baseline: Method,
    pub cost_pct: Option<f64>,
    pub grid_energy_pct: Option<f64>,
    pub peak_grid_pct: Option<f64>,
}

impl Reductions {
    fn new(baseline: Method, base: &Totals, proposed: &Totals) -> Self {
        let pct = |b, p| reduction_pct(b, p).map(round_sig);
        Self {
            baseline,
            cost_pct: pct(base.cost_usd, proposed.cost_usd),
            grid_energy_pct: pct(base.grid_kwh, proposed.grid_kwh),
            peak_grid_pct: pct(base.peak_grid_kw, proposed.peak_grid_kw),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodTotals {
    pub method: Method,
    pub totals: ReportTotals,
    pub departures_below_target: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub scenario_digest: String,
    pub flag_power_kw: f64,
    pub accounting: String,
    pub n_evs: usize,
    pub methods: Vec<MethodTotals>,
    pub reductions: Vec<Reductions>,
}

impl CompareReport {
    pub fn totals(&self, method: Method) -> &ReportTotals {
        &self
            .methods
            .iter()
            .find(|m| m.method == method)
            .expect("every method is reported")
            .totals
    }

    /// Fixed-width table for the terminal.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "flag power {} kW, accounting {}, {} EVs",
            fmt_sig(self.flag_power_kw),
            self.accounting,
            self.n_evs
        );
        let _ = writeln!(
            s,
            "{:<16} {:>12} {:>12} {:>12} {:>14} {:>12}",
            "method", "cost $", "grid kWh", "pv kWh", "discharge kWh", "peak kW"
        );
        for m in &self.methods {
            let t = &m.totals;
            let _ = writeln!(
                s,
                "{:<16} {:>12.3} {:>12.3} {:>12.3} {:>14.3} {:>12.3}",
                m.method.as_str(),
                t.cost_usd,
                t.grid_kwh,
                t.pv_kwh,
                t.discharge_kwh,
                t.peak_grid_kw
            );
        }
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}%"));
        for r in &self.reductions {
            let _ = writeln!(
                s,
                "proposed vs {:<16} cost {:>8}  grid energy {:>8}  peak {:>8}",
                r.baseline.as_str(),
                pct(r.cost_pct),
                pct(r.grid_energy_pct),
                pct(r.peak_grid_pct)
            );
        }
        s
    }
}

fn compare_results(config: &ScenarioConfig, fleet: &[EvSpec]) -> Result<Vec<SimulationResult>> {
    Method::ALL
        .iter()
        .map(|&m| simulate_checked(config, fleet, m))
        .collect()
}

fn compare_report(config: &ScenarioConfig, fleet: &[EvSpec], results: &[SimulationResult]) -> CompareReport {
    let proposed = &results[0].totals;
    CompareReport {
        scenario_digest: config.digest(),
        flag_power_kw: round_sig(config.scenario.flag_power),
        accounting: config.scenario.options.accounting.to_string(),
        n_evs: fleet.len(),
        methods: results
            .iter()
            .map(|r| MethodTotals {
                method: r.method,
                totals: ReportTotals::from(&r.totals),
                departures_below_target: DepartureSummary::new(r, fleet).below_target,
            })
            .collect(),
        reductions: results[1..]
            .iter()
            .map(|r| Reductions::new(r.method, &r.totals, proposed))
            .collect(),
    }
}

/// Runs all three methods on one fleet. Writes `compare.json` plus a run
/// directory per method.
pub fn cmd_compare(config: &ScenarioConfig, out_dir: &Path) -> Result<CompareReport> {
    let fleet = config.fleet_specs()?;
    let results = compare_results(config, &fleet)?;
    fs::create_dir_all(out_dir)?;
    for r in &results {
        write_run(&out_dir.join(r.method.as_str()), config, &fleet, r)?;
    }
    let report = compare_report(config, &fleet, &results);
    fs::write(out_dir.join(COMPARE_FILE), to_json(&report)?)?;
    Ok(report)
}

/// Sweeps the flag power, one `compare` per value. Rows keep input order.
pub fn cmd_sweep(config: &ScenarioConfig, values: &[f64], out_dir: &Path) -> Result<Vec<CompareReport>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let fleet = config.fleet_specs()?;
    let mut reports = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = config.clone();
        c.set_flag_power(Some(v))?;
        let results = compare_results(&c, &fleet)?;
        reports.push(compare_report(&c, &fleet, &results));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["flag_power".to_string()];
    for m in Method::ALL {
        for col in ["cost_usd", "grid_kwh", "pv_kwh", "discharge_kwh", "peak_grid_kw"] {
            header.push(format!("{m}_{col}"));
        }
    }
    for m in &Method::ALL[1..] {
        header.push(format!("cost_reduction_vs_{m}_pct"));
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
    for (&v, report) in values.iter().zip(&reports) {
        let mut row = vec![fmt_sig(v)];
        for m in &report.methods {
            let t = &m.totals;
            row.extend([t.cost_usd, t.grid_kwh, t.pv_kwh, t.discharge_kwh, t.peak_grid_kw].map(fmt_sig));
        }
        row.extend(report.reductions.iter().map(|r| opt(r.cost_pct)));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(SWEEP_FILE), bytes)?;
    Ok(reports)
}

/// Samples a fleet, writes it as CSV, and returns a printable summary.
pub fn cmd_gen_fleet(config: &FleetConfig, grid: &TimeGrid, out_path: &Path) -> Result<(Vec<EvSpec>, String)> {
    let fleet = sample_fleet(config, grid)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    crate::fleet::save_fleet(&fleet, out_path)?;
    Ok((fleet.clone(), fleet_summary(config, &fleet, grid)))
}

pub fn fleet_summary(config: &FleetConfig, fleet: &[EvSpec], grid: &TimeGrid) -> String {
    let n = fleet.len().max(1) as f64;
    let mean = fleet.iter().map(|e| e.initial_soc).sum::<f64>() / n;
    let var = fleet.iter().map(|e| (e.initial_soc - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let m2 = fleet.iter().filter(|e| e.mode == crate::model::ChargeMode::M2).count();

    let slots_per_hour = (60 / grid.slot_minutes()).max(1) as usize;
    let histogram = |slot_of: &dyn Fn(&EvSpec) -> usize| {
        let mut counts = [0usize; 24];
        for ev in fleet {
            counts[(slot_of(ev) / slots_per_hour).min(23)] += 1;
        }
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(h, c)| format!("  {h:02}h {c:>7}"))
            .collect::<Vec<_>>()
            .join("\n")
    };

    let mut s = String::new();
    let _ = writeln!(s, "EVs: {} (M2: {m2}, M1: {})", fleet.len(), fleet.len() - m2);
    let _ = writeln!(
        s,
        "arrival window {} (mean {:.2} h, std {:.2} h)",
        config.arrival_window, config.arrival_mean_h, config.arrival_std_h
    );
    let _ = writeln!(
        s,
        "departure window {} (mean {:.2} h, std {:.2} h)",
        config.departure_window, config.departure_mean_h, config.departure_std_h
    );
    let _ = writeln!(s, "initial SoC mean {mean:.4} %, std {:.4} %", var.sqrt());
    let _ = writeln!(s, "arrivals by hour:\n{}", histogram(&|e| e.arrival_slot));
    let _ = writeln!(s, "departures by hour:\n{}", histogram(&|e| e.departure_slot));
    s
}
