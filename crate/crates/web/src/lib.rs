//! Browser bindings. Each export takes a JSON parameter object and returns a
//! JSON string; errors come back as thrown strings.

use std::path::Path;

use parkgrid::dispatch::{simulate, AccountingMode, SimulationResult};
use parkgrid::ingest::{parse_scenario, FleetSource, ScenarioConfig};
use parkgrid::model::EvSpec;
use parkgrid::policy::Method;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

const FIXTURE: &str = include_str!("../../core/scenarios/fixture.toml");

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub method: Option<Method>,
    /// `None` keeps the mean net load.
    pub flag_power: Option<f64>,
    pub n_evs: Option<usize>,
    pub seed: Option<u64>,
    pub mode_split: Option<f64>,
    pub accounting: Option<AccountingMode>,
}

#[derive(Debug, Serialize)]
pub struct Curves {
    pub method: Method,
    pub grid_kw: Vec<f64>,
    pub ev_charge_kw: Vec<f64>,
    pub ev_discharge_kw: Vec<f64>,
    pub cost_usd: Vec<f64>,
    pub mean_soc: Vec<f64>,
    pub total_cost_usd: f64,
    pub grid_kwh: f64,
    pub peak_grid_kw: f64,
    pub discharge_kwh: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulationView {
    pub flag_power_kw: f64,
    pub base_kw: Vec<f64>,
    pub pv_kw: Vec<f64>,
    pub grid_rate: Vec<f64>,
    pub runs: Vec<Curves>,
}

#[derive(Debug, Serialize)]
pub struct FleetView {
    pub n_evs: usize,
    pub arrivals_by_hour: Vec<usize>,
    pub departures_by_hour: Vec<usize>,
    /// Initial SoC counts in 5-point bins from 0 to 80.
    pub soc_bins: Vec<usize>,
    pub m2_count: usize,
}

fn config(params: &Params) -> Result<ScenarioConfig, String> {
    let mut c = parse_scenario(FIXTURE, Path::new(".")).map_err(|e| e.to_string())?;
    if let FleetSource::Generated(fleet) = &mut c.fleet {
        if let Some(n) = params.n_evs {
            fleet.n_evs = n;
        }
        if let Some(s) = params.mode_split {
            fleet.mode_split = s;
        }
    }
    if let Some(seed) = params.seed {
        c.set_seed(seed);
    }
    if params.flag_power.is_some() {
        c.set_flag_power(params.flag_power).map_err(|e| e.to_string())?;
    }
    if let Some(mode) = params.accounting {
        c.scenario.options.accounting = mode;
    }
    Ok(c)
}

fn parse_params(json: &str) -> Result<Params, String> {
    if json.trim().is_empty() {
        return Ok(Params::default());
    }
    serde_json::from_str(json).map_err(|e| format!("parameters: {e}"))
}

fn curves(r: &SimulationResult) -> Curves {
    let mean_soc = r
        .soc
        .iter()
        .map(|row| if row.is_empty() { 0.0 } else { row.iter().sum::<f64>() / row.len() as f64 })
        .collect();
    Curves {
        method: r.method,
        grid_kw: r.slots.iter().map(|d| d.grid_draw).collect(),
        ev_charge_kw: r.slots.iter().map(|d| d.ev_charge_total).collect(),
        ev_discharge_kw: r.slots.iter().map(|d| d.ev_discharge_total).collect(),
        cost_usd: r.slots.iter().map(|d| d.cost).collect(),
        mean_soc,
        total_cost_usd: r.totals.cost_usd,
        grid_kwh: r.totals.grid_kwh,
        peak_grid_kw: r.totals.peak_grid_kw,
        discharge_kwh: r.totals.discharge_kwh,
    }
}

fn view(c: &ScenarioConfig, methods: &[Method]) -> Result<SimulationView, String> {
    let fleet = c.fleet_specs().map_err(|e| e.to_string())?;
    let runs = methods
        .iter()
        .map(|&m| simulate(&c.scenario, &fleet, m).map(|r| curves(&r)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    Ok(SimulationView {
        flag_power_kw: c.scenario.flag_power,
        base_kw: c.scenario.base_load.values().to_vec(),
        pv_kw: c.scenario.pv.values().to_vec(),
        grid_rate: c.scenario.tariffs.grid_rates().to_vec(),
        runs,
    })
}

fn histogram(fleet: &[EvSpec], slot_minutes: u32) -> FleetView {
    let hour = |slot: usize| slot * slot_minutes as usize / 60;
    let mut arrivals = vec![0; 24];
    let mut departures = vec![0; 24];
    let mut soc_bins = vec![0; 16];
    for ev in fleet {
        arrivals[hour(ev.arrival_slot)] += 1;
        departures[hour(ev.departure_slot)] += 1;
        soc_bins[((ev.initial_soc / 5.0) as usize).min(15)] += 1;
    }
    FleetView {
        n_evs: fleet.len(),
        arrivals_by_hour: arrivals,
        departures_by_hour: departures,
        soc_bins,
        m2_count: fleet.iter().filter(|ev| ev.mode == parkgrid::model::ChargeMode::M2).count(),
    }
}

pub fn simulate_json(params: &str) -> Result<String, String> {
    let p = parse_params(params)?;
    let c = config(&p)?;
    let v = view(&c, &[p.method.unwrap_or(c.method)])?;
    serde_json::to_string(&v).map_err(|e| e.to_string())
}

pub fn compare_json(params: &str) -> Result<String, String> {
    let c = config(&parse_params(params)?)?;
    let v = view(&c, &Method::ALL)?;
    serde_json::to_string(&v).map_err(|e| e.to_string())
}

pub fn fleet_json(params: &str) -> Result<String, String> {
    let c = config(&parse_params(params)?)?;
    let fleet = c.fleet_specs().map_err(|e| e.to_string())?;
    let v = histogram(&fleet, c.scenario.grid.slot_minutes());
    serde_json::to_string(&v).map_err(|e| e.to_string())
}

/// One method on the built-in scenario: per-slot curves and totals.
#[wasm_bindgen(js_name = simulateScenario)]
pub fn simulate_scenario(params: &str) -> Result<String, JsValue> {
    simulate_json(params).map_err(|e| JsValue::from_str(&e))
}

/// All three methods on one shared fleet.
#[wasm_bindgen(js_name = compareMethods)]
pub fn compare_methods(params: &str) -> Result<String, JsValue> {
    compare_json(params).map_err(|e| JsValue::from_str(&e))
}

/// Arrival, departure, and initial SoC histograms of the sampled fleet.
#[wasm_bindgen(js_name = fleetHistogram)]
pub fn fleet_histogram(params: &str) -> Result<String, JsValue> {
    fleet_json(params).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn defaults_reproduce_the_fixture() {
        let v: Value = serde_json::from_str(&compare_json("").unwrap()).unwrap();
        let runs = v["runs"].as_array().unwrap();
        assert_eq!(runs.len(), 3);
        let cost = |i: usize| runs[i]["total_cost_usd"].as_f64().unwrap();
        assert!(cost(0) < cost(1) && cost(1) < cost(2));
        assert_eq!(v["base_kw"].as_array().unwrap().len(), 96);
    }

    #[test]
    fn parameters_apply() {
        let json = r#"{"method":"uncontrolled","flag_power":90,"n_evs":8,"seed":3,"accounting":"sell_only"}"#;
        let v: Value = serde_json::from_str(&simulate_json(json).unwrap()).unwrap();
        assert_eq!(v["flag_power_kw"], 90.0);
        assert_eq!(v["runs"][0]["method"], "uncontrolled");

        let f: Value = serde_json::from_str(&fleet_json(r#"{"n_evs":40,"mode_split":0.25}"#).unwrap()).unwrap();
        assert_eq!(f["n_evs"], 40);
        assert_eq!(f["m2_count"], 10);
        let arrivals: u64 = f["arrivals_by_hour"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).sum();
        assert_eq!(arrivals, 40);
    }

    #[test]
    fn bad_parameters_are_reported() {
        assert!(simulate_json(r#"{"method":"greedy"}"#).unwrap_err().contains("parameters"));
        assert!(simulate_json(r#"{"colour":1}"#).is_err());
        assert!(fleet_json(r#"{"mode_split":2}"#).is_err());
    }
}
