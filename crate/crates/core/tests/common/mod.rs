#![allow(dead_code)]

use std::path::PathBuf;

use parkgrid::dispatch::{DispatchOptions, Scenario};
use parkgrid::ingest::{load_scenario, ScenarioConfig};
use parkgrid::model::{ChargeMode, EvSpec, Profile, ProfileKind, TariffSchedule, TimeGrid};
use parkgrid::policy::default_flag_power;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/fixture.toml")
}

pub fn fixture() -> ScenarioConfig {
    load_scenario(&fixture_path()).expect("fixture loads")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Piecewise-constant circular profile with 1 to 6 random breakpoints.
pub fn random_piecewise(rng: &mut ChaCha8Rng, max_kw: f64, zero_chance: f64) -> Vec<f64> {
    let n = 96;
    let k = rng.random_range(1..=6);
    let mut cuts: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let levels: Vec<f64> = cuts
        .iter()
        .map(|_| if rng.random_bool(zero_chance) { 0.0 } else { rng.random_range(0.0..max_kw) })
        .collect();
    let mut values = vec![0.0; n];
    for (t, v) in values.iter_mut().enumerate() {
        // level of the last cut at or before t, wrapping to the final cut
        let i = cuts.iter().rposition(|&c| c <= t).unwrap_or(cuts.len() - 1);
        *v = levels[i];
    }
    values
}

pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let grid = TimeGrid::default();
    let base = random_piecewise(rng, 300.0, 0.1);
    let pv = random_piecewise(rng, 150.0, 0.4);
    let base_load = Profile::new(ProfileKind::BaseLoad, base, &grid).unwrap();
    let pv = Profile::new(ProfileKind::PvProduction, pv, &grid).unwrap();
    let smp = rng.random_range(0.03..0.2);
    let flag = if rng.random_bool(0.7) {
        default_flag_power(&base_load, &pv).unwrap()
    } else {
        rng.random_range(-50.0..300.0)
    };
    Scenario {
        grid,
        base_load,
        pv,
        tariffs: TariffSchedule::dr_program(smp, &grid).unwrap(),
        flag_power: flag,
        urgency_margin: 0,
        options: DispatchOptions::default(),
        grid_cap_kw: None,
    }
}

pub fn random_ev(rng: &mut ChaCha8Rng, id: String, max_slots: usize) -> EvSpec {
    let arrival = rng.random_range(0..96);
    let duration = rng.random_range(1..=max_slots.min(95));
    let mode = if rng.random_bool(0.5) { ChargeMode::M2 } else { ChargeMode::M1 };
    let soc = rng.random_range(0.0..=80.0);
    EvSpec::new(id, mode, arrival, (arrival + duration) % 96, soc)
}

pub fn random_fleet(rng: &mut ChaCha8Rng, max_n: usize) -> Vec<EvSpec> {
    let n = rng.random_range(0..=max_n);
    (0..n).map(|i| random_ev(rng, format!("r{i}"), 95)).collect()
}
