//! Seeded EV fleet generation from commuter driving-pattern distributions.
//!
//! Randomness comes from a `ChaCha8Rng` seeded with `seed_from_u64(seed)`.
//! Normal draws use `rand_distr::Normal`, and truncation is done by
//! rejection. Per EV the draw order is arrival, departure, initial SoC.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{
    ChargeMode, ClockTime, EvSpec, TimeGrid, DEFAULT_CAPACITY_KWH, DEFAULT_SOC_MAX,
    DEFAULT_SOC_MIN, DEFAULT_TARGET_SOC,
};
use crate::{Error, Result};

/// Half-open clock interval `[start, end)` that does not cross midnight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockWindow {
    pub start: ClockTime,
    pub end: ClockTime,
}

impl ClockWindow {
    pub fn new(start: ClockTime, end: ClockTime) -> Result<Self> {
        if start >= end {
            return Err(Error::invalid(format!("window {start}-{end} is empty")));
        }
        Ok(Self { start, end })
    }

    pub fn contains_hours(&self, hours: f64) -> bool {
        self.start.hours() <= hours && hours < self.end.hours()
    }

    pub fn center_hours(&self) -> f64 {
        0.5 * (self.start.hours() + self.end.hours())
    }
}

impl fmt::Display for ClockWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl std::str::FromStr for ClockWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("expected HH:MM-HH:MM window, got {s:?}")))?;
        Self::new(a.parse()?, b.parse()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub n_evs: usize,
    pub arrival_window: ClockWindow,
    pub departure_window: ClockWindow,
    pub arrival_mean_h: f64,
    pub arrival_std_h: f64,
    pub departure_mean_h: f64,
    pub departure_std_h: f64,
    pub soc_mean: f64,
    pub soc_std: f64,
    /// Fraction of the fleet using mode M2.
    pub mode_split: f64,
    pub seed: u64,
    pub capacity_kwh: f64,
    pub target_soc: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        let arrival_window = "15:00-21:00".parse::<ClockWindow>().expect("valid window");
        let departure_window = "07:20-13:20".parse::<ClockWindow>().expect("valid window");
        Self {
            n_evs: 50,
            arrival_mean_h: arrival_window.center_hours(),
            arrival_std_h: 1.5,
            departure_mean_h: departure_window.center_hours(),
            departure_std_h: 1.5,
            arrival_window,
            departure_window,
            soc_mean: 15.0,
            soc_std: 5.0,
            mode_split: 0.5,
            seed: 0,
            capacity_kwh: DEFAULT_CAPACITY_KWH,
            target_soc: DEFAULT_TARGET_SOC,
            soc_min: DEFAULT_SOC_MIN,
            soc_max: DEFAULT_SOC_MAX,
            charge_efficiency: 1.0,
            discharge_efficiency: 1.0,
        }
    }
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_evs == 0 {
            problems.push("n_evs must be at least 1".to_owned());
        }
        for (name, v) in [
            ("arrival_std_h", self.arrival_std_h),
            ("departure_std_h", self.departure_std_h),
            ("soc_std", self.soc_std),
        ] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.mode_split) {
            problems.push(format!("mode_split must lie in [0, 1], got {}", self.mode_split));
        }
        if !(self.capacity_kwh.is_finite() && self.capacity_kwh > 0.0) {
            problems.push(format!("capacity_kwh must be positive, got {}", self.capacity_kwh));
        }
        if !(0.0 <= self.soc_min
            && self.soc_min < self.target_soc
            && self.target_soc <= self.soc_max
            && self.soc_max <= 100.0)
        {
            problems.push(format!(
                "need 0 <= soc_min < target_soc <= soc_max <= 100, got {} / {} / {}",
                self.soc_min, self.target_soc, self.soc_max
            ));
        }
        for (name, eta) in [
            ("charge_efficiency", self.charge_efficiency),
            ("discharge_efficiency", self.discharge_efficiency),
        ] {
            if !(eta > 0.0 && eta <= 1.0) {
                problems.push(format!("{name} must lie in (0, 1], got {eta}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(problems))
        }
    }
}

/// Standard normal CDF.
fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Smallest acceptance probability tolerated by the rejection sampler.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

/// Draws from `Normal(mean, std)` conditioned on `[low, high]` by rejection.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    std: f64,
    low: f64,
    high: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(low < high) || !(std > 0.0) || !mean.is_finite() || !std.is_finite() {
        return Err(Error::invalid(format!(
            "truncated normal needs low < high and std > 0 (mean {mean}, std {std}, [{low}, {high}])"
        )));
    }
    let mass = phi((high - mean) / std) - phi((low - mean) / std);
    if mass < MIN_ACCEPTANCE {
        return Err(Error::DegenerateWindow(format!(
            "Normal({mean}, {std}) puts probability {mass:e} on [{low}, {high}]"
        )));
    }
    let normal = Normal::new(mean, std).map_err(|e| Error::invalid(e.to_string()))?;
    loop {
        let x = normal.sample(rng);
        if (low..=high).contains(&x) {
            return Ok(x);
        }
    }
}

const MAX_RESAMPLES: usize = 1000;

fn sample_slot<R: Rng + ?Sized>(
    window: &ClockWindow,
    mean_h: f64,
    std_h: f64,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<usize> {
    loop {
        let h = sample_truncated_normal(mean_h, std_h, window.start.hours(), window.end.hours(), rng)?;
        // the closed upper bound has zero mass but would land in the next slot
        if window.contains_hours(h) {
            let minutes = h * 60.0;
            return Ok((minutes / f64::from(grid.slot_minutes())).floor() as usize);
        }
    }
}

/// Samples `config.n_evs` EVs. The first `ceil(mode_split * n)` use M2.
pub fn sample_fleet(config: &FleetConfig, grid: &TimeGrid) -> Result<Vec<EvSpec>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_evs;
    let n_m2 = (config.mode_split * n as f64).ceil() as usize;
    let width = n.to_string().len().max(3);

    let mut fleet = Vec::with_capacity(n);
    for i in 0..n {
        let mut attempt = 0;
        let (arrival_slot, departure_slot) = loop {
            let a = sample_slot(
                &config.arrival_window,
                config.arrival_mean_h,
                config.arrival_std_h,
                grid,
                &mut rng,
            )?;
            let d = sample_slot(
                &config.departure_window,
                config.departure_mean_h,
                config.departure_std_h,
                grid,
                &mut rng,
            )?;
            if a != d {
                break (a, d);
            }
            attempt += 1;
            if attempt >= MAX_RESAMPLES {
                return Err(Error::Infeasible(format!(
                    "EV {i}: arrival and departure fell in the same slot {MAX_RESAMPLES} times"
                )));
            }
        };
        let initial_soc =
            sample_truncated_normal(config.soc_mean, config.soc_std, 0.0, config.soc_max, &mut rng)?;
        fleet.push(EvSpec {
            id: format!("ev{i:0width$}"),
            capacity_kwh: config.capacity_kwh,
            mode: if i < n_m2 { ChargeMode::M2 } else { ChargeMode::M1 },
            arrival_slot,
            departure_slot,
            initial_soc,
            target_soc: config.target_soc,
            soc_min: config.soc_min,
            soc_max: config.soc_max,
            charge_efficiency: config.charge_efficiency,
            discharge_efficiency: config.discharge_efficiency,
        });
    }
    Ok(fleet)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub ev_id: String,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.ev_id, self.field, self.message)
    }
}

/// Every broken `EvSpec` invariant across the fleet; empty when valid.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_fleet(fleet: &[EvSpec], grid: &TimeGrid) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = grid.slots_per_day();
    for (i, ev) in fleet.iter().enumerate() {
        let mut push = |field, message: String| {
            out.push(Violation {
                ev_id: ev.id.clone(),
                field,
                message,
            })
        };
        if fleet[..i].iter().any(|other| other.id == ev.id) {
            push("id", "duplicate id".into());
        }
        if !(ev.capacity_kwh.is_finite() && ev.capacity_kwh > 0.0) {
            push("capacity_kwh", format!("{} is not positive", ev.capacity_kwh));
        }
        if ev.arrival_slot >= n {
            push("arrival_slot", format!("{} outside 0..{n}", ev.arrival_slot));
        }
        if ev.departure_slot >= n {
            push("departure_slot", format!("{} outside 0..{n}", ev.departure_slot));
        }
        if ev.arrival_slot == ev.departure_slot {
            push("departure_slot", "equals arrival_slot".into());
        }
        if !(ev.soc_max <= 100.0) {
            push("soc_max", format!("{} above 100", ev.soc_max));
        }
        if !(0.0 <= ev.initial_soc && ev.initial_soc <= ev.soc_max) {
            push(
                "initial_soc",
                format!("{} outside [0, soc_max = {}]", ev.initial_soc, ev.soc_max),
            );
        }
        if !(0.0 <= ev.soc_min && ev.soc_min < ev.target_soc) {
            push(
                "soc_min",
                format!("{} not in [0, target_soc = {})", ev.soc_min, ev.target_soc),
            );
        }
        if !(ev.target_soc <= ev.soc_max) {
            push(
                "target_soc",
                format!("{} above soc_max = {}", ev.target_soc, ev.soc_max),
            );
        }
        if !(ev.charge_efficiency > 0.0 && ev.charge_efficiency <= 1.0) {
            push("charge_efficiency", format!("{} outside (0, 1]", ev.charge_efficiency));
        }
        if !(ev.discharge_efficiency > 0.0 && ev.discharge_efficiency <= 1.0) {
            push(
                "discharge_efficiency",
                format!("{} outside (0, 1]", ev.discharge_efficiency),
            );
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct FleetRow {
    id: String,
    capacity_kwh: f64,
    mode: ChargeMode,
    arrival_slot: usize,
    departure_slot: usize,
    initial_soc: f64,
    target_soc: f64,
    soc_min: f64,
    soc_max: f64,
}

pub fn write_fleet_csv<W: Write>(fleet: &[EvSpec], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for ev in fleet {
        w.serialize(FleetRow {
            id: ev.id.clone(),
            capacity_kwh: ev.capacity_kwh,
            mode: ev.mode,
            arrival_slot: ev.arrival_slot,
            departure_slot: ev.departure_slot,
            initial_soc: ev.initial_soc,
            target_soc: ev.target_soc,
            soc_min: ev.soc_min,
            soc_max: ev.soc_max,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a fleet CSV. Efficiencies are not part of the schema and are taken
/// from the arguments.
pub fn read_fleet_csv<R: Read>(
    reader: R,
    charge_efficiency: f64,
    discharge_efficiency: f64,
) -> Result<Vec<EvSpec>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut fleet = Vec::new();
    for row in r.deserialize() {
        let row: FleetRow = row?;
        fleet.push(EvSpec {
            id: row.id,
            capacity_kwh: row.capacity_kwh,
            mode: row.mode,
            arrival_slot: row.arrival_slot,
            departure_slot: row.departure_slot,
            initial_soc: row.initial_soc,
            target_soc: row.target_soc,
            soc_min: row.soc_min,
            soc_max: row.soc_max,
            charge_efficiency,
            discharge_efficiency,
        });
    }
    Ok(fleet)
}

pub fn save_fleet(fleet: &[EvSpec], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_fleet_csv(fleet, std::io::BufWriter::new(file))
}

pub fn load_fleet(path: &Path, charge_efficiency: f64, discharge_efficiency: f64) -> Result<Vec<EvSpec>> {
    let file = std::fs::File::open(path)?;
    read_fleet_csv(file, charge_efficiency, discharge_efficiency)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}
