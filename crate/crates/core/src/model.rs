//! Shared domain types: the daily time grid, clock times, tariffs, load/PV
//! profiles, and the EV battery model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 24 * 60;

/// Uniform partition of one circular day into slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    slot_minutes: u32,
}

impl TimeGrid {
    pub fn new(slot_minutes: u32) -> Result<Self> {
        if slot_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(slot_minutes) {
            return Err(Error::invalid(format!(
                "slot length of {slot_minutes} min does not divide a day"
            )));
        }
        Ok(Self { slot_minutes })
    }

    pub fn slot_minutes(&self) -> u32 {
        self.slot_minutes
    }

    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.slot_minutes) as usize
    }

    /// Slot length in hours.
    pub fn slot_hours(&self) -> f64 {
        f64::from(self.slot_minutes) / 60.0
    }

    pub fn check_slot(&self, slot: usize) -> Result<()> {
        if slot < self.slots_per_day() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "slot {slot} outside 0..{}",
                self.slots_per_day()
            )))
        }
    }

    pub fn slot_start(&self, slot: usize) -> Result<ClockTime> {
        self.check_slot(slot)?;
        Ok(ClockTime {
            minutes: slot as u32 * self.slot_minutes,
        })
    }

    /// Number of slots from `from` forward to `to` around the circular day.
    pub fn forward_distance(&self, from: usize, to: usize) -> usize {
        let n = self.slots_per_day();
        (to + n - from % n) % n
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { slot_minutes: 15 }
    }
}

/// Wall-clock time of day with minute resolution. `24:00` is accepted so it
/// can close an interval, but it is not a valid slot start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClockTime {
    minutes: u32,
}

impl ClockTime {
    pub const MIDNIGHT: ClockTime = ClockTime { minutes: 0 };
    pub const END_OF_DAY: ClockTime = ClockTime {
        minutes: MINUTES_PER_DAY,
    };

    pub fn from_hm(hours: u32, minutes: u32) -> Result<Self> {
        if minutes >= 60 || hours * 60 + minutes > MINUTES_PER_DAY {
            return Err(Error::invalid(format!(
                "clock time {hours:02}:{minutes:02} out of range"
            )));
        }
        Ok(Self {
            minutes: hours * 60 + minutes,
        })
    }

    pub fn from_minutes(minutes: u32) -> Result<Self> {
        Self::from_hm(minutes / 60, minutes % 60)
    }

    pub fn minutes(&self) -> u32 {
        self.minutes
    }

    pub fn hours(&self) -> f64 {
        f64::from(self.minutes) / 60.0
    }
}

impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.minutes / 60, self.minutes % 60)
    }
}

impl FromStr for ClockTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("expected HH:MM clock time, got {s:?}"));
        let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
        if m.len() != 2 {
            return Err(bad());
        }
        let h: u32 = h.parse().map_err(|_| bad())?;
        let m: u32 = m.parse().map_err(|_| bad())?;
        Self::from_hm(h, m)
    }
}

impl TryFrom<String> for ClockTime {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ClockTime> for String {
    fn from(c: ClockTime) -> String {
        c.to_string()
    }
}

/// Index of the slot that contains `clock`.
pub fn slot_of_time(clock: ClockTime, grid: &TimeGrid) -> Result<usize> {
    if clock.minutes >= MINUTES_PER_DAY {
        return Err(Error::invalid(format!("clock time {clock} is not before 24:00")));
    }
    Ok((clock.minutes / grid.slot_minutes) as usize)
}

/// Constant value over a clock interval. `from > to` wraps past midnight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: ClockTime,
    pub to: ClockTime,
    pub value: f64,
}

impl Segment {
    pub fn new(from: ClockTime, to: ClockTime, value: f64) -> Self {
        Self { from, to, value }
    }

    pub fn parse(from: &str, to: &str, value: f64) -> Result<Self> {
        Ok(Self::new(from.parse()?, to.parse()?, value))
    }
}

/// Expands non-overlapping segments covering the whole day into per-slot values.
/// Every boundary must fall on a slot boundary.
pub fn piecewise(segments: &[Segment], grid: &TimeGrid) -> Result<Vec<f64>> {
    let n = grid.slots_per_day();
    let mut values: Vec<Option<f64>> = vec![None; n];
    for (i, seg) in segments.iter().enumerate() {
        for edge in [seg.from, seg.to] {
            if edge.minutes % grid.slot_minutes != 0 {
                return Err(Error::invalid(format!(
                    "segment {i} boundary {edge} is not on a {}-minute slot boundary",
                    grid.slot_minutes
                )));
            }
        }
        if seg.from == ClockTime::END_OF_DAY {
            return Err(Error::invalid(format!("segment {i} starts at 24:00")));
        }
        if !seg.value.is_finite() {
            return Err(Error::invalid(format!("segment {i} has non-finite value")));
        }
        let start = (seg.from.minutes / grid.slot_minutes) as usize;
        let end = (seg.to.minutes / grid.slot_minutes) as usize % n;
        let len = match grid.forward_distance(start, end) {
            0 if seg.from == ClockTime::MIDNIGHT && seg.to == ClockTime::END_OF_DAY => n,
            0 => {
                return Err(Error::invalid(format!(
                    "segment {i} ({}-{}) is empty",
                    seg.from, seg.to
                )))
            }
            len => len,
        };
        for k in 0..len {
            let slot = (start + k) % n;
            if values[slot].is_some() {
                return Err(Error::invalid(format!(
                    "segment {i} ({}-{}) overlaps another segment at {}",
                    seg.from,
                    seg.to,
                    grid.slot_start(slot)?
                )));
            }
            values[slot] = Some(seg.value);
        }
    }
    let gaps: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(slot, _)| grid.slot_start(slot).map(|c| c.to_string()))
        .collect::<Result<_>>()?;
    if !gaps.is_empty() {
        return Err(Error::invalid(format!(
            "segments leave {} slot(s) uncovered, first at {}",
            gaps.len(),
            gaps[0]
        )));
    }
    Ok(values.into_iter().map(|v| v.unwrap_or_default()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChargeMode {
    M1,
    M2,
}

impl ChargeMode {
    /// Charge and discharge power in kW; the two are equal for a given mode.
    pub fn rate_kw(self) -> f64 {
        match self {
            ChargeMode::M1 => 7.0,
            ChargeMode::M2 => 19.2,
        }
    }
}

impl fmt::Display for ChargeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChargeMode::M1 => "M1",
            ChargeMode::M2 => "M2",
        })
    }
}

impl FromStr for ChargeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "M1" | "m1" => Ok(ChargeMode::M1),
            "M2" | "m2" => Ok(ChargeMode::M2),
            other => Err(Error::invalid(format!("unknown charge mode {other:?}"))),
        }
    }
}

pub const DEFAULT_CAPACITY_KWH: f64 = 64.0;
pub const DEFAULT_TARGET_SOC: f64 = 80.0;
pub const DEFAULT_SOC_MIN: f64 = 20.0;
pub const DEFAULT_SOC_MAX: f64 = 80.0;

/// Static parameters of one parked EV. SoC values are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvSpec {
    pub id: String,
    pub capacity_kwh: f64,
    pub mode: ChargeMode,
    pub arrival_slot: usize,
    pub departure_slot: usize,
    pub initial_soc: f64,
    pub target_soc: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
}

impl EvSpec {
    /// An EV with default battery parameters.
    pub fn new(
        id: impl Into<String>,
        mode: ChargeMode,
        arrival_slot: usize,
        departure_slot: usize,
        initial_soc: f64,
    ) -> Self {
        Self {
            id: id.into(),
            capacity_kwh: DEFAULT_CAPACITY_KWH,
            mode,
            arrival_slot,
            departure_slot,
            initial_soc,
            target_soc: DEFAULT_TARGET_SOC,
            soc_min: DEFAULT_SOC_MIN,
            soc_max: DEFAULT_SOC_MAX,
            charge_efficiency: 1.0,
            discharge_efficiency: 1.0,
        }
    }

    pub fn rate_kw(&self) -> f64 {
        self.mode.rate_kw()
    }

    /// Length of the parked interval `[arrival, departure)` in slots.
    pub fn parked_slots(&self, grid: &TimeGrid) -> usize {
        grid.forward_distance(self.arrival_slot, self.departure_slot)
    }
}

/// Membership of `slot` in the half-open parked interval, wrapping past midnight.
pub fn is_parked(spec: &EvSpec, slot: usize, grid: &TimeGrid) -> Result<bool> {
    grid.check_slot(slot)?;
    Ok(grid.forward_distance(spec.arrival_slot, slot) < spec.parked_slots(grid))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvState<'a> {
    pub spec: &'a EvSpec,
    pub soc: f64,
}

impl<'a> EvState<'a> {
    pub fn arrived(spec: &'a EvSpec) -> Self {
        Self {
            spec,
            soc: spec.initial_soc,
        }
    }
}

/// Result of one slot of battery bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SocStep {
    pub soc: f64,
    /// Terminal power actually exchanged, kW (charge > 0). Differs from the
    /// requested power only when the step is truncated by `soc_max`/`soc_min`.
    pub delivered_kw: f64,
}

/// Applies `power_kw` (charge > 0, discharge < 0) for one slot.
///
/// Charge energy is scaled by the charge efficiency and discharge energy divided
/// by the discharge efficiency. The result is clamped to `soc_max` when charging
/// and floored at `soc_min` when discharging; the delivered power shrinks to match.
pub fn soc_after(state: &EvState<'_>, power_kw: f64, grid: &TimeGrid) -> Result<SocStep> {
    let spec = state.spec;
    let rate = spec.rate_kw();
    if !power_kw.is_finite() || power_kw.abs() > rate {
        return Err(Error::invalid(format!(
            "{}: power {power_kw} kW exceeds mode rate {rate} kW",
            spec.id
        )));
    }
    let soc = state.soc;
    // percent of capacity per kW held for one slot
    let pct_per_kw = 100.0 * grid.slot_hours() / spec.capacity_kwh;

    if power_kw > 0.0 {
        let eta = spec.charge_efficiency;
        if soc >= spec.soc_max {
            return Ok(SocStep { soc, delivered_kw: 0.0 });
        }
        let next = soc + power_kw * eta * pct_per_kw;
        if next > spec.soc_max {
            Ok(SocStep {
                soc: spec.soc_max,
                delivered_kw: (spec.soc_max - soc) / (eta * pct_per_kw),
            })
        } else {
            Ok(SocStep {
                soc: next,
                delivered_kw: power_kw,
            })
        }
    } else if power_kw < 0.0 {
        let eta = spec.discharge_efficiency;
        if soc <= spec.soc_min {
            return Ok(SocStep { soc, delivered_kw: 0.0 });
        }
        let next = soc + power_kw / eta * pct_per_kw;
        if next < spec.soc_min {
            Ok(SocStep {
                soc: spec.soc_min,
                delivered_kw: -(soc - spec.soc_min) * eta / pct_per_kw,
            })
        } else {
            Ok(SocStep {
                soc: next,
                delivered_kw: power_kw,
            })
        }
    } else {
        Ok(SocStep { soc, delivered_kw: 0.0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    Grid,
    Pv,
}

/// Grid (demand-response) and PV (market price) rates per slot, $/kWh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    grid_rate: Vec<f64>,
    pv_rate: Vec<f64>,
}

impl TariffSchedule {
    pub fn new(grid_rate: Vec<f64>, pv_rate: Vec<f64>, grid: &TimeGrid) -> Result<Self> {
        let n = grid.slots_per_day();
        for (name, rates) in [("grid", &grid_rate), ("pv", &pv_rate)] {
            if rates.len() != n {
                return Err(Error::invalid(format!(
                    "{name} rate has {} slots, expected {n}",
                    rates.len()
                )));
            }
            if let Some(slot) = rates.iter().position(|r| !r.is_finite() || *r < 0.0) {
                return Err(Error::invalid(format!(
                    "{name} rate at slot {slot} is negative or not finite"
                )));
            }
        }
        Ok(Self { grid_rate, pv_rate })
    }

    /// Three-tier demand-response grid tariff with a constant PV price.
    pub fn dr_program(pv_rate: f64, grid: &TimeGrid) -> Result<Self> {
        let grid_rate = piecewise(&dr_program_windows(), grid)?;
        Self::new(grid_rate, vec![pv_rate; grid.slots_per_day()], grid)
    }

    pub fn grid_rates(&self) -> &[f64] {
        &self.grid_rate
    }

    pub fn pv_rates(&self) -> &[f64] {
        &self.pv_rate
    }

    pub fn len(&self) -> usize {
        self.grid_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_rate.is_empty()
    }
}

pub const OFF_PEAK_RATE: f64 = 0.055;
pub const MID_PEAK_RATE: f64 = 0.108;
pub const ON_PEAK_RATE: f64 = 0.179;

/// Time-of-use windows of the default demand-response program.
pub fn dr_program_windows() -> Vec<Segment> {
    let w = |from: &str, to: &str, rate| Segment::parse(from, to, rate).expect("valid window");
    vec![
        w("23:00", "09:00", OFF_PEAK_RATE),
        w("09:00", "10:00", MID_PEAK_RATE),
        w("10:00", "12:00", ON_PEAK_RATE),
        w("12:00", "13:00", MID_PEAK_RATE),
        w("13:00", "17:00", ON_PEAK_RATE),
        w("17:00", "23:00", MID_PEAK_RATE),
    ]
}

pub fn tariff_rate(schedule: &TariffSchedule, source: RateSource, slot: usize) -> Result<f64> {
    let rates = match source {
        RateSource::Grid => &schedule.grid_rate,
        RateSource::Pv => &schedule.pv_rate,
    };
    rates.get(slot).copied().ok_or_else(|| {
        Error::invalid(format!("slot {slot} outside 0..{}", rates.len()))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    BaseLoad,
    PvProduction,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileKind::BaseLoad => "base_load",
            ProfileKind::PvProduction => "pv_production",
        })
    }
}

/// Non-negative per-slot power series, kW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    kind: ProfileKind,
    values: Vec<f64>,
}

impl Profile {
    pub fn new(kind: ProfileKind, values: Vec<f64>, grid: &TimeGrid) -> Result<Self> {
        if values.len() != grid.slots_per_day() {
            return Err(Error::invalid(format!(
                "{kind} profile has {} slots, expected {}",
                values.len(),
                grid.slots_per_day()
            )));
        }
        if let Some(slot) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "{kind} profile value {} at slot {slot} is negative or not finite",
                values[slot]
            )));
        }
        Ok(Self { kind, values })
    }

    pub fn constant(kind: ProfileKind, kw: f64, grid: &TimeGrid) -> Result<Self> {
        Self::new(kind, vec![kw; grid.slots_per_day()], grid)
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for Profile {
    type Output = f64;

    fn index(&self, slot: usize) -> &f64 {
        &self.values[slot]
    }
}
