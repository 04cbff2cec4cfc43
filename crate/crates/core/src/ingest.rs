//! Profile, tariff, and scenario files.
//!
//! Per-slot series are two-column CSV files with a header row, one row per
//! slot in order (`slot,kw` for profiles). Scenarios are TOML; see
//! `docs/scenario.md` for the schema.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch::{AccountingMode, DispatchOptions, PvMerit, Scenario};
use crate::fleet::{load_fleet, sample_fleet, FleetConfig};
use crate::model::{piecewise, EvSpec, Profile, ProfileKind, Segment, TariffSchedule, TimeGrid};
use crate::policy::{default_flag_power, Method};
use crate::{Error, Result};

/// Reads a per-slot series: header plus exactly one row per slot, in order.
pub fn read_series<R: Read>(reader: R, source_name: &str, grid: &TimeGrid) -> Result<Vec<f64>> {
    let n = grid.slots_per_day();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let err = |msg: String| Error::parse(source_name, msg);
    let mut values = Vec::with_capacity(n);
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| err(format!("row {row}: {e}")))?;
        if record.len() != 2 {
            return Err(err(format!("row {row}: expected 2 columns, found {}", record.len())));
        }
        let slot: usize = record[0]
            .parse()
            .map_err(|_| err(format!("row {row}: slot {:?} is not an integer", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| err(format!("row {row}: value {:?} is not a number", &record[1])))?;
        if slot != row {
            return Err(err(format!(
                "row {row}: expected slot {row}, found {slot} (missing or duplicate slot)"
            )));
        }
        if !value.is_finite() || value < 0.0 {
            return Err(err(format!("row {row}: negative or non-finite value {value}")));
        }
        values.push(value);
    }
    if values.len() != n {
        return Err(err(format!("expected {n} rows, found {}", values.len())));
    }
    Ok(values)
}

pub fn write_series<W: Write>(values: &[f64], value_column: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["slot", value_column])?;
    for (slot, v) in values.iter().enumerate() {
        w.write_record([slot.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_profile(path: &Path, kind: ProfileKind, grid: &TimeGrid) -> Result<Profile> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let values = read_series(file, &path.display().to_string(), grid)?;
    Profile::new(kind, values, grid)
}

pub fn write_profile(profile: &Profile, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_series(profile.values(), "kw", std::io::BufWriter::new(file))
}

/// Piecewise-constant profile from clock segments covering the day.
pub fn synth_profile(kind: ProfileKind, segments: &[Segment], grid: &TimeGrid) -> Result<Profile> {
    Profile::new(kind, piecewise(segments, grid)?, grid)
}

/// PV output, kW, from irradiance in W/m².
pub fn irradiance_to_power(
    irradiance: &[f64],
    panel_area_m2: f64,
    efficiency: f64,
    grid: &TimeGrid,
) -> Result<Profile> {
    if !(panel_area_m2.is_finite() && panel_area_m2 > 0.0) {
        return Err(Error::invalid(format!("panel area {panel_area_m2} must be positive")));
    }
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::invalid(format!("panel efficiency {efficiency} outside (0, 1]")));
    }
    if let Some(slot) = irradiance.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid(format!(
            "irradiance {} at slot {slot} is negative",
            irradiance[slot]
        )));
    }
    let kw = irradiance
        .iter()
        .map(|w| w * panel_area_m2 * efficiency / 1000.0)
        .collect();
    Profile::new(ProfileKind::PvProduction, kw, grid)
}

/// Where the EVs come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetSource {
    Generated(FleetConfig),
    Listed(Vec<EvSpec>),
}

/// How the flag power was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagSetting {
    /// Mean net load over the day.
    Auto,
    Fixed,
}

/// Fully resolved scenario: profiles loaded, flag power computed, everything validated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub flag_setting: FlagSetting,
    pub method: Method,
    pub seed: u64,
    pub fleet: FleetSource,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// The fleet; generated fleets are sampled with [`Self::seed`].
    pub fn fleet_specs(&self) -> Result<Vec<EvSpec>> {
        match &self.fleet {
            FleetSource::Generated(config) => {
                let config = FleetConfig { seed: self.seed, ..config.clone() };
                sample_fleet(&config, &self.scenario.grid)
            }
            FleetSource::Listed(specs) => Ok(specs.clone()),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let FleetSource::Generated(config) = &mut self.fleet {
            config.seed = seed;
        }
    }

    /// `None` restores the mean-net-load default.
    pub fn set_flag_power(&mut self, flag_power: Option<f64>) -> Result<()> {
        match flag_power {
            Some(v) if v.is_nan() => return Err(Error::invalid("flag power is NaN")),
            Some(v) => {
                self.scenario.flag_power = v;
                self.flag_setting = FlagSetting::Fixed;
            }
            None => {
                self.scenario.flag_power = default_flag_power(&self.scenario.base_load, &self.scenario.pv)?;
                self.flag_setting = FlagSetting::Auto;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Default, Deserialize)]
struct RawScenario {
    strict: Option<bool>,
    seed: Option<u64>,
    accounting: Option<String>,
    pv_merit: Option<String>,
    grid_cap_kw: Option<f64>,
    output_dir: Option<String>,
    time: Option<RawTime>,
    base_load: Option<RawProfile>,
    pv: Option<RawProfile>,
    tariff: Option<RawTariff>,
    fleet: Option<RawFleet>,
    policy: Option<RawPolicy>,
}

#[derive(Debug, Default, Deserialize)]
struct RawTime {
    slot_minutes: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
struct RawSegment {
    from: String,
    to: String,
    kw: Option<f64>,
    rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawProfile {
    file: Option<String>,
    segments: Option<Vec<RawSegment>>,
    irradiance_file: Option<String>,
    panel_area_m2: Option<f64>,
    panel_efficiency: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawTariff {
    smp: Option<f64>,
    smp_file: Option<String>,
    dr_windows: Option<Vec<RawSegment>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawFleet {
    file: Option<String>,
    n_evs: Option<usize>,
    arrival_window: Option<String>,
    departure_window: Option<String>,
    arrival_mean_h: Option<f64>,
    arrival_std_h: Option<f64>,
    departure_mean_h: Option<f64>,
    departure_std_h: Option<f64>,
    soc_mean: Option<f64>,
    soc_std: Option<f64>,
    mode_split: Option<f64>,
    capacity_kwh: Option<f64>,
    target_soc: Option<f64>,
    soc_min: Option<f64>,
    soc_max: Option<f64>,
    charge_efficiency: Option<f64>,
    discharge_efficiency: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawPolicy {
    method: Option<String>,
    flag_power: Option<f64>,
    flag_power_auto: Option<bool>,
    urgency_margin: Option<usize>,
}

/// Loads and resolves a scenario file. Relative paths inside it are taken
/// relative to the file's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, base_dir)
}

/// Resolves scenario TOML text; collects every problem before failing.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioConfig> {
    let value: toml::Value = toml::from_str(text).map_err(|e| Error::Scenario(vec![e.to_string()]))?;
    let mut unknown = Vec::new();
    let raw: RawScenario = serde_ignored::deserialize(value, |path| unknown.push(path.to_string()))
        .map_err(|e| Error::Scenario(vec![e.to_string()]))?;

    let mut problems = Vec::new();
    if raw.strict.unwrap_or(true) {
        problems.extend(unknown.into_iter().map(|k| format!("unknown key `{k}`")));
    }
    let mut note = |r: Result<()>| {
        if let Err(e) = r {
            problems.push(e.to_string());
        }
    };

    let grid = match raw.time.as_ref().and_then(|t| t.slot_minutes) {
        Some(m) => TimeGrid::new(m).unwrap_or_else(|e| {
            note(Err(e));
            TimeGrid::default()
        }),
        None => TimeGrid::default(),
    };
    let resolve = |p: &str| base_dir.join(p);

    let base_load = match &raw.base_load {
        None => {
            problems.push("missing required key `base_load`".into());
            None
        }
        Some(src) => record(&mut problems, "base_load", profile_source(src, ProfileKind::BaseLoad, &grid, &resolve)),
    };
    let pv = match &raw.pv {
        None => {
            problems.push("missing required key `pv`".into());
            None
        }
        Some(src) => record(&mut problems, "pv", profile_source(src, ProfileKind::PvProduction, &grid, &resolve)),
    };

    let tariffs = match &raw.tariff {
        None => {
            problems.push("missing required key `tariff`".into());
            None
        }
        Some(t) => record(&mut problems, "tariff", tariff_source(t, &grid, &resolve)),
    };

    let fleet = match &raw.fleet {
        None => {
            problems.push("missing required key `fleet`".into());
            None
        }
        Some(f) => record(&mut problems, "fleet", fleet_source(f, &grid, &resolve)),
    };

    let policy = raw.policy.unwrap_or_default();
    let method = match policy.method.as_deref() {
        None => Some(Method::Proposed),
        Some(m) => record(&mut problems, "policy.method", m.parse()),
    };
    let fixed_flag = match (policy.flag_power, policy.flag_power_auto) {
        (Some(_), Some(true)) => {
            problems.push(
                "policy: `flag_power` and `flag_power_auto = true` are mutually exclusive".into(),
            );
            None
        }
        (Some(v), _) if !v.is_finite() => {
            problems.push(format!("policy.flag_power: {v} is not finite"));
            None
        }
        (Some(v), _) => Some(v),
        (None, _) => None,
    };

    let accounting = match raw.accounting.as_deref() {
        None => Some(AccountingMode::default()),
        Some(s) => record(&mut problems, "accounting", s.parse()),
    };
    let pv_merit = match raw.pv_merit.as_deref() {
        None | Some("always") => Some(PvMerit::Always),
        Some("economic") => Some(PvMerit::Economic),
        Some(other) => {
            problems.push(format!("pv_merit: unknown value {other:?} (expected always or economic)"));
            None
        }
    };
    if let Some(cap) = raw.grid_cap_kw {
        if !(cap.is_finite() && cap > 0.0) {
            problems.push(format!("grid_cap_kw: {cap} must be positive"));
        }
    }

    if !problems.is_empty() {
        return Err(Error::Scenario(problems));
    }
    let (Some(base_load), Some(pv), Some(tariffs), Some(fleet), Some(method), Some(accounting), Some(pv_merit)) =
        (base_load, pv, tariffs, fleet, method, accounting, pv_merit)
    else {
        unreachable!("every missing piece was reported as a problem");
    };

    let (flag_power, flag_setting) = match fixed_flag {
        Some(v) => (v, FlagSetting::Fixed),
        None => (default_flag_power(&base_load, &pv)?, FlagSetting::Auto),
    };
    let seed = raw.seed.unwrap_or(0);
    let fleet = match fleet {
        FleetSource::Generated(config) => FleetSource::Generated(FleetConfig { seed, ..config }),
        listed => listed,
    };
    Ok(ScenarioConfig {
        scenario: Scenario {
            grid,
            base_load,
            pv,
            tariffs,
            flag_power,
            urgency_margin: policy.urgency_margin.unwrap_or(0),
            options: DispatchOptions { accounting, pv_merit },
            grid_cap_kw: raw.grid_cap_kw,
        },
        flag_setting,
        method,
        seed,
        fleet,
        output_dir: raw.output_dir.map(|p| resolve(&p)),
    })
}

fn record<T>(problems: &mut Vec<String>, key: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(Error::Scenario(list)) => {
            problems.extend(list.into_iter().map(|p| format!("{key}: {p}")));
            None
        }
        Err(e) => {
            problems.push(format!("{key}: {e}"));
            None
        }
    }
}

fn segments(raw: &[RawSegment], value_key: &str) -> Result<Vec<Segment>> {
    raw.iter()
        .enumerate()
        .map(|(i, s)| {
            let value = match value_key {
                "kw" => s.kw,
                _ => s.rate,
            }
            .ok_or_else(|| Error::invalid(format!("segment {i} is missing `{value_key}`")))?;
            Segment::parse(&s.from, &s.to, value)
        })
        .collect()
}

fn profile_source(
    src: &RawProfile,
    kind: ProfileKind,
    grid: &TimeGrid,
    resolve: &dyn Fn(&str) -> PathBuf,
) -> Result<Profile> {
    let given = [src.file.is_some(), src.segments.is_some(), src.irradiance_file.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(Error::invalid(
            "give exactly one of `file`, `segments`, or `irradiance_file`",
        ));
    }
    if let Some(file) = &src.file {
        return load_profile(&resolve(file), kind, grid);
    }
    if let Some(segs) = &src.segments {
        return synth_profile(kind, &segments(segs, "kw")?, grid);
    }
    let file = src.irradiance_file.as_deref().unwrap_or_default();
    if kind != ProfileKind::PvProduction {
        return Err(Error::invalid("irradiance input only applies to pv"));
    }
    let (Some(area), Some(eff)) = (src.panel_area_m2, src.panel_efficiency) else {
        return Err(Error::invalid(
            "`irradiance_file` needs `panel_area_m2` and `panel_efficiency`",
        ));
    };
    let path = resolve(file);
    let f = std::fs::File::open(&path).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let irradiance = read_series(f, &path.display().to_string(), grid)?;
    irradiance_to_power(&irradiance, area, eff, grid)
}

fn tariff_source(t: &RawTariff, grid: &TimeGrid, resolve: &dyn Fn(&str) -> PathBuf) -> Result<TariffSchedule> {
    let grid_rate = match &t.dr_windows {
        Some(w) => piecewise(&segments(w, "rate")?, grid)?,
        None => piecewise(&crate::model::dr_program_windows(), grid)?,
    };
    let pv_rate = match (t.smp, &t.smp_file) {
        (Some(_), Some(_)) => return Err(Error::invalid("`smp` and `smp_file` are mutually exclusive")),
        (None, None) => return Err(Error::invalid("missing required key `smp` (or `smp_file`)")),
        (Some(v), None) => vec![v; grid.slots_per_day()],
        (None, Some(file)) => {
            let path = resolve(file);
            let f = std::fs::File::open(&path)
                .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
            read_series(f, &path.display().to_string(), grid)?
        }
    };
    TariffSchedule::new(grid_rate, pv_rate, grid)
}

fn fleet_source(f: &RawFleet, grid: &TimeGrid, resolve: &dyn Fn(&str) -> PathBuf) -> Result<FleetSource> {
    let d = FleetConfig::default();
    let charge_efficiency = f.charge_efficiency.unwrap_or(d.charge_efficiency);
    let discharge_efficiency = f.discharge_efficiency.unwrap_or(d.discharge_efficiency);
    if let Some(file) = &f.file {
        let specs = load_fleet(&resolve(file), charge_efficiency, discharge_efficiency)?;
        let violations = crate::fleet::validate_fleet(&specs, grid);
        if !violations.is_empty() {
            return Err(Error::Scenario(violations.iter().map(ToString::to_string).collect()));
        }
        return Ok(FleetSource::Listed(specs));
    }
    let arrival_window = match &f.arrival_window {
        Some(w) => w.parse()?,
        None => d.arrival_window,
    };
    let departure_window = match &f.departure_window {
        Some(w) => w.parse()?,
        None => d.departure_window,
    };
    let config = FleetConfig {
        n_evs: f.n_evs.unwrap_or(d.n_evs),
        arrival_mean_h: f.arrival_mean_h.unwrap_or(arrival_window.center_hours()),
        arrival_std_h: f.arrival_std_h.unwrap_or(d.arrival_std_h),
        departure_mean_h: f.departure_mean_h.unwrap_or(departure_window.center_hours()),
        departure_std_h: f.departure_std_h.unwrap_or(d.departure_std_h),
        arrival_window,
        departure_window,
        soc_mean: f.soc_mean.unwrap_or(d.soc_mean),
        soc_std: f.soc_std.unwrap_or(d.soc_std),
        mode_split: f.mode_split.unwrap_or(d.mode_split),
        seed: 0,
        capacity_kwh: f.capacity_kwh.unwrap_or(d.capacity_kwh),
        target_soc: f.target_soc.unwrap_or(d.target_soc),
        soc_min: f.soc_min.unwrap_or(d.soc_min),
        soc_max: f.soc_max.unwrap_or(d.soc_max),
        charge_efficiency,
        discharge_efficiency,
    };
    config.validate()?;
    Ok(FleetSource::Generated(config))
}
