//! Charge/discharge switching for parked EVs.
//!
//! Three methods share one decision function:
//!
//! - `Proposed`: charge while net load (base load minus PV) is below the flag
//!   power and SoC is below `soc_max`; discharge while net load is at or above
//!   the flag power and SoC is above `soc_min`. A deadline override forces
//!   charging once the remaining parked slots only just cover the charge still
//!   needed, and a discharge is demoted to idle if it would leave the target
//!   unreachable.
//! - `SchedulingOnly`: the same charge rule and override, never discharges.
//! - `Uncontrolled`: charge from arrival until the target SoC is reached.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{is_parked, soc_after, EvState, Profile, TimeGrid};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    SchedulingOnly,
    Uncontrolled,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::SchedulingOnly, Method::Uncontrolled];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::SchedulingOnly => "scheduling_only",
            Method::Uncontrolled => "uncontrolled",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "proposed" => Ok(Method::Proposed),
            "scheduling_only" => Ok(Method::SchedulingOnly),
            "uncontrolled" => Ok(Method::Uncontrolled),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected proposed, scheduling_only, or uncontrolled)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub method: Method,
    /// Net-load threshold between the charging and discharging regimes, kW.
    pub flag_power: f64,
    /// Extra slots of slack before the deadline override kicks in.
    pub urgency_margin: usize,
}

impl PolicyParams {
    pub fn new(method: Method, flag_power: f64) -> Self {
        Self {
            method,
            flag_power,
            urgency_margin: 0,
        }
    }
}

/// Ordered so that exhaustive search enumerates charge before idle before discharge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Charge,
    Idle,
    Discharge,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Charge, Action::Idle, Action::Discharge];

    /// Requested terminal power for an EV with the given mode rate.
    pub fn power_kw(self, rate_kw: f64) -> f64 {
        match self {
            Action::Charge => rate_kw,
            Action::Idle => 0.0,
            Action::Discharge => -rate_kw,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchDecision {
    pub ev_id: String,
    pub action: Action,
    pub forced_by_deadline: bool,
}

/// Mean of `base_load − pv` over the day.
pub fn default_flag_power(base_load: &Profile, pv: &Profile) -> Result<f64> {
    if base_load.len() != pv.len() || base_load.is_empty() {
        return Err(Error::invalid(format!(
            "profile lengths differ ({} vs {})",
            base_load.len(),
            pv.len()
        )));
    }
    let total: f64 = base_load
        .values()
        .iter()
        .zip(pv.values())
        .map(|(b, p)| b - p)
        .sum();
    Ok(total / base_load.len() as f64)
}

// absorbs rounding when the charge still needed is an exact multiple of a step
const SLOT_COUNT_EPS: f64 = 1e-12;

/// Full-rate charging slots still needed to bring `state` up to its target SoC.
pub fn required_charge_slots(state: &EvState<'_>, grid: &TimeGrid) -> usize {
    let spec = state.spec;
    if state.soc >= spec.target_soc {
        return 0;
    }
    let energy_kwh = (spec.target_soc - state.soc) / 100.0 * spec.capacity_kwh;
    let per_slot_kwh = spec.rate_kw() * spec.charge_efficiency * grid.slot_hours();
    (energy_kwh / per_slot_kwh - SLOT_COUNT_EPS).ceil().max(0.0) as usize
}

/// Parked slots left at `slot`, counting `slot` itself.
pub fn slots_to_departure(state: &EvState<'_>, slot: usize, grid: &TimeGrid) -> usize {
    grid.forward_distance(slot, state.spec.departure_slot)
}

/// Decision for one EV; `net_load_kw` is base load minus PV at `slot`.
pub fn decide(
    params: &PolicyParams,
    state: &EvState<'_>,
    slot: usize,
    net_load_kw: f64,
    grid: &TimeGrid,
) -> Result<SwitchDecision> {
    let spec = state.spec;
    let decision = |action, forced_by_deadline| SwitchDecision {
        ev_id: spec.id.clone(),
        action,
        forced_by_deadline,
    };
    if !is_parked(spec, slot, grid)? {
        return Ok(decision(Action::Idle, false));
    }
    let below_max = state.soc < spec.soc_max;

    if params.method == Method::Uncontrolled {
        let action = if state.soc < spec.target_soc && below_max {
            Action::Charge
        } else {
            Action::Idle
        };
        return Ok(decision(action, false));
    }

    let remaining = slots_to_departure(state, slot, grid);
    let required = required_charge_slots(state, grid);
    if remaining <= required + params.urgency_margin {
        let action = if below_max { Action::Charge } else { Action::Idle };
        return Ok(decision(action, true));
    }

    if net_load_kw < params.flag_power {
        let action = if below_max { Action::Charge } else { Action::Idle };
        return Ok(decision(action, false));
    }

    if params.method == Method::Proposed && state.soc > spec.soc_min {
        let after = soc_after(state, -spec.rate_kw(), grid)?;
        let next = EvState {
            spec,
            soc: after.soc,
        };
        if required_charge_slots(&next, grid) < remaining {
            return Ok(decision(Action::Discharge, false));
        }
    }
    Ok(decision(Action::Idle, false))
}

/// Decisions for every EV at `slot`, in input order.
pub fn decide_switches(
    params: &PolicyParams,
    evs: &[EvState<'_>],
    slot: usize,
    base_load: &Profile,
    pv: &Profile,
    grid: &TimeGrid,
) -> Result<Vec<SwitchDecision>> {
    let n = grid.slots_per_day();
    if base_load.len() != n || pv.len() != n {
        return Err(Error::invalid(format!(
            "profiles have {} and {} slots, grid has {n}",
            base_load.len(),
            pv.len()
        )));
    }
    grid.check_slot(slot)?;
    let net = base_load[slot] - pv[slot];
    evs.iter()
        .map(|state| decide(params, state, slot, net, grid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChargeMode, EvSpec, ProfileKind};
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        TimeGrid::default()
    }

    fn profile(kind: ProfileKind, kw: f64) -> Profile {
        Profile::constant(kind, kw, &grid()).unwrap()
    }

    #[test]
    fn flag_power_examples() {
        let g = grid();
        let zero = profile(ProfileKind::PvProduction, 0.0);
        let base = profile(ProfileKind::BaseLoad, 100.0);
        assert_eq!(default_flag_power(&base, &zero).unwrap(), 100.0);

        let alt: Vec<f64> = (0..96).map(|i| if i % 2 == 0 { 50.0 } else { 150.0 }).collect();
        let alt = Profile::new(ProfileKind::BaseLoad, alt, &g).unwrap();
        assert_eq!(default_flag_power(&alt, &zero).unwrap(), 100.0);

        let pv = profile(ProfileKind::PvProduction, 100.0);
        assert_eq!(default_flag_power(&base, &pv).unwrap(), 0.0);
    }

    #[test]
    fn required_slots_examples() {
        let g = grid();
        let at_target = EvSpec::new("a", ChargeMode::M1, 72, 36, 80.0);
        assert_eq!(required_charge_slots(&EvState::arrived(&at_target), &g), 0);
        let m1 = EvSpec::new("b", ChargeMode::M1, 72, 36, 15.0);
        assert_eq!(required_charge_slots(&EvState::arrived(&m1), &g), 24);
        let m2 = EvSpec::new("c", ChargeMode::M2, 72, 36, 15.0);
        assert_eq!(required_charge_slots(&EvState::arrived(&m2), &g), 9);
    }

    #[test]
    fn required_slots_exact_multiple() {
        // 80 - 71.25 = 8.75 % of 64 kWh = 5.6 kWh = 3.2 M1 slots; 80 - 74.53125 = 2 slots exactly
        let g = grid();
        let ev = EvSpec::new("a", ChargeMode::M1, 0, 10, 80.0 - 2.0 * 2.734375);
        assert_eq!(required_charge_slots(&EvState::arrived(&ev), &g), 2);
    }

    fn parked(soc: f64, arrival: usize, departure: usize, mode: ChargeMode) -> EvSpec {
        EvSpec::new("ev", mode, arrival, departure, soc)
    }

    #[test]
    fn eq1_discharge_branch() {
        let g = grid();
        let spec = parked(50.0, 0, 60, ChargeMode::M1);
        let st = EvState::arrived(&spec);
        let p = PolicyParams::new(Method::Proposed, 120.0);
        let d = decide(&p, &st, 0, 200.0 - 0.0, &g).unwrap();
        assert_eq!(d.action, Action::Discharge);
        assert!(!d.forced_by_deadline);
        // the baseline never discharges
        let s = PolicyParams::new(Method::SchedulingOnly, 120.0);
        assert_eq!(decide(&s, &st, 0, 200.0, &g).unwrap().action, Action::Idle);
    }

    #[test]
    fn eq1_charge_branch() {
        let g = grid();
        let spec = parked(50.0, 0, 60, ChargeMode::M1);
        let p = PolicyParams::new(Method::Proposed, 120.0);
        let d = decide(&p, &EvState::arrived(&spec), 0, 100.0 - 80.0, &g).unwrap();
        assert_eq!(d.action, Action::Charge);
    }

    #[test]
    fn deadline_override() {
        let g = grid();
        // 24 slots required, exactly 24 parked slots left
        let spec = parked(15.0, 10, 34, ChargeMode::M1);
        let st = EvState::arrived(&spec);
        let p = PolicyParams::new(Method::Proposed, 120.0);
        let d = decide(&p, &st, 10, 200.0, &g).unwrap();
        assert_eq!(d.action, Action::Charge);
        assert!(d.forced_by_deadline);
        // one more slot of slack and the flag rule applies: SoC 15 < soc_min, so idle
        let spec = parked(15.0, 10, 35, ChargeMode::M1);
        let d = decide(&p, &EvState::arrived(&spec), 10, 200.0, &g).unwrap();
        assert_eq!(d, SwitchDecision { ev_id: "ev".into(), action: Action::Idle, forced_by_deadline: false });
        // urgency margin widens the override
        let p = PolicyParams { urgency_margin: 1, ..p };
        assert!(decide(&p, &EvState::arrived(&spec), 10, 200.0, &g).unwrap().forced_by_deadline);
    }

    #[test]
    fn discharge_vetoed_when_target_would_become_unreachable() {
        let g = grid();
        // SoC 50 needs 11 M1 slots; a discharge step would need 12
        let spec = parked(50.0, 0, 12, ChargeMode::M1);
        let st = EvState::arrived(&spec);
        assert_eq!(required_charge_slots(&st, &g), 11);
        let p = PolicyParams::new(Method::Proposed, 120.0);
        let d = decide(&p, &st, 0, 200.0, &g).unwrap();
        assert_eq!(d.action, Action::Idle);
        let spec = parked(50.0, 0, 14, ChargeMode::M1);
        let d = decide(&p, &EvState::arrived(&spec), 0, 200.0, &g).unwrap();
        assert_eq!(d.action, Action::Discharge);
    }

    #[test]
    fn unparked_is_idle() {
        let g = grid();
        let spec = parked(50.0, 72, 36, ChargeMode::M2);
        for method in Method::ALL {
            let p = PolicyParams::new(method, 120.0);
            let d = decide(&p, &EvState::arrived(&spec), 50, 0.0, &g).unwrap();
            assert_eq!(d.action, Action::Idle);
        }
    }

    #[test]
    fn uncontrolled_stops_at_target() {
        let g = grid();
        let p = PolicyParams::new(Method::Uncontrolled, 0.0);
        let mut spec = parked(79.0, 0, 50, ChargeMode::M1);
        spec.soc_max = 90.0;
        assert_eq!(decide(&p, &EvState::arrived(&spec), 3, 1e6, &g).unwrap().action, Action::Charge);
        spec.initial_soc = 80.0;
        assert_eq!(decide(&p, &EvState::arrived(&spec), 3, -1e6, &g).unwrap().action, Action::Idle);
    }

    #[test]
    fn profile_mismatch_rejected() {
        let g = grid();
        let base = profile(ProfileKind::BaseLoad, 1.0);
        let short = Profile::new(ProfileKind::PvProduction, vec![0.0; 48], &TimeGrid::new(30).unwrap()).unwrap();
        let p = PolicyParams::new(Method::Proposed, 0.0);
        assert!(decide_switches(&p, &[], 0, &base, &short, &g).is_err());
    }

    proptest! {
        #[test]
        fn guards_and_subsumption(
            soc in 0.0f64..=80.0,
            arrival in 0usize..96,
            len in 1usize..95,
            slot in 0usize..96,
            net in -500.0f64..500.0,
            flag in -500.0f64..500.0,
            m2 in any::<bool>(),
        ) {
            let g = grid();
            let mode = if m2 { ChargeMode::M2 } else { ChargeMode::M1 };
            let spec = parked(soc, arrival, (arrival + len) % 96, mode);
            let st = EvState::arrived(&spec);
            for method in Method::ALL {
                let d = decide(&PolicyParams::new(method, flag), &st, slot, net, &g).unwrap();
                match d.action {
                    Action::Charge => prop_assert!(soc < spec.soc_max),
                    Action::Discharge => {
                        prop_assert!(soc > spec.soc_min);
                        prop_assert_eq!(method, Method::Proposed);
                    }
                    Action::Idle => {}
                }
                if d.action != Action::Idle {
                    prop_assert!(is_parked(&spec, slot, &g).unwrap());
                }
            }
            let proposed = decide(&PolicyParams::new(Method::Proposed, f64::INFINITY), &st, slot, net, &g).unwrap();
            let baseline = decide(&PolicyParams::new(Method::SchedulingOnly, f64::INFINITY), &st, slot, net, &g).unwrap();
            prop_assert_eq!(proposed, baseline);
        }
    }
}
