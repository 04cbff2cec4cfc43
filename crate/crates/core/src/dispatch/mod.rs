//! Per-slot power allocation, objective accounting, and the day simulation.
//!
//! Allocation order within a slot: PV covers base load, then EV charging; EV
//! discharge offsets what is left; the grid covers the residual; discharge
//! beyond the residual is exported. Cost per slot is
//! `[grid_rate * grid_draw + pv_rate * (pv_used - discharge)] * slot_hours`.

mod oracle;

pub use oracle::{brute_force_schedule, evaluate_schedule, OracleSchedule, MAX_SEARCH_SPACE};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fleet::validate_fleet;
use crate::model::{soc_after, EvSpec, EvState, Profile, SocStep, TariffSchedule, TimeGrid};
use crate::policy::{decide_switches, Action, Method, PolicyParams, SwitchDecision};
use crate::{Error, Result};

/// Absolute tolerance, kW, for the per-slot energy balance.
pub const BALANCE_TOL_KW: f64 = 1e-9;

/// How EV discharge enters grid draw and cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMode {
    /// Discharge offsets grid draw and is credited at the PV rate.
    #[default]
    OffsetAndSell,
    /// Discharge is exported in full and credited at the PV rate.
    SellOnly,
    /// Discharge offsets grid draw and earns nothing.
    OffsetOnly,
}

impl AccountingMode {
    pub const ALL: [AccountingMode; 3] = [
        AccountingMode::OffsetAndSell,
        AccountingMode::SellOnly,
        AccountingMode::OffsetOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AccountingMode::OffsetAndSell => "offset_and_sell",
            AccountingMode::SellOnly => "sell_only",
            AccountingMode::OffsetOnly => "offset_only",
        }
    }
}

impl fmt::Display for AccountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccountingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown accounting mode {s:?}")))
    }
}

/// Whether PV is always used first or only when it is no dearer than the grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvMerit {
    #[default]
    Always,
    Economic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchOptions {
    pub accounting: AccountingMode,
    pub pv_merit: PvMerit,
}

/// Power flows of one slot, kW, with the resulting cost in $.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotDispatch {
    pub slot: usize,
    pub base_load: f64,
    pub pv_available: f64,
    pub grid_to_load: f64,
    pub grid_to_ev: f64,
    pub pv_to_load: f64,
    pub pv_to_ev: f64,
    pub ev_charge_total: f64,
    pub ev_discharge_total: f64,
    /// Part of the discharge consumed inside the microgrid.
    pub discharge_offset: f64,
    pub export: f64,
    pub grid_draw: f64,
    pub pv_used: f64,
    pub cost: f64,
}

impl SlotDispatch {
    /// Supply minus demand; zero up to rounding for a consistent dispatch.
    pub fn balance_residual(&self) -> f64 {
        (self.grid_to_load + self.grid_to_ev + self.pv_to_load + self.pv_to_ev + self.ev_discharge_total)
            - (self.base_load + self.ev_charge_total + self.export)
    }

    /// Checks non-negativity, PV availability, energy balance, and the
    /// grid/PV sums, all within `tol` kW.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
    pub fn check(&self, tol: f64) -> std::result::Result<(), String> {
        let fields = [
            ("grid_to_load", self.grid_to_load),
            ("grid_to_ev", self.grid_to_ev),
            ("pv_to_load", self.pv_to_load),
            ("pv_to_ev", self.pv_to_ev),
            ("ev_charge_total", self.ev_charge_total),
            ("ev_discharge_total", self.ev_discharge_total),
            ("discharge_offset", self.discharge_offset),
            ("export", self.export),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) {
                return Err(format!("slot {}: {name} = {v} is negative", self.slot));
            }
        }
        if self.pv_used > self.pv_available + tol {
            return Err(format!(
                "slot {}: pv used {} exceeds available {}",
                self.slot, self.pv_used, self.pv_available
            ));
        }
        let residual = self.balance_residual();
        if residual.abs() > tol {
            return Err(format!("slot {}: energy balance off by {residual} kW", self.slot));
        }
        if (self.grid_draw - (self.grid_to_load + self.grid_to_ev)).abs() > tol
            || (self.pv_used - (self.pv_to_load + self.pv_to_ev)).abs() > tol
        {
            return Err(format!("slot {}: grid or PV totals inconsistent", self.slot));
        }
        Ok(())
    }
}

/// Cost of one slot in $: grid purchase plus PV purchase net of discharge credit.
pub fn objective_cost(d: &SlotDispatch, tariffs: &TariffSchedule, grid: &TimeGrid) -> f64 {
    let grid_rate = tariffs.grid_rates()[d.slot];
    let pv_rate = tariffs.pv_rates()[d.slot];
    (grid_rate * (d.grid_to_load + d.grid_to_ev)
        + pv_rate * (d.pv_to_load + d.pv_to_ev - d.ev_discharge_total))
        * grid.slot_hours()
}

/// Grid power drawn for base load and EV charging, kW.
pub fn objective_grid(d: &SlotDispatch) -> f64 {
    d.grid_to_load + d.grid_to_ev
}

/// Negated PV power used, kW (smaller is better).
pub fn objective_pv(d: &SlotDispatch) -> f64 {
    -(d.pv_to_load + d.pv_to_ev)
}

/// Allocates one slot given aggregate delivered EV powers.
#[allow(clippy::too_many_arguments)]
pub fn allocate(
    slot: usize,
    base_load: f64,
    pv: f64,
    charge_total: f64,
    discharge_total: f64,
    tariffs: &TariffSchedule,
    options: &DispatchOptions,
    grid: &TimeGrid,
) -> Result<SlotDispatch> {
    grid.check_slot(slot)?;
    for (name, v) in [
        ("base load", base_load),
        ("pv", pv),
        ("ev charge", charge_total),
        ("ev discharge", discharge_total),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!("slot {slot}: {name} {v} is negative or not finite")));
        }
    }
    let grid_rate = tariffs.grid_rates()[slot];
    let pv_rate = tariffs.pv_rates()[slot];

    let usable_pv = match options.pv_merit {
        PvMerit::Economic if pv_rate > grid_rate => 0.0,
        _ => pv,
    };
    let pv_to_load = usable_pv.min(base_load);
    let pv_to_ev = (usable_pv - pv_to_load).min(charge_total);
    let pv_used = pv_to_load + pv_to_ev;
    let residual = base_load + charge_total - pv_used;
    let offset = match options.accounting {
        AccountingMode::SellOnly => 0.0,
        AccountingMode::OffsetAndSell | AccountingMode::OffsetOnly => discharge_total.min(residual),
    };
    let grid_draw = residual - offset;
    let grid_to_load = grid_draw.min(base_load - pv_to_load);
    let mut d = SlotDispatch {
        slot,
        base_load,
        pv_available: pv,
        grid_to_load,
        grid_to_ev: grid_draw - grid_to_load,
        pv_to_load,
        pv_to_ev,
        ev_charge_total: charge_total,
        ev_discharge_total: discharge_total,
        discharge_offset: offset,
        export: discharge_total - offset,
        grid_draw,
        pv_used,
        cost: 0.0,
    };
    d.cost = match options.accounting {
        AccountingMode::OffsetAndSell | AccountingMode::SellOnly => objective_cost(&d, tariffs, grid),
        AccountingMode::OffsetOnly => (grid_rate * grid_draw + pv_rate * pv_used) * grid.slot_hours(),
    };
    Ok(d)
}

/// Applies each decision through the battery model and allocates the slot.
/// Returns the dispatch and the per-EV steps in input order.
#[allow(clippy::too_many_arguments)]
pub fn dispatch_slot(
    decisions: &[SwitchDecision],
    states: &[EvState<'_>],
    base_load: f64,
    pv: f64,
    tariffs: &TariffSchedule,
    slot: usize,
    options: &DispatchOptions,
    grid: &TimeGrid,
) -> Result<(SlotDispatch, Vec<SocStep>)> {
    if decisions.len() != states.len() {
        return Err(Error::invalid(format!(
            "{} decisions for {} EVs",
            decisions.len(),
            states.len()
        )));
    }
    let mut steps = Vec::with_capacity(states.len());
    let (mut charge, mut discharge) = (0.0, 0.0);
    for (decision, state) in decisions.iter().zip(states) {
        if decision.ev_id != state.spec.id {
            return Err(Error::invalid(format!(
                "decision for {} paired with EV {}",
                decision.ev_id, state.spec.id
            )));
        }
        let step = soc_after(state, decision.action.power_kw(state.spec.rate_kw()), grid)?;
        if step.delivered_kw > 0.0 {
            charge += step.delivered_kw;
        } else {
            discharge -= step.delivered_kw;
        }
        steps.push(step);
    }
    let d = allocate(slot, base_load, pv, charge, discharge, tariffs, options, grid)?;
    Ok((d, steps))
}

/// Everything but the fleet and the method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub base_load: Profile,
    pub pv: Profile,
    pub tariffs: TariffSchedule,
    pub flag_power: f64,
    pub urgency_margin: usize,
    pub options: DispatchOptions,
    pub grid_cap_kw: Option<f64>,
}

impl Scenario {
    pub fn policy(&self, method: Method) -> PolicyParams {
        PolicyParams {
            method,
            flag_power: self.flag_power,
            urgency_margin: self.urgency_margin,
        }
    }

    fn check_dimensions(&self) -> Result<()> {
        let n = self.grid.slots_per_day();
        if self.base_load.len() != n || self.pv.len() != n || self.tariffs.len() != n {
            return Err(Error::invalid(format!(
                "base load, pv, and tariffs have {}, {}, {} slots; grid has {n}",
                self.base_load.len(),
                self.pv.len(),
                self.tariffs.len()
            )));
        }
        if self.flag_power.is_nan() {
            return Err(Error::invalid("flag power is NaN"));
        }
        Ok(())
    }

    fn check_fleet(&self, fleet: &[EvSpec]) -> Result<()> {
        if let Some(ev) = fleet.iter().find(|ev| ev.arrival_slot == ev.departure_slot) {
            return Err(Error::Infeasible(format!(
                "EV {} is parked for less than one slot",
                ev.id
            )));
        }
        let violations = validate_fleet(fleet, &self.grid);
        if !violations.is_empty() {
            return Err(Error::Scenario(violations.iter().map(ToString::to_string).collect()));
        }
        Ok(())
    }
}

/// Energy and money totals over the day.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub cost_usd: f64,
    pub grid_kwh: f64,
    pub pv_kwh: f64,
    pub charge_kwh: f64,
    pub discharge_kwh: f64,
    pub offset_kwh: f64,
    pub export_kwh: f64,
    pub peak_grid_kw: f64,
}

impl Totals {
    pub fn from_slots(slots: &[SlotDispatch], slot_hours: f64) -> Self {
        let mut t = Totals::default();
        for d in slots {
            t.cost_usd += d.cost;
            t.grid_kwh += d.grid_draw * slot_hours;
            t.pv_kwh += d.pv_used * slot_hours;
            t.charge_kwh += d.ev_charge_total * slot_hours;
            t.discharge_kwh += d.ev_discharge_total * slot_hours;
            t.offset_kwh += d.discharge_offset * slot_hours;
            t.export_kwh += d.export * slot_hours;
            t.peak_grid_kw = t.peak_grid_kw.max(d.grid_draw);
        }
        t
    }
}

/// One method run over one day. Per-EV matrices are indexed `[slot][ev]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationResult {
    pub method: Method,
    pub slot_hours: f64,
    pub slots: Vec<SlotDispatch>,
    pub ev_ids: Vec<String>,
    /// SoC at the end of each slot; outside the parked interval, the departure SoC.
    pub soc: Vec<Vec<f64>>,
    /// Delivered terminal power, kW, charge > 0.
    pub ev_power: Vec<Vec<f64>>,
    pub actions: Vec<Vec<Action>>,
    pub forced_by_deadline: Vec<Vec<bool>>,
    pub departure_soc: Vec<f64>,
    pub totals: Totals,
}

impl SimulationResult {
    /// Re-derives every recorded invariant from the trajectory.
    pub fn audit(&self, scenario: &Scenario, fleet: &[EvSpec]) -> Result<()> {
        let fail = |msg: String| Err(Error::Invariant(msg));
        let grid = &scenario.grid;
        for d in &self.slots {
            if let Err(msg) = d.check(BALANCE_TOL_KW) {
                return fail(msg);
            }
        }
        let again = Totals::from_slots(&self.slots, self.slot_hours);
        if again != self.totals {
            return fail("totals differ from the per-slot sums".into());
        }
        for (i, spec) in fleet.iter().enumerate() {
            let mut stored = 0.0;
            for t in 0..grid.slots_per_day() {
                let soc = self.soc[t][i];
                if !(0.0..=spec.soc_max).contains(&soc) {
                    return fail(format!("{} SoC {soc} outside [0, soc_max] at slot {t}", spec.id));
                }
                let p = self.ev_power[t][i];
                let action = self.actions[t][i];
                let parked = crate::model::is_parked(spec, t, grid)?;
                if !parked && (p != 0.0 || action != Action::Idle) {
                    return fail(format!("{} active while away at slot {t}", spec.id));
                }
                if (action == Action::Charge && p < 0.0) || (action == Action::Discharge && p > 0.0) {
                    return fail(format!("{} power {p} contradicts {action:?} at slot {t}", spec.id));
                }
                stored += if p > 0.0 {
                    p * spec.charge_efficiency
                } else {
                    p / spec.discharge_efficiency
                };
            }
            let expected = spec.initial_soc + 100.0 / spec.capacity_kwh * stored * self.slot_hours;
            if (self.departure_soc[i] - expected).abs() > 1e-9 {
                return fail(format!(
                    "{} departs at {} but energy bookkeeping gives {expected}",
                    spec.id, self.departure_soc[i]
                ));
            }
        }
        Ok(())
    }
}

/// Runs `method` over one circular day.
///
/// Each EV is followed from its arrival slot along the circular order, so the
/// loop walks two unrolled copies of the day and maps each step back onto its
/// day slot. EVs interact only through the per-slot dispatch, which is done
/// once all decisions are known.
pub fn simulate(scenario: &Scenario, fleet: &[EvSpec], method: Method) -> Result<SimulationResult> {
    scenario.check_dimensions()?;
    scenario.check_fleet(fleet)?;
    let grid = &scenario.grid;
    let n = grid.slots_per_day();
    let m = fleet.len();
    let params = scenario.policy(method);

    let mut states: Vec<EvState<'_>> = fleet.iter().map(EvState::arrived).collect();
    let durations: Vec<usize> = fleet.iter().map(|ev| ev.parked_slots(grid)).collect();
    let mut soc = vec![vec![0.0; m]; n];
    let mut ev_power = vec![vec![0.0; m]; n];
    let mut actions = vec![vec![Action::Idle; m]; n];
    let mut forced = vec![vec![false; m]; n];

    let mut active = Vec::with_capacity(m);
    let mut active_states = Vec::with_capacity(m);
    for step in 0..2 * n {
        let slot = step % n;
        active.clear();
        active.extend((0..m).filter(|&i| {
            let a = fleet[i].arrival_slot;
            a <= step && step < a + durations[i]
        }));
        if active.is_empty() {
            continue;
        }
        active_states.clear();
        active_states.extend(active.iter().map(|&i| states[i]));
        let decisions = decide_switches(&params, &active_states, slot, &scenario.base_load, &scenario.pv, grid)?;
        for (&i, decision) in active.iter().zip(&decisions) {
            let state = &mut states[i];
            let s = soc_after(state, decision.action.power_kw(state.spec.rate_kw()), grid)?;
            state.soc = s.soc;
            soc[slot][i] = s.soc;
            ev_power[slot][i] = s.delivered_kw;
            actions[slot][i] = decision.action;
            forced[slot][i] = decision.forced_by_deadline;
        }
    }

    let departure_soc: Vec<f64> = states.iter().map(|s| s.soc).collect();
    for (i, spec) in fleet.iter().enumerate() {
        for (t, row) in soc.iter_mut().enumerate() {
            if grid.forward_distance(spec.arrival_slot, t) >= durations[i] {
                row[i] = departure_soc[i];
            }
        }
    }

    let mut slots = Vec::with_capacity(n);
    for t in 0..n {
        let (mut charge, mut discharge) = (0.0, 0.0);
        for &p in &ev_power[t] {
            if p > 0.0 {
                charge += p;
            } else {
                discharge -= p;
            }
        }
        let d = allocate(
            t,
            scenario.base_load[t],
            scenario.pv[t],
            charge,
            discharge,
            &scenario.tariffs,
            &scenario.options,
            grid,
        )?;
        if let Some(cap) = scenario.grid_cap_kw {
            if d.grid_draw > cap + BALANCE_TOL_KW {
                let n_forced = forced[t].iter().filter(|&&f| f).count();
                return Err(Error::Infeasible(format!(
                    "slot {t}: grid draw {:.3} kW exceeds the {cap} kW cap ({n_forced} EV(s) on forced charge)",
                    d.grid_draw
                )));
            }
        }
        slots.push(d);
    }

    let totals = Totals::from_slots(&slots, grid.slot_hours());
    Ok(SimulationResult {
        method,
        slot_hours: grid.slot_hours(),
        slots,
        ev_ids: fleet.iter().map(|ev| ev.id.clone()).collect(),
        soc,
        ev_power,
        actions,
        forced_by_deadline: forced,
        departure_soc,
        totals,
    })
}
