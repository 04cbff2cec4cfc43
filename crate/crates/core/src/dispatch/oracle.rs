//! Exhaustive schedule search for small instances.
//!
//! Every assignment of charge/idle/discharge to each parked EV-slot is tried,
//! subject to the same SoC guards as the switching policy and to reaching the
//! target SoC at departure (for EVs that can reach it at all). Each complete
//! schedule is costed through [`allocate`], so the minimum is a lower bound on
//! the cost of any policy run on the same instance.

use crate::model::{soc_after, EvSpec, EvState};
use crate::policy::{required_charge_slots, Action};
use crate::{Error, Result};

use super::{allocate, Scenario};

/// Largest `3^(parked EV-slots)` the search accepts.
pub const MAX_SEARCH_SPACE: f64 = 1e7;

// a later schedule must beat the incumbent by more than this to replace it
const TIE_EPS: f64 = 1e-12;
const TARGET_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSchedule {
    /// Per EV, one action per parked slot starting at its arrival.
    pub actions: Vec<Vec<Action>>,
    /// Total cost of the day, $.
    pub cost: f64,
    /// Complete feasible schedules evaluated.
    pub evaluated: u64,
}

struct Search<'a> {
    scenario: &'a Scenario,
    fleet: &'a [EvSpec],
    /// `(ev, day slot, index within the EV's interval)` in enumeration order.
    points: Vec<(usize, usize, usize)>,
    durations: Vec<usize>,
    reachable: Vec<bool>,
    touched: Vec<usize>,
    idle_cost: Vec<f64>,
    idle_total: f64,
    socs: Vec<f64>,
    power: Vec<f64>,
    chosen: Vec<Action>,
    charge: Vec<f64>,
    discharge: Vec<f64>,
    best: Option<(f64, Vec<Action>)>,
    evaluated: u64,
}

impl Search<'_> {
    fn run(&mut self, idx: usize) -> Result<()> {
        if idx == self.points.len() {
            return self.leaf();
        }
        let (ev, _, k) = self.points[idx];
        let spec = &self.fleet[ev];
        let soc = self.socs[ev];
        let left_after = self.durations[ev] - k - 1;
        for action in Action::ALL {
            let allowed = match action {
                Action::Charge => soc < spec.soc_max,
                Action::Idle => true,
                Action::Discharge => soc > spec.soc_min,
            };
            if !allowed {
                continue;
            }
            let state = EvState { spec, soc };
            let step = soc_after(&state, action.power_kw(spec.rate_kw()), &self.scenario.grid)?;
            let next = EvState { spec, soc: step.soc };
            if self.reachable[ev] && required_charge_slots(&next, &self.scenario.grid) > left_after {
                continue;
            }
            self.socs[ev] = step.soc;
            self.power[idx] = step.delivered_kw;
            self.chosen[idx] = action;
            self.run(idx + 1)?;
            self.socs[ev] = soc;
        }
        Ok(())
    }

    fn leaf(&mut self) -> Result<()> {
        for (ev, spec) in self.fleet.iter().enumerate() {
            if self.reachable[ev] && self.socs[ev] < spec.target_soc - TARGET_TOL {
                return Ok(());
            }
        }
        for &t in &self.touched {
            self.charge[t] = 0.0;
            self.discharge[t] = 0.0;
        }
        for (idx, &(_, t, _)) in self.points.iter().enumerate() {
            let p = self.power[idx];
            if p > 0.0 {
                self.charge[t] += p;
            } else {
                self.discharge[t] -= p;
            }
        }
        let s = self.scenario;
        let mut cost = self.idle_total;
        for &t in &self.touched {
            let d = allocate(
                t,
                s.base_load[t],
                s.pv[t],
                self.charge[t],
                self.discharge[t],
                &s.tariffs,
                &s.options,
                &s.grid,
            )?;
            cost += d.cost - self.idle_cost[t];
        }
        self.evaluated += 1;
        let better = match &self.best {
            None => true,
            Some((best, _)) => cost < best - TIE_EPS,
        };
        if better {
            self.best = Some((cost, self.chosen.clone()));
        }
        Ok(())
    }
}

/// Minimum-cost schedule by exhaustive enumeration.
///
/// Schedules are enumerated EV by EV, each EV's slots in order from arrival,
/// trying charge, then idle, then discharge; among equal costs the earliest
/// schedule in that order wins.
pub fn brute_force_schedule(scenario: &Scenario, fleet: &[EvSpec]) -> Result<OracleSchedule> {
    scenario.check_dimensions()?;
    scenario.check_fleet(fleet)?;
    let grid = &scenario.grid;
    let n = grid.slots_per_day();
    let durations: Vec<usize> = fleet.iter().map(|ev| ev.parked_slots(grid)).collect();
    let total: usize = durations.iter().sum();
    let size = 3f64.powi(total as i32);
    if size > MAX_SEARCH_SPACE {
        return Err(Error::SearchTooLarge {
            size,
            limit: MAX_SEARCH_SPACE,
        });
    }

    let mut points = Vec::with_capacity(total);
    for (ev, spec) in fleet.iter().enumerate() {
        for k in 0..durations[ev] {
            points.push((ev, (spec.arrival_slot + k) % n, k));
        }
    }
    let mut touched: Vec<usize> = points.iter().map(|&(_, t, _)| t).collect();
    touched.sort_unstable();
    touched.dedup();

    let mut idle_cost = vec![0.0; n];
    let mut idle_total = 0.0;
    for (t, cost) in idle_cost.iter_mut().enumerate() {
        let d = allocate(
            t,
            scenario.base_load[t],
            scenario.pv[t],
            0.0,
            0.0,
            &scenario.tariffs,
            &scenario.options,
            grid,
        )?;
        *cost = d.cost;
        idle_total += d.cost;
    }

    let reachable = fleet
        .iter()
        .zip(&durations)
        .map(|(spec, &d)| required_charge_slots(&EvState::arrived(spec), grid) <= d)
        .collect();

    let mut search = Search {
        scenario,
        fleet,
        points,
        durations: durations.clone(),
        reachable,
        touched,
        idle_cost,
        idle_total,
        socs: fleet.iter().map(|ev| ev.initial_soc).collect(),
        power: vec![0.0; total],
        chosen: vec![Action::Idle; total],
        charge: vec![0.0; n],
        discharge: vec![0.0; n],
        best: None,
        evaluated: 0,
    };
    search.run(0)?;

    let (cost, flat) = search
        .best
        .ok_or_else(|| Error::Infeasible("no schedule satisfies the SoC constraints".into()))?;
    let mut actions = Vec::with_capacity(fleet.len());
    let mut rest = flat.as_slice();
    for &d in &durations {
        let (head, tail) = rest.split_at(d);
        actions.push(head.to_vec());
        rest = tail;
    }
    Ok(OracleSchedule {
        actions,
        cost,
        evaluated: search.evaluated,
    })
}

/// Total day cost of a fixed action table (one row per EV, one action per
/// parked slot from arrival), with the same semantics as the search.
pub fn evaluate_schedule(scenario: &Scenario, fleet: &[EvSpec], actions: &[Vec<Action>]) -> Result<f64> {
    scenario.check_dimensions()?;
    scenario.check_fleet(fleet)?;
    let grid = &scenario.grid;
    let n = grid.slots_per_day();
    if actions.len() != fleet.len() {
        return Err(Error::invalid("one action row per EV required"));
    }
    let mut charge = vec![0.0; n];
    let mut discharge = vec![0.0; n];
    for (spec, row) in fleet.iter().zip(actions) {
        if row.len() != spec.parked_slots(grid) {
            return Err(Error::invalid(format!("{}: action row length mismatch", spec.id)));
        }
        let mut state = EvState::arrived(spec);
        for (k, &action) in row.iter().enumerate() {
            let step = soc_after(&state, action.power_kw(spec.rate_kw()), grid)?;
            state.soc = step.soc;
            let t = (spec.arrival_slot + k) % n;
            if step.delivered_kw > 0.0 {
                charge[t] += step.delivered_kw;
            } else {
                discharge[t] -= step.delivered_kw;
            }
        }
    }
    let mut cost = 0.0;
    for t in 0..n {
        cost += allocate(
            t,
            scenario.base_load[t],
            scenario.pv[t],
            charge[t],
            discharge[t],
            &scenario.tariffs,
            &scenario.options,
            grid,
        )?
        .cost;
    }
    Ok(cost)
}
