mod common;

use parkgrid::dispatch::{brute_force_schedule, objective_cost, simulate, AccountingMode, PvMerit};
use parkgrid::model::{Profile, ProfileKind};
use parkgrid::policy::Method;
use proptest::prelude::*;

use common::{random_ev, random_fleet, random_scenario, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulations_pass_the_audit(seed in any::<u64>(), merit_economic in any::<bool>(), mode in 0usize..3) {
        let mut r = rng(seed);
        let mut scenario = random_scenario(&mut r);
        scenario.options.accounting = AccountingMode::ALL[mode];
        if merit_economic {
            scenario.options.pv_merit = PvMerit::Economic;
        }
        let fleet = random_fleet(&mut r, 30);
        for method in Method::ALL {
            let res = simulate(&scenario, &fleet, method).unwrap();
            res.audit(&scenario, &fleet).unwrap();
            let pv_used: f64 = res.slots.iter().map(|d| d.pv_used).sum();
            let pv_available: f64 = scenario.pv.values().iter().sum();
            prop_assert!(pv_used <= pv_available + 1e-9);
            prop_assert_eq!(&res, &simulate(&scenario, &fleet, method).unwrap());
        }
    }

    #[test]
    fn total_cost_is_the_sum_of_slot_objectives(seed in any::<u64>()) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r);
        let fleet = random_fleet(&mut r, 30);
        let res = simulate(&scenario, &fleet, Method::Proposed).unwrap();
        let mut total = 0.0;
        for d in &res.slots {
            total += objective_cost(d, &scenario.tariffs, &scenario.grid);
        }
        prop_assert_eq!(total, res.totals.cost_usd);
    }

    #[test]
    fn offset_only_changes_the_bill_not_the_trajectory(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut scenario = random_scenario(&mut r);
        let fleet = random_fleet(&mut r, 30);
        let mut runs = Vec::new();
        for mode in AccountingMode::ALL {
            scenario.options.accounting = mode;
            runs.push(simulate(&scenario, &fleet, Method::Proposed).unwrap());
        }
        for run in &runs[1..] {
            prop_assert_eq!(&run.soc, &runs[0].soc);
            prop_assert_eq!(&run.actions, &runs[0].actions);
        }
        let pick = |mode| &runs[AccountingMode::ALL.iter().position(|m| *m == mode).unwrap()];
        let (both, sell_only) = (pick(AccountingMode::OffsetAndSell), pick(AccountingMode::SellOnly));
        let dt = both.slot_hours;
        let offset: f64 = both.slots.iter().map(|d| d.discharge_offset * dt).sum();
        let value: f64 = both.slots.iter().map(|d| scenario.tariffs.grid_rates()[d.slot] * d.discharge_offset * dt).sum();
        prop_assert!((both.totals.grid_kwh + offset - sell_only.totals.grid_kwh).abs() < 1e-6);
        prop_assert!((sell_only.totals.cost_usd - both.totals.cost_usd - value).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn policies_never_beat_the_oracle(seed in any::<u64>(), two in any::<bool>()) {
        let mut r = rng(seed);
        let scenario = random_scenario(&mut r);
        let fleet: Vec<_> = if two {
            (0..2).map(|i| random_ev(&mut r, format!("e{i}"), 5)).collect()
        } else {
            vec![random_ev(&mut r, "e".into(), 8)]
        };
        let best = brute_force_schedule(&scenario, &fleet).unwrap();
        for method in Method::ALL {
            let cost = simulate(&scenario, &fleet, method).unwrap().totals.cost_usd;
            prop_assert!(cost >= best.cost - 1e-9, "{} {} < {}", method, cost, best.cost);
        }
    }
}

#[test]
fn fixture_flag_is_mean_net_load() {
    let config = common::fixture();
    let base = 28.0 * 100.0 + 44.0 * 150.0 + 24.0 * 200.0;
    let pv = 16.0 * 40.0 + 16.0 * 80.0;
    assert!((config.scenario.flag_power - (base - pv) / 96.0).abs() < 1e-9);
}

#[test]
fn zero_pv_infinite_flag_policies_coincide() {
    let mut config = common::fixture();
    config.scenario.pv = Profile::constant(ProfileKind::PvProduction, 0.0, &config.scenario.grid).unwrap();
    config.scenario.flag_power = f64::INFINITY;
    let fleet = config.fleet_specs().unwrap();
    let p = simulate(&config.scenario, &fleet, Method::Proposed).unwrap();
    let s = simulate(&config.scenario, &fleet, Method::SchedulingOnly).unwrap();
    assert_eq!(p.totals, s.totals);
}
