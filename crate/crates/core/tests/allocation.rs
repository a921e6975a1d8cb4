mod common;

use agefl::alloc::{
    baseline_fixed, case4_root, case_conditions, feasible, oracle, solve, AllocationResult, Case,
};
use agefl::rng::seeded;
use agefl::wireless::{comm_time_energy, comp_time_energy};
use common::{any_instance, feasible_instance};

#[test]
fn exactly_one_case_applies_to_every_feasible_instance() {
    let mut rng = seeded(11);
    let mut counts = [0usize; 4];
    for _ in 0..100_000 {
        let inst = feasible_instance(&mut rng);
        let conds = case_conditions(&inst);
        assert_eq!(conds.iter().filter(|&&c| c).count(), 1, "{inst:?} {conds:?}");
        counts[conds.iter().position(|&c| c).unwrap()] += 1;
    }
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
}

#[test]
fn interior_roots_satisfy_both_equations() {
    let mut rng = seeded(12);
    let mut checked = 0;
    while checked < 1000 {
        let inst = feasible_instance(&mut rng);
        if case_conditions(&inst) != [false, false, false, true] {
            continue;
        }
        checked += 1;
        let (x1, x2) = case4_root(&inst).unwrap();
        assert!(x2 > inst.v1() && x2 < inst.x2_upper());
        let cpu = 2.0 * inst.kappa * inst.cpu_hz.powi(3) / x1.powi(3);
        let radio = cpu - inst.stationarity(x2);
        assert!(((cpu - radio) / cpu).abs() <= 1e-9, "{inst:?}");
        let used = inst.full_speed_time() * x1 + inst.gradient_bits * x2;
        assert!(((used - inst.t_max_s) / inst.t_max_s).abs() <= 1e-9);
        let o = oracle(&inst, 1000).unwrap().energy().unwrap();
        let s = solve(&inst).energy().unwrap();
        assert!(((s - o) / o).abs() <= 1e-4);
    }
}

#[test]
fn inverse_map_reproduces_costs_through_the_radio_model() {
    let mut rng = seeded(13);
    for _ in 0..5000 {
        let inst = feasible_instance(&mut rng);
        let s = *solve(&inst).solution().unwrap();
        let (device, params) = inst.split();
        let (t_cp, e_cp) = comp_time_energy(s.tau, &device, &params).unwrap();
        let comm = comm_time_energy(s.alpha, &device, inst.gain, &params).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(t_cp, s.t_cp) <= 1e-9);
        assert!(rel(e_cp, s.e_cp) <= 1e-9);
        assert!(rel(comm.time, s.t_cm) <= 1e-9, "{inst:?}");
        assert!(rel(comm.energy, s.e_cm) <= 1e-9, "{inst:?}");
        assert!(t_cp + comm.time <= inst.t_max_s + 1e-9);
        // x2 = 1 / R
        assert!(rel(s.x2, 1.0 / comm.rate) <= 1e-9);
    }
}

#[test]
fn half_resources_feasible_implies_full_resources_feasible() {
    let mut rng = seeded(14);
    for _ in 0..20_000 {
        let inst = any_instance(&mut rng);
        let fra1 = baseline_fixed(&inst, 0.5, 0.5).unwrap();
        let fra2 = baseline_fixed(&inst, 1.0, 1.0).unwrap();
        if fra1.is_feasible() {
            assert!(fra2.is_feasible());
        }
        assert_eq!(fra2.is_feasible(), feasible(&inst));
        assert_eq!(solve(&inst).is_feasible(), feasible(&inst));
        if let Some(e) = fra1.energy().into_iter().chain(fra2.energy()).reduce(f64::min) {
            let o = oracle(&inst, 1000).unwrap().energy().unwrap();
            assert!(o <= e * (1.0 + 1e-12));
        }
    }
}

#[test]
fn boundary_instances_take_every_resource() {
    let mut rng = seeded(15);
    let mut seen = 0;
    while seen < 200 {
        let inst = feasible_instance(&mut rng);
        if !case_conditions(&inst)[0] {
            continue;
        }
        seen += 1;
        match solve(&inst) {
            AllocationResult::Feasible(s) => {
                assert_eq!(s.case, Some(Case::Boundary));
                assert_eq!(s.tau, 1.0);
                assert!((s.alpha - 1.0).abs() <= 1e-9);
            }
            AllocationResult::Infeasible => panic!("boundary instance reported infeasible"),
        }
    }
}
