#![allow(dead_code)]

use agefl::alloc::AllocationInstance;
use agefl::rng::SimRng;
use rand::Rng;

pub fn log_uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Instance with every parameter drawn over several decades and `T_max` unset.
fn raw_instance(rng: &mut SimRng) -> AllocationInstance {
    AllocationInstance {
        cpu_hz: log_uniform(rng, 1e8, 3e9),
        power_w: log_uniform(rng, 1e-3, 1.0),
        beta: rng.random_range(50..=3000) as f64,
        gain: log_uniform(rng, 1e-1, 1e7),
        bandwidth_hz: log_uniform(rng, 1e5, 1e7),
        gradient_bits: log_uniform(rng, 1e5, 3e7),
        kappa: log_uniform(rng, 1e-32, 1e-24),
        mu_cycles: log_uniform(rng, 1e5, 1e7),
        t_max_s: 1.0,
    }
}

/// Time needed at full CPU and full power.
pub fn min_time(inst: &AllocationInstance) -> f64 {
    inst.full_speed_time() + inst.gradient_bits * inst.v1()
}

/// Feasible instance; about 2% sit exactly on the feasibility boundary.
pub fn feasible_instance(rng: &mut SimRng) -> AllocationInstance {
    let mut inst = raw_instance(rng);
    let base = min_time(&inst);
    inst.t_max_s = if rng.random_bool(0.02) {
        base
    } else {
        base * (1.0 + log_uniform(rng, 1e-4, 20.0))
    };
    inst
}

/// Instance that is infeasible roughly a third of the time.
pub fn any_instance(rng: &mut SimRng) -> AllocationInstance {
    let mut inst = raw_instance(rng);
    inst.t_max_s = min_time(&inst) * log_uniform(rng, 0.5, 20.0);
    inst
}
