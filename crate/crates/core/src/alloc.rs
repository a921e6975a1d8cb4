//! Joint CPU-share / transmit-power allocation for one device on one sub-channel.
//!
//! The device minimises `E_cp + E_cm` subject to finishing training and upload within
//! `T_max`. Substituting `x1 = 1/tau` and `x2 = 1/R` (seconds per bit) turns the problem into
//!
//! ```text
//! min  kappa mu beta C^2 / x1^2 + x2 D (2^(1/(B x2)) - 1) / |h|^2
//! s.t. (mu beta / C) x1 + D x2 <= T_max,   x1 >= 1,   x2 >= v1 = 1 / (B log2(1 + P |h|^2))
//! ```
//!
//! which is convex. The time constraint is always active at the optimum, so the solution is
//! one of four KKT cases: both bounds tight, CPU at full speed, power at full level, or an
//! interior stationary point found by bisection along the active constraint.
//!
//! [`oracle`] solves the same problem independently by a dense grid plus golden-section search
//! on the one-dimensional restriction, and [`baseline_fixed`] evaluates fixed-share policies.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wireless::{comm_time_energy, comp_time_energy, DeviceProfile, SystemParams};

/// Relative tolerance for classifying an instance as sitting exactly on the feasibility
/// boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

const BISECTION_MAX_ITER: usize = 2000;
const GOLDEN_MAX_ITER: usize = 400;

/// Data of one (device, sub-channel) allocation problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationInstance {
    /// CPU frequency `C`, cycles/s.
    pub cpu_hz: f64,
    /// Maximum transmit power `P`, W.
    pub power_w: f64,
    /// Local sample count `beta`.
    pub beta: f64,
    /// Normalised channel gain `|h|^2`.
    pub gain: f64,
    pub bandwidth_hz: f64,
    pub gradient_bits: f64,
    pub kappa: f64,
    pub mu_cycles: f64,
    pub t_max_s: f64,
}

impl AllocationInstance {
    pub fn new(device: &DeviceProfile, gain: f64, params: &SystemParams) -> Self {
        Self {
            cpu_hz: device.cpu_hz,
            power_w: device.power_w,
            beta: device.beta as f64,
            gain,
            bandwidth_hz: params.bandwidth_hz,
            gradient_bits: params.gradient_bits,
            kappa: params.kappa,
            mu_cycles: params.mu_cycles,
            t_max_s: device.t_max_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("C", self.cpu_hz),
            ("P", self.power_w),
            ("beta", self.beta),
            ("|h|^2", self.gain),
            ("B", self.bandwidth_hz),
            ("D", self.gradient_bits),
            ("kappa", self.kappa),
            ("mu", self.mu_cycles),
            ("T_max", self.t_max_s),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Equivalent device profile and system constants, for the wireless-env cost functions.
    pub fn split(&self) -> (DeviceProfile, SystemParams) {
        let device = DeviceProfile {
            id: 0,
            distance_m: 1.0,
            cpu_hz: self.cpu_hz,
            power_w: self.power_w,
            beta: 1,
            t_max_s: self.t_max_s,
        };
        // beta is folded into the per-sample cycle count so fractional beta survives.
        let params = SystemParams {
            bandwidth_hz: self.bandwidth_hz,
            gradient_bits: self.gradient_bits,
            kappa: self.kappa,
            mu_cycles: self.mu_cycles * self.beta,
            ..SystemParams::default()
        };
        (device, params)
    }

    /// Computing time at full CPU speed, `mu beta / C`.
    pub fn full_speed_time(&self) -> f64 {
        self.mu_cycles * self.beta / self.cpu_hz
    }

    /// Seconds per bit at full power, `v1 = 1 / (B log2(1 + P |h|^2))`.
    pub fn v1(&self) -> f64 {
        LN_2 / (self.bandwidth_hz * (self.power_w * self.gain).ln_1p())
    }

    /// `v2 = 1 / (B (T_max - mu beta / C))`.
    pub fn v2(&self) -> f64 {
        1.0 / (self.bandwidth_hz * (self.t_max_s - self.full_speed_time()))
    }

    /// Largest admissible `x2`, reached when the CPU runs at full speed.
    pub fn x2_upper(&self) -> f64 {
        (self.t_max_s - self.full_speed_time()) / self.gradient_bits
    }

    /// `x1` on the active time constraint.
    pub fn x1_on_constraint(&self, x2: f64) -> f64 {
        (self.t_max_s - self.gradient_bits * x2) / self.full_speed_time()
    }

    /// Objective in the substituted variables.
    pub fn energy(&self, x1: f64, x2: f64) -> f64 {
        self.compute_energy(x1) + self.transmit_energy(x2)
    }

    fn compute_energy(&self, x1: f64) -> f64 {
        self.kappa * self.mu_cycles * self.beta * self.cpu_hz * self.cpu_hz / (x1 * x1)
    }

    fn transmit_energy(&self, x2: f64) -> f64 {
        x2 * self.gradient_bits * (LN_2 / (self.bandwidth_hz * x2)).exp_m1() / self.gain
    }

    /// Slack `T_max - (mu beta / C + D v1)`; negative means infeasible.
    fn boundary_gap(&self) -> f64 {
        self.t_max_s - (self.full_speed_time() + self.gradient_bits * self.v1())
    }

    /// Derivative of the energy along the active constraint, divided by `D`:
    /// `2 kappa C^3 / x1^3 - q(ln2 / (B x2)) / |h|^2`. Increasing in `x2`.
    pub fn stationarity(&self, x2: f64) -> f64 {
        let x1 = self.x1_on_constraint(x2);
        2.0 * self.kappa * self.cpu_hz.powi(3) / x1.powi(3) - q(LN_2 / (self.bandwidth_hz * x2)) / self.gain
    }
}

/// `q(z) = z e^z - e^z + 1`, evaluated by series near zero where the direct form cancels.
fn q(z: f64) -> f64 {
    if z.abs() < 0.1 {
        // sum_{k>=2} (k-1) z^k / k!
        let mut term = z; // z^k / k! for k = 1
        let mut sum = 0.0;
        for k in 2..30 {
            term *= z / k as f64;
            sum += (k - 1) as f64 * term;
        }
        sum
    } else {
        z * z.exp() - z.exp_m1()
    }
}

/// Which KKT case produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    /// Full CPU and full power, with the time budget exactly used up.
    Boundary,
    /// Full CPU (`x1 = 1`); transmit power reduced to fill the remaining time.
    FullCpu,
    /// Full power (`x2 = v1`); CPU slowed to fill the remaining time.
    FullPower,
    /// Both shares interior.
    Interior,
}

impl Case {
    pub fn id(self) -> u8 {
        match self {
            Case::Boundary => 1,
            Case::FullCpu => 2,
            Case::FullPower => 3,
            Case::Interior => 4,
        }
    }
}

/// A feasible operating point and its costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Set by [`solve`]; `None` for oracle and baseline points.
    pub case: Option<Case>,
    /// The interior root could not be bracketed and the oracle answer was used instead.
    pub fallback: bool,
    pub tau: f64,
    pub alpha: f64,
    pub x1: f64,
    pub x2: f64,
    pub t_cp: f64,
    pub t_cm: f64,
    pub e_cp: f64,
    pub e_cm: f64,
}

impl Solution {
    pub fn e_total(&self) -> f64 {
        self.e_cp + self.e_cm
    }

    pub fn t_total(&self) -> f64 {
        self.t_cp + self.t_cm
    }

    fn from_x(inst: &AllocationInstance, case: Option<Case>, x1: f64, x2: f64) -> Self {
        let x1 = x1.max(1.0);
        let x2 = x2.max(inst.v1());
        let alpha = ((LN_2 / (inst.bandwidth_hz * x2)).exp_m1() / (inst.power_w * inst.gain)).min(1.0);
        Self {
            case,
            fallback: false,
            tau: 1.0 / x1,
            alpha,
            x1,
            x2,
            t_cp: inst.full_speed_time() * x1,
            t_cm: inst.gradient_bits * x2,
            e_cp: inst.compute_energy(x1),
            e_cm: inst.transmit_energy(x2),
        }
    }
}

/// Outcome of an allocation: infeasible pairs carry no energy at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum AllocationResult {
    Infeasible,
    Feasible(Solution),
}

impl AllocationResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, AllocationResult::Feasible(_))
    }

    pub fn solution(&self) -> Option<&Solution> {
        match self {
            AllocationResult::Feasible(s) => Some(s),
            AllocationResult::Infeasible => None,
        }
    }

    pub fn energy(&self) -> Option<f64> {
        self.solution().map(Solution::e_total)
    }
}

/// Whether the device can finish within `T_max` at full CPU and full power.
pub fn feasible(inst: &AllocationInstance) -> bool {
    inst.boundary_gap() >= 0.0
}

/// The four case conditions evaluated independently, in case order.
///
/// For a feasible instance exactly one entry is true.
pub fn case_conditions(inst: &AllocationInstance) -> [bool; 4] {
    let gap = inst.boundary_gap();
    let on_boundary = gap.abs() <= BOUNDARY_TOL * inst.t_max_s;
    let slack = gap > BOUNDARY_TOL * inst.t_max_s;

    let c3 = inst.kappa * inst.cpu_hz.powi(3);
    // D v2 ln2 2^(D v2) - 2^(D v2) + 1 - 2 kappa C^3 |h|^2 > 0
    let full_cpu = slack && {
        let z = LN_2 * inst.gradient_bits * inst.v2();
        q(z) - 2.0 * c3 * inst.gain > 0.0
    };
    // 2^(1/(B v1)) - 1 - (1/(B v1)) ln2 2^(1/(B v1)) + 2 kappa (mu beta)^3 |h|^2 / (T - D v1)^3 > 0
    let full_power = slack && {
        let z = (inst.power_w * inst.gain).ln_1p();
        let work = inst.mu_cycles * inst.beta;
        let rest = inst.t_max_s - inst.gradient_bits * inst.v1();
        -q(z) + 2.0 * inst.kappa * work.powi(3) * inst.gain / rest.powi(3) > 0.0
    };
    let interior = slack && !full_cpu && !full_power;
    [on_boundary, full_cpu, full_power, interior]
}

/// Interior stationary point on the active constraint, by bisection on `x2`.
pub fn case4_root(inst: &AllocationInstance) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (inst.v1(), inst.x2_upper());
    let (s_lo, s_hi) = (inst.stationarity(lo), inst.stationarity(hi));
    if !(lo < hi) || s_lo > 0.0 || s_hi < 0.0 {
        return Err(Error::NoSignChange { lo, hi });
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if inst.stationarity(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever endpoint sits closer to the root.
    let x2 = if inst.stationarity(lo).abs() <= inst.stationarity(hi).abs() {
        lo
    } else {
        hi
    };
    Ok((inst.x1_on_constraint(x2), x2))
}

/// Closed-form optimal allocation.
pub fn solve(inst: &AllocationInstance) -> AllocationResult {
    if !feasible(inst) {
        return AllocationResult::Infeasible;
    }
    let [boundary, full_cpu, full_power, _] = case_conditions(inst);
    let v1 = inst.v1();
    let solution = if boundary {
        Solution::from_x(inst, Some(Case::Boundary), 1.0, v1)
    } else if full_cpu {
        Solution::from_x(inst, Some(Case::FullCpu), 1.0, inst.x2_upper())
    } else if full_power {
        Solution::from_x(inst, Some(Case::FullPower), inst.x1_on_constraint(v1), v1)
    } else {
        match case4_root(inst) {
            Ok((x1, x2)) => Solution::from_x(inst, Some(Case::Interior), x1, x2),
            Err(_) => {
                let mut s = *oracle(inst, 1000)
                    .expect("instance is feasible")
                    .solution()
                    .expect("oracle returns a feasible point");
                s.case = Some(Case::Interior);
                s.fallback = true;
                s
            }
        }
    };
    AllocationResult::Feasible(solution)
}

/// Numerical reference solver.
///
/// Since the time constraint binds at the optimum, the problem reduces to minimising
/// `E(x1(x2), x2)` over `x2` in `[v1, (T_max - mu beta / C) / D]`. The objective is scanned
/// on `grid_size` evenly spaced points and the best cell is refined by golden-section search.
pub fn oracle(inst: &AllocationInstance, grid_size: usize) -> Result<AllocationResult> {
    if !feasible(inst) {
        return Err(Error::Infeasible);
    }
    let lo = inst.v1();
    let hi = inst.x2_upper();
    let objective = |x2: f64| inst.energy(inst.x1_on_constraint(x2).max(1.0), x2);
    if !(hi > lo) {
        let x1 = inst.x1_on_constraint(lo).max(1.0);
        return Ok(AllocationResult::Feasible(Solution::from_x(inst, None, x1, lo)));
    }

    let n = grid_size.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let at = |i: usize| if i == n - 1 { hi } else { lo + step * i as f64 };
    let best = (0..n)
        .map(|i| (i, objective(at(i))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("grid is non-empty");

    let mut a = at(best.saturating_sub(1));
    let mut b = at((best + 1).min(n - 1));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..GOLDEN_MAX_ITER {
        if b - a <= f64::EPSILON * b.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    let candidates = [at(best), c, d, a, b];
    let x2 = candidates
        .into_iter()
        .min_by(|p, q| objective(*p).total_cmp(&objective(*q)))
        .expect("non-empty");
    let x1 = inst.x1_on_constraint(x2).max(1.0);
    Ok(AllocationResult::Feasible(Solution::from_x(inst, None, x1, x2)))
}

/// Fixed CPU/power shares `(tau0, alpha0)`; feasible iff the time budget is met.
pub fn baseline_fixed(inst: &AllocationInstance, tau0: f64, alpha0: f64) -> Result<AllocationResult> {
    let (device, params) = inst.split();
    let (t_cp, e_cp) = comp_time_energy(tau0, &device, &params)?;
    let comm = comm_time_energy(alpha0, &device, inst.gain, &params)?;
    if t_cp + comm.time > inst.t_max_s {
        return Ok(AllocationResult::Infeasible);
    }
    Ok(AllocationResult::Feasible(Solution {
        case: None,
        fallback: false,
        tau: tau0,
        alpha: alpha0,
        x1: 1.0 / tau0,
        x2: 1.0 / comm.rate,
        t_cp,
        t_cm: comm.time,
        e_cp,
        e_cm: comm.energy,
    }))
}

/// Resource allocation policy used when building energy tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    /// Closed-form KKT allocation.
    #[default]
    Kkt,
    /// `tau = alpha = 0.5`.
    Fra1,
    /// `tau = alpha = 1`.
    Fra2,
}

impl AllocationMode {
    pub fn allocate(self, inst: &AllocationInstance) -> AllocationResult {
        match self {
            AllocationMode::Kkt => solve(inst),
            AllocationMode::Fra1 => baseline_fixed(inst, 0.5, 0.5).expect("fixed shares are valid"),
            AllocationMode::Fra2 => baseline_fixed(inst, 1.0, 1.0).expect("fixed shares are valid"),
        }
    }
}

/// Parses a batch of instances, one per line:
/// `C P beta |h|^2 B D kappa mu T_max`, separated by whitespace and/or commas.
/// Blank lines and `#` comments are skipped.
pub fn parse_instances(text: &str) -> Result<Vec<AllocationInstance>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("'{t}': {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != 9 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 9 fields, found {}", values.len()),
            });
        }
        let inst = AllocationInstance {
            cpu_hz: values[0],
            power_w: values[1],
            beta: values[2],
            gain: values[3],
            bandwidth_hz: values[4],
            gradient_bits: values[5],
            kappa: values[6],
            mu_cycles: values[7],
            t_max_s: values[8],
        };
        inst.validate().map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}

/// Header for [`format_result`] rows.
pub const RESULT_HEADER: &str = "feasible,case,tau,alpha,t_cp,t_cm,e_cp,e_cm,e_total";

/// One comma-separated output row.
pub fn format_result(result: &AllocationResult) -> String {
    match result {
        AllocationResult::Infeasible => "false,,,,,,,,".to_string(),
        AllocationResult::Feasible(s) => format!(
            "true,{},{},{},{},{},{},{},{}",
            s.case.map(|c| c.id().to_string()).unwrap_or_default(),
            s.tau,
            s.alpha,
            s.t_cp,
            s.t_cm,
            s.e_cp,
            s.e_cm,
            s.e_total()
        ),
    }
}
