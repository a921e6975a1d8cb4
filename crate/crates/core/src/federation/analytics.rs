//! Analytics around the selection error: the accumulated-error divergence bound, an empirical
//! Lipschitz estimate, class distributions of device sets, the closed-form variance of the
//! weighted selection error, and the class-wise decomposition of that error.

use itertools::Itertools;

use super::aggregate::selection_error;
use super::DeviceMap;
use crate::error::{Error, Result};
use crate::learning::{local_loss_and_gradient, DeviceDataset, Gradient, ModelParams, Sample};

/// Largest number of subsets [`variance_enumeration_oracle`] will visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Upper bound on `||w^(t+1) - w_T^(t+1)||` after `t = errors.len()` rounds:
///
/// `(1+lL)^t g0 + l ||sum_{i<=t} e_i|| + l^2 L sum_{j=1}^{t-1} (1+lL)^{j-1} ||sum_{i<=t-j} e_i||`
///
/// where `l` is the learning rate and `g0` the initial gap.
pub fn divergence_bound(errors: &[Gradient], lambda: f64, lipschitz: f64, init_gap: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("error history is empty".into()));
    }
    if !(lambda > 0.0) || lipschitz < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need lambda > 0 and L >= 0, got lambda={lambda}, L={lipschitz}"
        )));
    }
    let t = errors.len();
    // prefix_norms[k] = ||e_1 + ... + e_k||, prefix_norms[0] = 0
    let mut prefix_norms = Vec::with_capacity(t + 1);
    prefix_norms.push(0.0);
    let mut running = Gradient::zeros(errors[0].len());
    for e in errors {
        running.axpy(1.0, e);
        prefix_norms.push(running.norm());
    }
    let growth = 1.0 + lambda * lipschitz;
    let mut tail = 0.0;
    let mut factor = 1.0;
    for j in 1..t {
        tail += factor * prefix_norms[t - j];
        factor *= growth;
    }
    Ok(growth.powi(t as i32) * init_gap + lambda * prefix_norms[t] + lambda * lambda * lipschitz * tail)
}

/// `||g - g'|| / ||w - w'||`, or `None` for coincident points.
pub fn lipschitz_ratio(w: &[f64], w_prime: &[f64], g: &Gradient, g_prime: &Gradient) -> Option<f64> {
    let dw = w
        .iter()
        .zip(w_prime)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dw == 0.0 {
        return None;
    }
    Some(g.sub(g_prime).norm() / dw)
}

/// Largest observed gradient-difference ratio over `pairs`.
///
/// This is a lower bound on the true Lipschitz constant of `grad`. Coincident pairs are
/// skipped; at least one distinct pair is required.
pub fn estimate_lipschitz<F>(pairs: &[(&[f64], &[f64])], mut grad: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Gradient>,
{
    let mut best: Option<f64> = None;
    for (w, w_prime) in pairs {
        if w.len() != w_prime.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                actual: w_prime.len(),
            });
        }
        if w == w_prime {
            continue;
        }
        let ratio = lipschitz_ratio(w, w_prime, &grad(w)?, &grad(w_prime)?).expect("pairs are distinct");
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or_else(|| Error::InvalidArgument("need at least one pair of distinct models".into()))
}

/// Label distribution of a device set, `sum_n omega_n beta_n P_n / sum_n beta_n`.
///
/// Without weights the result is a probability vector.
pub fn class_distribution(
    shards: &[DeviceDataset],
    selected: &[usize],
    weights: Option<&DeviceMap<f64>>,
    classes: usize,
) -> Result<Vec<f64>> {
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut mass = vec![0.0; classes];
    let mut total = 0.0;
    for &n in selected {
        let shard = shards
            .get(n)
            .ok_or_else(|| Error::InvalidArgument(format!("no shard for device {n}")))?;
        let omega = match weights {
            Some(w) => *w
                .get(&n)
                .ok_or_else(|| Error::InvalidArgument(format!("no weight for device {n}")))?,
            None => 1.0,
        };
        for s in shard.samples() {
            if s.label >= classes {
                return Err(Error::InvalidArgument(format!("label {} out of range", s.label)));
            }
            mass[s.label] += omega;
        }
        total += shard.beta() as f64;
    }
    Ok(mass.into_iter().map(|m| m / total).collect())
}

fn full_gradient(grads_all: &[Gradient], betas: &[usize]) -> Gradient {
    let mut acc = Gradient::zeros(grads_all[0].len());
    let mut total = 0.0;
    for (g, &b) in grads_all.iter().zip(betas) {
        acc.axpy(b as f64, g);
        total += b as f64;
    }
    acc.scale(1.0 / total)
}

fn check_population(grads_all: &[Gradient], betas: &[usize], weights: &[f64], s: usize) -> Result<()> {
    let n = grads_all.len();
    if n == 0 {
        return Err(Error::EmptySelection);
    }
    if betas.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} gradients, {} sample counts and {} weights",
            n,
            betas.len(),
            weights.len()
        )));
    }
    if s < 1 || s > n {
        return Err(Error::InvalidArgument(format!("subset size {s} outside 1..={n}")));
    }
    Ok(())
}

/// Closed-form expected squared selection error for a uniformly drawn `s`-subset:
///
/// `(1 - s/N) sum_n beta_n^2 ||omega_n grad_n - grad_F||^2 / (s (N-1) mean(beta)^2)`.
///
/// `weights[n]` is the weight device `n` would receive if selected.
pub fn variance_formula(grads_all: &[Gradient], betas: &[usize], weights: &[f64], s: usize) -> Result<f64> {
    check_population(grads_all, betas, weights, s)?;
    let n = grads_all.len();
    if s == n {
        return Ok(0.0);
    }
    let full = full_gradient(grads_all, betas);
    let mean_beta = betas.iter().sum::<usize>() as f64 / n as f64;
    let spread: f64 = grads_all
        .iter()
        .zip(betas)
        .zip(weights)
        .map(|((g, &b), &w)| {
            let dev = g.scale(w).sub(&full);
            (b as f64).powi(2) * dev.norm().powi(2)
        })
        .sum();
    let n = n as f64;
    let s = s as f64;
    Ok((1.0 - s / n) * spread / (s * (n - 1.0) * mean_beta * mean_beta))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact mean of `||sum_{S} w b g / sum_{S} b - grad_F||^2` over every `s`-subset `S`.
pub fn variance_enumeration_oracle(
    grads_all: &[Gradient],
    betas: &[usize],
    weights: &[f64],
    s: usize,
) -> Result<f64> {
    check_population(grads_all, betas, weights, s)?;
    let n = grads_all.len();
    let count = binomial(n, s);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let full = full_gradient(grads_all, betas);
    let dim = full.len();
    let mut total = 0.0;
    let mut visited = 0usize;
    for subset in (0..n).combinations(s) {
        let beta_sum: f64 = subset.iter().map(|&i| betas[i] as f64).sum();
        let mut sq = 0.0;
        for c in 0..dim {
            let num: f64 = subset
                .iter()
                .map(|&i| weights[i] * betas[i] as f64 * grads_all[i][c])
                .sum();
            let diff = num / beta_sum - full[c];
            sq += diff * diff;
        }
        total += sq;
        visited += 1;
    }
    Ok(total / visited as f64)
}

fn sample_key(s: &Sample) -> (usize, Vec<u64>) {
    (s.label, s.features.iter().map(|f| f.to_bits()).collect())
}

/// For every device and every class it holds, the class's samples must be whole copies of
/// that class's pool.
fn verify_shared_pools(pools: &[Vec<Sample>], shards: &[DeviceDataset]) -> Result<()> {
    let pool_keys: Vec<Vec<(usize, Vec<u64>)>> = pools
        .iter()
        .enumerate()
        .map(|(c, pool)| {
            if let Some(bad) = pool.iter().find(|s| s.label != c) {
                return Err(Error::FixtureViolation(format!(
                    "pool {c} contains a sample labelled {}",
                    bad.label
                )));
            }
            Ok(pool.iter().map(sample_key).sorted().collect())
        })
        .collect::<Result<_>>()?;

    for (n, shard) in shards.iter().enumerate() {
        for (c, keys) in pool_keys.iter().enumerate() {
            let mine: Vec<_> = shard
                .samples()
                .iter()
                .filter(|s| s.label == c)
                .map(sample_key)
                .sorted()
                .collect();
            if mine.is_empty() {
                continue;
            }
            if keys.is_empty() || mine.len() % keys.len() != 0 {
                return Err(Error::FixtureViolation(format!(
                    "device {n} holds {} class-{c} samples, not a multiple of the pool size {}",
                    mine.len(),
                    keys.len()
                )));
            }
            let copies = mine.len() / keys.len();
            let expected: Vec<_> = keys
                .iter()
                .flat_map(|k| std::iter::repeat_n(k.clone(), copies))
                .collect();
            if mine != expected {
                return Err(Error::FixtureViolation(format!(
                    "device {n} class-{c} samples differ from the shared pool"
                )));
            }
        }
        if shard.samples().iter().any(|s| s.label >= pools.len()) {
            return Err(Error::FixtureViolation(format!(
                "device {n} holds a label with no pool"
            )));
        }
    }
    Ok(())
}

/// Both sides of the class-wise error decomposition on a shared-pool fixture.
///
/// `lhs` is the selection error computed from device gradients; `rhs` is
/// `sum_c [P_S(c) - P_N(c)] grad_c`, where `grad_c` is the mean loss gradient over class `c`'s
/// pool and `P_S` is the (optionally age-weighted) class distribution of the selected set.
pub fn error_decomposition_check(
    model: &ModelParams,
    pools: &[Vec<Sample>],
    shards: &[DeviceDataset],
    selected: &[usize],
    weights: Option<&DeviceMap<f64>>,
) -> Result<(Gradient, Gradient)> {
    verify_shared_pools(pools, shards)?;
    let grads: DeviceMap<Gradient> = shards
        .iter()
        .enumerate()
        .map(|(n, shard)| Ok((n, local_loss_and_gradient(model, shard)?.1)))
        .collect::<Result<_>>()?;
    let betas: Vec<usize> = shards.iter().map(DeviceDataset::beta).collect();
    let lhs = selection_error(&grads, &betas, selected, weights)?;

    let classes = pools.len();
    let everyone: Vec<usize> = (0..shards.len()).collect();
    let p_sel = class_distribution(shards, selected, weights, classes)?;
    let p_all = class_distribution(shards, &everyone, None, classes)?;
    let mut rhs = Gradient::zeros(model.len());
    for (c, pool) in pools.iter().enumerate() {
        let coeff = p_sel[c] - p_all[c];
        if pool.is_empty() || coeff == 0.0 {
            continue;
        }
        let class_grad = local_loss_and_gradient(model, &DeviceDataset::new(pool.clone())?)?.1;
        rhs.axpy(coeff, &class_grad);
    }
    Ok((lhs, rhs))
}
