use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::DeviceMap;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Uniform `k`-subset of `0..n_devices` without replacement, returned sorted.
pub fn select_random(n_devices: usize, k: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
    if k < 1 || k > n_devices {
        return Err(Error::InvalidArgument(format!(
            "cannot select {k} of {n_devices} devices"
        )));
    }
    let mut picked = index::sample(rng, n_devices, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Age of information per device: rounds since the device last took part in aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AoiVector(Vec<u64>);

impl AoiVector {
    /// Fresh ages, all 1.
    pub fn new(n_devices: usize) -> Self {
        Self(vec![1; n_devices])
    }

    pub fn from_vec(ages: Vec<u64>) -> Result<Self> {
        if ages.contains(&0) {
            return Err(Error::InvalidArgument("ages must be >= 1".into()));
        }
        Ok(Self(ages))
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn get(&self, device: usize) -> u64 {
        self.0[device]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Ages for the next round: devices in `prev_selected` reset to 1, the rest grow by 1.
    pub fn update(&self, prev_selected: &[usize]) -> Self {
        let mut next: Vec<u64> = self.0.iter().map(|a| a + 1).collect();
        for &n in prev_selected {
            next[n] = 1;
        }
        Self(next)
    }
}

/// Age weights `omega_n = A_n |S| / sum_{i in S} A_i` for the selected devices.
pub fn age_weights(aoi: &AoiVector, selected: &[usize]) -> Result<DeviceMap<f64>> {
    age_weights_with_exponent(aoi, selected, 1.0)
}

/// Generalised weights `omega_n = A_n^p |S| / sum_{i in S} A_i^p`; `p = 1` is the default rule.
pub fn age_weights_with_exponent(
    aoi: &AoiVector,
    selected: &[usize],
    exponent: f64,
) -> Result<DeviceMap<f64>> {
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let powered: Vec<f64> = selected
        .iter()
        .map(|&n| (aoi.get(n) as f64).powf(exponent))
        .collect();
    let total: f64 = powered.iter().sum();
    let size = selected.len() as f64;
    Ok(selected
        .iter()
        .zip(powered)
        .map(|(&n, a)| (n, a * size / total))
        .collect())
}
