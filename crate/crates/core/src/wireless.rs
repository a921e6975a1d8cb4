//! Device placement, channel realisation and the per-device time/energy model.
//!
//! All powers are linear watts internally; dBm only appears at the configuration boundary
//! through [`dbm_to_watts`].

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Devices closer than this are placed at this distance.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Smallest power allocation coefficient accepted by [`comm_time_energy`].
pub const MIN_ALPHA: f64 = 1e-12;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// System-wide radio and computing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Bandwidth of one sub-channel, Hz.
    pub bandwidth_hz: f64,
    /// Size of one uploaded gradient, bits.
    pub gradient_bits: f64,
    /// Effective switched capacitance of the CPU.
    pub kappa: f64,
    /// CPU cycles per training sample.
    pub mu_cycles: f64,
    /// Frequency-dependent gain factor (linear).
    pub eta: f64,
    pub path_loss_exp: f64,
    /// Receiver noise power, W.
    pub noise_w: f64,
    pub subchannels: usize,
    pub disc_radius_m: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1e6,
            gradient_bits: 10e6,
            kappa: 1e-29,
            mu_cycles: 1e6,
            eta: 1.0,
            path_loss_exp: 3.76,
            noise_w: dbm_to_watts(-174.0),
            subchannels: 4,
            disc_radius_m: 200.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("gradient_bits", self.gradient_bits),
            ("kappa", self.kappa),
            ("mu_cycles", self.mu_cycles),
            ("eta", self.eta),
            ("path_loss_exp", self.path_loss_exp),
            ("noise_w", self.noise_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.subchannels == 0 {
            return Err(Error::InvalidArgument("subchannels must be positive".into()));
        }
        if !(self.disc_radius_m >= 0.0) {
            return Err(Error::InvalidArgument("disc_radius_m must be >= 0".into()));
        }
        Ok(())
    }

    /// Mean normalised gain `eta d^-a / sigma^2` at distance `d`.
    pub fn mean_gain(&self, distance_m: f64) -> f64 {
        self.eta * distance_m.powf(-self.path_loss_exp) / self.noise_w
    }
}

/// Static per-device state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: usize,
    pub distance_m: f64,
    pub cpu_hz: f64,
    pub power_w: f64,
    /// Local sample count.
    pub beta: usize,
    pub t_max_s: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_m > 0.0 && self.cpu_hz > 0.0 && self.power_w > 0.0 && self.t_max_s > 0.0)
            || self.beta == 0
        {
            return Err(Error::InvalidArgument(format!(
                "device {} has a non-positive parameter",
                self.id
            )));
        }
        Ok(())
    }

    /// Cycles needed for one pass over the local data, `mu beta`.
    pub fn workload_cycles(&self, params: &SystemParams) -> f64 {
        params.mu_cycles * self.beta as f64
    }
}

/// Distances for `n` devices dropped uniformly over a disc of radius `radius_m` around the
/// server, `d = R sqrt(U)`, clamped below at [`MIN_DISTANCE_M`].
pub fn deploy_devices(n: usize, radius_m: f64, rng: &mut SimRng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (radius_m * u.sqrt()).max(MIN_DISTANCE_M)
        })
        .collect()
}

/// How small-scale fading is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fading {
    /// Independent Rayleigh fade per (sub-channel, device).
    #[default]
    PerChannel,
    /// One Rayleigh fade per device, shared by all its sub-channels.
    PerDevice,
    /// `|g|^2 = 1`.
    None,
}

/// Normalised gains `|h_{k,n}|^2`, indexed `[sub-channel][device]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    gains: Vec<Vec<f64>>,
}

impl ChannelState {
    pub fn from_rows(gains: Vec<Vec<f64>>) -> Result<Self> {
        let width = gains.first().map_or(0, Vec::len);
        if gains.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument("ragged channel matrix".into()));
        }
        if gains.iter().flatten().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidArgument("channel gains must be positive".into()));
        }
        Ok(Self { gains })
    }

    pub fn gain(&self, channel: usize, device: usize) -> f64 {
        self.gains[channel][device]
    }

    pub fn channels(&self) -> usize {
        self.gains.len()
    }

    pub fn devices(&self) -> usize {
        self.gains.first().map_or(0, Vec::len)
    }
}

/// Draws one round of gains for devices at `distances`. `|g|^2 ~ Exp(1)` (Rayleigh).
pub fn sample_channels(
    distances: &[f64],
    params: &SystemParams,
    fading: Fading,
    rng: &mut SimRng,
) -> ChannelState {
    let mean: Vec<f64> = distances.iter().map(|d| params.mean_gain(*d)).collect();
    let shared: Vec<f64> = match fading {
        Fading::PerDevice => distances.iter().map(|_| Exp1.sample(rng)).collect(),
        _ => vec![1.0; distances.len()],
    };
    let gains = (0..params.subchannels)
        .map(|_| {
            mean.iter()
                .zip(&shared)
                .map(|(m, s)| {
                    let fade: f64 = match fading {
                        Fading::PerChannel => Exp1.sample(rng),
                        Fading::PerDevice => *s,
                        Fading::None => 1.0,
                    };
                    // Exp1 can return exactly 0; keep gains strictly positive.
                    m * fade.max(f64::MIN_POSITIVE)
                })
                .collect()
        })
        .collect();
    ChannelState { gains }
}

/// Local computing time and energy at CPU share `tau`:
/// `T = mu beta / (tau C)`, `E = kappa mu beta (tau C)^2`.
pub fn comp_time_energy(tau: f64, device: &DeviceProfile, params: &SystemParams) -> Result<(f64, f64)> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside (0, 1]")));
    }
    if device.beta == 0 {
        return Err(Error::InvalidArgument(format!(
            "device {} has no samples",
            device.id
        )));
    }
    let work = device.workload_cycles(params);
    let freq = tau * device.cpu_hz;
    Ok((work / freq, params.kappa * work * freq * freq))
}

/// Uplink figures at transmit-power share `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommCost {
    /// bit/s
    pub rate: f64,
    pub time: f64,
    pub energy: f64,
}

/// `R = B log2(1 + alpha P |h|^2)`, `T = D / R`, `E = alpha P T`.
pub fn comm_time_energy(
    alpha: f64,
    device: &DeviceProfile,
    gain: f64,
    params: &SystemParams,
) -> Result<CommCost> {
    if !(MIN_ALPHA..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [{MIN_ALPHA}, 1]"
        )));
    }
    if !(gain > 0.0) {
        return Err(Error::InvalidArgument(format!("gain {gain} must be positive")));
    }
    let snr = alpha * device.power_w * gain;
    let rate = params.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2;
    let time = params.gradient_bits / rate;
    Ok(CommCost {
        rate,
        time,
        energy: alpha * device.power_w * time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn device(beta: usize, cpu_hz: f64, power_w: f64) -> DeviceProfile {
        DeviceProfile {
            id: 0,
            distance_m: 100.0,
            cpu_hz,
            power_w,
            beta,
            t_max_s: 5.0,
        }
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(10.0) - 0.01).abs() < 1e-15);
        assert!((dbm_to_watts(-174.0) - 10f64.powf(-20.4)).abs() < 1e-30);
        assert!((watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_clamps_to_minimum_distance() {
        let d = deploy_devices(5, 0.0, &mut seeded(1));
        assert_eq!(d, vec![MIN_DISTANCE_M; 5]);
    }

    #[test]
    fn deployment_second_moment_matches_uniform_disc() {
        let r = 200.0;
        let d = deploy_devices(100_000, r, &mut seeded(2));
        let m2 = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        assert!((m2 / (r * r / 2.0) - 1.0).abs() < 0.02, "E[d^2] = {m2}");
        assert_eq!(d, deploy_devices(100_000, r, &mut seeded(2)));
    }

    #[test]
    fn unfaded_gain_log_domain() {
        let params = SystemParams {
            subchannels: 1,
            ..SystemParams::default()
        };
        let ch = sample_channels(&[100.0], &params, Fading::None, &mut seeded(0));
        // 100^-3.76 = 10^-7.52; divided by 10^-20.4
        let expected = 10f64.powf(12.88);
        assert!((ch.gain(0, 0) / expected - 1.0).abs() < 1e-12);

        let doubled = SystemParams {
            noise_w: 2.0 * params.noise_w,
            ..params
        };
        let ch2 = sample_channels(&[100.0], &doubled, Fading::None, &mut seeded(0));
        assert!((ch2.gain(0, 0) * 2.0 / ch.gain(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn faded_gain_mean() {
        let params = SystemParams {
            subchannels: 100,
            ..SystemParams::default()
        };
        let mut rng = seeded(3);
        let mut sum = 0.0;
        let mut count = 0;
        for _ in 0..1000 {
            let ch = sample_channels(&[150.0], &params, Fading::PerChannel, &mut rng);
            for k in 0..ch.channels() {
                sum += ch.gain(k, 0);
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((mean / params.mean_gain(150.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn per_device_fading_is_shared_across_channels() {
        let params = SystemParams::default();
        let ch = sample_channels(&[50.0, 80.0], &params, Fading::PerDevice, &mut seeded(4));
        for k in 1..ch.channels() {
            assert_eq!(ch.gain(k, 0), ch.gain(0, 0));
            assert_eq!(ch.gain(k, 1), ch.gain(0, 1));
        }
    }

    #[test]
    fn computing_cost() {
        let params = SystemParams::default();
        // mu beta = 1e6 * 1000 = 1e9 cycles at 1 GHz
        let dev = device(1000, 1e9, 0.01);
        let (t, e) = comp_time_energy(1.0, &dev, &params).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        assert!((e - 1e-2).abs() < 1e-15);
        let (t2, e2) = comp_time_energy(0.5, &dev, &params).unwrap();
        assert!((t2 - 2.0 * t).abs() < 1e-15);
        assert!((e2 - e / 4.0).abs() < 1e-15);
        assert!(comp_time_energy(0.0, &dev, &params).is_err());
        assert!(comp_time_energy(1.5, &dev, &params).is_err());
        assert!(comp_time_energy(1.0, &device(0, 1e9, 0.01), &params).is_err());
    }

    #[test]
    fn unit_snr_link() {
        let params = SystemParams {
            gradient_bits: 1e6,
            ..SystemParams::default()
        };
        let dev = device(1, 1e9, 0.5);
        // alpha P |h|^2 = 1
        let c = comm_time_energy(1.0, &dev, 2.0, &params).unwrap();
        assert!((c.rate - 1e6).abs() < 1e-6);
        assert!((c.time - 1.0).abs() < 1e-12);
        assert!((c.energy - 0.5).abs() < 1e-12);
        assert!(comm_time_energy(0.0, &dev, 2.0, &params).is_err());
        assert!(comm_time_energy(1e-13, &dev, 2.0, &params).is_err());
        assert!(comm_time_energy(1.1, &dev, 2.0, &params).is_err());
    }

    #[test]
    fn transmit_energy_increases_with_alpha() {
        let params = SystemParams::default();
        let dev = device(1, 1e9, 0.01);
        for gain in [1e-2, 1.0, 1e3, 1e9] {
            let mut last = 0.0;
            for i in 1..=200 {
                let alpha = i as f64 / 200.0;
                let e = comm_time_energy(alpha, &dev, gain, &params).unwrap().energy;
                assert!(e > last, "gain {gain} alpha {alpha}");
                last = e;
            }
        }
    }
}
