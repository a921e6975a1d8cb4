//! Round-by-round simulation state.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AggregationMode, AssignmentMode, ExperimentConfig, SelectionMode};
use crate::error::{Error, Result};
use crate::federation::{
    age_weights_with_exponent, aggregate, apply_update, select_random, weight_divergence, AoiVector,
    DeviceMap,
};
use crate::learning::{
    evaluate, gaussian_mixture, idx, init_model, local_loss_and_gradient, partition_noniid, DeviceDataset,
    Dims, Gradient, ModelParams, Sample,
};
use crate::matching::{build_table, prune, run_matching, BuiltTable, Matching};
use crate::rng::{stream, SimRng, Stream};
use crate::wireless::{dbm_to_watts, deploy_devices, sample_channels, DeviceProfile, SystemParams};

/// Resources and costs of one device that took part in a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device: usize,
    pub channel: usize,
    pub tau: f64,
    pub alpha: f64,
    pub t_cp: f64,
    pub t_cm: f64,
    pub e_cp: f64,
    pub e_cm: f64,
}

impl DeviceRecord {
    pub fn energy(&self) -> f64 {
        self.e_cp + self.e_cm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub seed: u64,
    pub candidates: Vec<usize>,
    /// Devices whose gradients were aggregated, ascending.
    pub selected: Vec<usize>,
    /// Ages used to weight this round's aggregation.
    pub aoi: Vec<u64>,
    /// One entry per selected device, in the same order. Empty outside wireless selection.
    pub devices: Vec<DeviceRecord>,
    pub total_energy: f64,
    /// `total_energy / |S_t|`; `None` when nobody was selected.
    pub energy_per_device: Option<f64>,
    pub matching_cycles: usize,
    /// Global training loss at the start of the round.
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    /// `||w - w_T||` after this round's update.
    pub divergence: Option<f64>,
}

type Selection = (Vec<usize>, Vec<usize>, Vec<DeviceRecord>, usize);

/// Allocation table of one round; table column `i` is device `candidates[i]`.
#[derive(Debug, Clone)]
pub struct RoundTable {
    pub candidates: Vec<usize>,
    pub built: BuiltTable,
}

/// Everything a training run needs that does not change between rounds.
struct Learning {
    shards: Vec<DeviceDataset>,
    test: Vec<Sample>,
    model: ModelParams,
    shadow: ModelParams,
}

pub struct Simulation {
    config: ExperimentConfig,
    seed: u64,
    params: SystemParams,
    profiles: Vec<DeviceProfile>,
    betas: Vec<usize>,
    learning: Option<Learning>,
    aoi: AoiVector,
    round: usize,
    last_error: Option<Gradient>,
    channel_rng: SimRng,
    selection_rng: SimRng,
    assignment_rng: SimRng,
}

fn uniform(rng: &mut SimRng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn load_data(config: &ExperimentConfig, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>, usize)> {
    match &config.dataset.idx {
        Some(files) => {
            let train = idx::load(&files.train_images, &files.train_labels, files.train_limit)?;
            let test = idx::load(&files.test_images, &files.test_labels, files.test_limit)?;
            let classes = train.iter().chain(&test).map(|s| s.label + 1).max().unwrap_or(0);
            Ok((train, test, classes))
        }
        None => {
            let spec = &config.dataset.synthetic;
            let (train, test) = gaussian_mixture(spec, &mut stream(seed, Stream::Dataset))?;
            Ok((train, test, spec.classes))
        }
    }
}

impl Simulation {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.devices;
        let (train, test, classes) = load_data(config, seed)?;
        let shards = partition_noniid(
            &train,
            n,
            config.dataset.classes_per_device,
            &mut stream(seed, Stream::Partition),
        )?;
        let betas: Vec<usize> = shards.iter().map(DeviceDataset::beta).collect();

        let params = config.system_params();
        let distances = deploy_devices(n, params.disc_radius_m, &mut stream(seed, Stream::Deployment));
        let mut hw = stream(seed, Stream::DeviceParams);
        let profiles = distances
            .iter()
            .enumerate()
            .map(|(id, &distance_m)| DeviceProfile {
                id,
                distance_m,
                cpu_hz: uniform(&mut hw, config.device.cpu_hz),
                power_w: dbm_to_watts(uniform(&mut hw, config.device.power_dbm)),
                beta: betas[id],
                t_max_s: uniform(&mut hw, config.device.t_max_s),
            })
            .collect();

        let learning = if config.train {
            let input = train[0].features.len();
            let dims =
                Dims::new(input, config.model.hidden, classes).with_activation(config.model.activation);
            let model = init_model(
                dims,
                config.model.init_scale,
                &mut stream(seed, Stream::ModelInit),
            )?;
            Some(Learning {
                shards,
                test,
                shadow: model.clone(),
                model,
            })
        } else {
            None
        };

        Ok(Self {
            config: config.clone(),
            seed,
            params,
            profiles,
            betas,
            learning,
            aoi: AoiVector::new(n),
            round: 0,
            last_error: None,
            channel_rng: stream(seed, Stream::Channels),
            selection_rng: stream(seed, Stream::Selection),
            assignment_rng: stream(seed, Stream::Assignment),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn profiles(&self) -> &[DeviceProfile] {
        &self.profiles
    }

    pub fn betas(&self) -> &[usize] {
        &self.betas
    }

    pub fn aoi(&self) -> &AoiVector {
        &self.aoi
    }

    pub fn model(&self) -> Option<&ModelParams> {
        self.learning.as_ref().map(|l| &l.model)
    }

    pub fn shadow(&self) -> Option<&ModelParams> {
        self.learning.as_ref().map(|l| &l.shadow)
    }

    pub fn shards(&self) -> Option<&[DeviceDataset]> {
        self.learning.as_ref().map(|l| l.shards.as_slice())
    }

    /// `g_t - grad F(w_t, N)` from the last round: the aggregate actually applied (zero when
    /// nobody was selected) minus the complete-selection gradient at the same model.
    pub fn last_error(&self) -> Option<&Gradient> {
        self.last_error.as_ref()
    }

    /// Complete-selection gradient `grad F(w, N)` at an arbitrary model.
    pub fn full_gradient(&self, model: &ModelParams) -> Result<Gradient> {
        let learning = self
            .learning
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("training is disabled for this simulation".into()))?;
        let grads = device_gradients(model, &learning.shards)?;
        let everyone: Vec<usize> = (0..self.betas.len()).collect();
        aggregate(&grads.1, &self.betas, &everyone, None)
    }

    /// Samples this round's channels and candidates and allocates every (channel, candidate)
    /// pair. Advances the channel and selection streams.
    pub fn draw_table(&mut self) -> Result<RoundTable> {
        let distances: Vec<f64> = self.profiles.iter().map(|p| p.distance_m).collect();
        let channels = sample_channels(
            &distances,
            &self.params,
            self.config.system.fading,
            &mut self.channel_rng,
        );
        let candidates = select_random(
            self.config.devices,
            self.config.subchannels,
            &mut self.selection_rng,
        )?;
        let cand_profiles: Vec<DeviceProfile> = candidates.iter().map(|&c| self.profiles[c]).collect();
        let built = build_table(&cand_profiles, &channels, &self.params, self.config.allocation)?;
        Ok(RoundTable { candidates, built })
    }

    /// Candidates, survivors, their resource records and matching cycles for one round.
    fn select(&mut self) -> Result<Selection> {
        let n = self.config.devices;
        match self.config.selection {
            SelectionMode::Complete => {
                let all: Vec<usize> = (0..n).collect();
                Ok((all.clone(), all, Vec::new(), 0))
            }
            SelectionMode::Uniform => {
                let picked = select_random(n, self.config.subchannels, &mut self.selection_rng)?;
                Ok((picked.clone(), picked, Vec::new(), 0))
            }
            SelectionMode::Wireless => {
                let RoundTable { candidates, built } = self.draw_table()?;
                let (matching, cycles) = match self.config.assignment {
                    AssignmentMode::Matching => {
                        let out = run_matching(&built.table, &mut self.assignment_rng);
                        (out.matching, out.cycles)
                    }
                    AssignmentMode::Random => {
                        (Matching::random(built.table.size(), &mut self.assignment_rng), 0)
                    }
                };
                let mut records: Vec<DeviceRecord> = prune(&built.table, &matching)
                    .into_iter()
                    .map(|(i, k)| {
                        let s = built.allocations[k][i]
                            .solution()
                            .expect("pruned pairs are feasible");
                        DeviceRecord {
                            device: candidates[i],
                            channel: k,
                            tau: s.tau,
                            alpha: s.alpha,
                            t_cp: s.t_cp,
                            t_cm: s.t_cm,
                            e_cp: s.e_cp,
                            e_cm: s.e_cm,
                        }
                    })
                    .collect();
                records.sort_by_key(|r| r.device);
                let selected = records.iter().map(|r| r.device).collect();
                Ok((candidates, selected, records, cycles))
            }
        }
    }

    /// Runs one round and returns its record.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        self.round += 1;
        let (candidates, selected, devices, matching_cycles) = self.select()?;
        let aoi_snapshot = self.aoi.as_slice().to_vec();

        let (mut loss, mut accuracy, mut divergence) = (None, None, None);
        if let Some(learning) = self.learning.as_mut() {
            let everyone: Vec<usize> = (0..self.betas.len()).collect();
            let (local_losses, grads) = device_gradients(&learning.model, &learning.shards)?;
            let full = aggregate(&grads, &self.betas, &everyone, None)?;

            let applied = if selected.is_empty() {
                Gradient::zeros(full.len())
            } else {
                let weights = match self.config.aggregation {
                    AggregationMode::Conventional => None,
                    AggregationMode::AgeWeighted => Some(age_weights_with_exponent(
                        &self.aoi,
                        &selected,
                        self.config.age_exponent,
                    )?),
                };
                aggregate(&grads, &self.betas, &selected, weights.as_ref())?
            };
            self.last_error = Some(applied.sub(&full));

            let shadow_full = if learning.shadow == learning.model {
                full
            } else {
                let (_, shadow_grads) = device_gradients(&learning.shadow, &learning.shards)?;
                aggregate(&shadow_grads, &self.betas, &everyone, None)?
            };
            if !selected.is_empty() {
                learning.model = apply_update(&learning.model, &applied, self.config.learning_rate)?;
            }
            learning.shadow = apply_update(&learning.shadow, &shadow_full, self.config.learning_rate)?;

            let beta_total: f64 = self.betas.iter().map(|&b| b as f64).sum();
            loss = Some(
                local_losses
                    .iter()
                    .zip(&self.betas)
                    .map(|(l, &b)| l * b as f64)
                    .sum::<f64>()
                    / beta_total,
            );
            accuracy = Some(evaluate(&learning.model, &learning.test)?.1);
            divergence = Some(weight_divergence(&learning.model, &learning.shadow)?);
        }

        self.aoi = self.aoi.update(&selected);
        let total_energy: f64 = devices.iter().map(DeviceRecord::energy).sum();
        let energy_per_device =
            (!selected.is_empty() && !devices.is_empty()).then(|| total_energy / selected.len() as f64);
        Ok(RoundRecord {
            round: self.round,
            seed: self.seed,
            candidates,
            selected,
            aoi: aoi_snapshot,
            devices,
            total_energy,
            energy_per_device,
            matching_cycles,
            loss,
            accuracy,
            divergence,
        })
    }

    pub fn run(&mut self) -> Result<Vec<RoundRecord>> {
        (0..self.config.rounds).map(|_| self.run_round()).collect()
    }
}

/// Local losses and gradients of every device at `model`, computed in parallel and collected
/// in device order.
fn device_gradients(
    model: &ModelParams,
    shards: &[DeviceDataset],
) -> Result<(Vec<f64>, DeviceMap<Gradient>)> {
    let results: Vec<(f64, Gradient)> = shards
        .par_iter()
        .map(|shard| local_loss_and_gradient(model, shard))
        .collect::<Result<_>>()?;
    let mut losses = Vec::with_capacity(results.len());
    let mut grads = DeviceMap::new();
    for (n, (l, g)) in results.into_iter().enumerate() {
        losses.push(l);
        grads.insert(n, g);
    }
    Ok((losses, grads))
}
