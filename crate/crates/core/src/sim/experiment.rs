//! Multi-seed runs and their summary statistics.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::engine::{RoundRecord, Simulation};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub records: Vec<RoundRecord>,
}

/// Means over seeds for one round index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub selected: f64,
    pub total_energy: f64,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub divergence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub per_round: Vec<RoundSummary>,
    /// Mean `|S_t|` over all rounds and seeds.
    pub mean_selected: f64,
    /// Mean total energy per round, J.
    pub mean_energy_per_round: f64,
    /// Total energy over total device participations, J; `None` if nobody was ever selected.
    pub mean_energy_per_device: Option<f64>,
    pub mean_matching_cycles: f64,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub final_divergence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn records(&self) -> impl Iterator<Item = &RoundRecord> {
        self.runs.iter().flat_map(|r| r.records.iter())
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean of the values if every run reported one.
fn mean_all(values: Vec<Option<f64>>) -> Option<f64> {
    let all: Option<Vec<f64>> = values.into_iter().collect();
    all.filter(|v| !v.is_empty()).map(mean)
}

pub fn summarize(runs: &[RunResult]) -> Summary {
    let rounds = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    let per_round: Vec<RoundSummary> = (0..rounds)
        .map(|t| {
            let at: Vec<&RoundRecord> = runs.iter().map(|r| &r.records[t]).collect();
            RoundSummary {
                round: t + 1,
                selected: mean(at.iter().map(|r| r.selected.len() as f64)),
                total_energy: mean(at.iter().map(|r| r.total_energy)),
                loss: mean_all(at.iter().map(|r| r.loss).collect()),
                accuracy: mean_all(at.iter().map(|r| r.accuracy).collect()),
                divergence: mean_all(at.iter().map(|r| r.divergence).collect()),
            }
        })
        .collect();
    let all: Vec<&RoundRecord> = runs.iter().flat_map(|r| &r.records).collect();
    let participations: usize = all.iter().map(|r| r.devices.len()).sum();
    let energy: f64 = all.iter().map(|r| r.total_energy).sum();
    let last = per_round.last();
    Summary {
        mean_selected: mean(all.iter().map(|r| r.selected.len() as f64)),
        mean_energy_per_round: mean(all.iter().map(|r| r.total_energy)),
        mean_energy_per_device: (participations > 0).then(|| energy / participations as f64),
        mean_matching_cycles: mean(all.iter().map(|r| r.matching_cycles as f64)),
        final_loss: last.and_then(|r| r.loss),
        final_accuracy: last.and_then(|r| r.accuracy),
        final_divergence: last.and_then(|r| r.divergence),
        per_round,
    }
}

/// Runs every configured seed in turn.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let runs = config
        .seeds
        .iter()
        .map(|&seed| {
            let records = Simulation::new(config, seed)?.run()?;
            Ok(RunResult { seed, records })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs);
    Ok(ExperimentResult {
        config: config.clone(),
        runs,
        summary,
    })
}
