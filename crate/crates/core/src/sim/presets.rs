//! Named reproduction presets: the divergence comparison, four parameter sweeps and the
//! matching convergence study.
//!
//! The radio presets read the noise figure as a density (dBm/Hz over the sub-channel) and
//! apply a fixed [`RADIO_ETA_DB`] so that links at the edge of the disc actually fail. With
//! the noise taken as a flat -174 dBm every link is feasible and the sweeps are flat.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{AggregationMode, AssignmentMode, ExperimentConfig, SelectionMode};
use super::engine::Simulation;
use super::experiment::run_experiment;
use crate::alloc::AllocationMode;
use crate::error::{Error, Result};
use crate::matching::{exhaustive_matching, run_matching, Total};
use crate::rng::{stream, Stream};

/// Frequency-dependent gain used by every radio preset, dB.
pub const RADIO_ETA_DB: f64 = -30.0;

/// Named experiment whose data `run_preset` writes to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Divergence,
    Deadline,
    Radius,
    Power,
    Cpu,
    Convergence,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Divergence,
        Preset::Deadline,
        Preset::Radius,
        Preset::Power,
        Preset::Cpu,
        Preset::Convergence,
    ];
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Preset::Divergence => "divergence",
            Preset::Deadline => "deadline",
            Preset::Radius => "radius",
            Preset::Power => "power",
            Preset::Cpu => "cpu",
            Preset::Convergence => "convergence",
        };
        f.write_str(name)
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresetOptions {
    pub seeds: Vec<u64>,
    /// Overrides each preset's round count.
    pub rounds: Option<usize>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            rounds: None,
        }
    }
}

/// Divergence comparison: `N = 10`, `K = 5` devices drawn uniformly, one class per device.
pub fn divergence_config(aggregation: AggregationMode) -> ExperimentConfig {
    ExperimentConfig {
        devices: 10,
        subchannels: 5,
        rounds: 100,
        aggregation,
        selection: SelectionMode::Uniform,
        ..ExperimentConfig::default()
    }
}

/// Radio-only base for the sweeps: `N = 10`, `K = 4`, `T_max = 5 s`, `P = 10 dBm`,
/// `C = 1 GHz`, `R = 200 m`, `D = 10 Mbit`.
pub fn radio_config() -> ExperimentConfig {
    let mut c = ExperimentConfig {
        devices: 10,
        subchannels: 4,
        rounds: 200,
        train: false,
        ..ExperimentConfig::default()
    };
    c.system.noise_per_hz = true;
    c.system.eta_db = RADIO_ETA_DB;
    c
}

/// Availability comparison: `N = 10`, `K = 5`, `T_max = 10 s`, `D = 15 Mbit`.
pub fn availability_config(assignment: AssignmentMode) -> ExperimentConfig {
    let mut c = radio_config();
    c.subchannels = 5;
    c.assignment = assignment;
    c.device.t_max_s = [10.0, 10.0];
    c.system.gradient_bits = 15e6;
    c
}

/// Allocation and assignment policy pair compared in the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scheme {
    pub name: &'static str,
    pub allocation: AllocationMode,
    pub assignment: AssignmentMode,
}

pub const SCHEMES: [Scheme; 4] = [
    Scheme {
        name: "kra-msa",
        allocation: AllocationMode::Kkt,
        assignment: AssignmentMode::Matching,
    },
    Scheme {
        name: "fra1-msa",
        allocation: AllocationMode::Fra1,
        assignment: AssignmentMode::Matching,
    },
    Scheme {
        name: "fra2-msa",
        allocation: AllocationMode::Fra2,
        assignment: AssignmentMode::Matching,
    },
    Scheme {
        name: "kra-rsa",
        allocation: AllocationMode::Kkt,
        assignment: AssignmentMode::Random,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub scheme: String,
    pub mean_selected: f64,
    pub mean_energy_per_round: f64,
    pub mean_energy_per_device: Option<f64>,
}

/// Runs every scheme at every value, with `apply` writing the value into the config.
pub fn sweep(
    base: &ExperimentConfig,
    parameter: &str,
    values: &[f64],
    apply: impl Fn(&mut ExperimentConfig, f64),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &value in values {
        for scheme in SCHEMES {
            let mut c = base.clone();
            apply(&mut c, value);
            c.allocation = scheme.allocation;
            c.assignment = scheme.assignment;
            let s = run_experiment(&c)?.summary;
            rows.push(SweepRow {
                parameter: parameter.to_string(),
                value,
                scheme: scheme.name.to_string(),
                mean_selected: s.mean_selected,
                mean_energy_per_round: s.mean_energy_per_round,
                mean_energy_per_device: s.mean_energy_per_device,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub round: usize,
    pub conventional_divergence: f64,
    pub age_weighted_divergence: f64,
    pub conventional_accuracy: f64,
    pub age_weighted_accuracy: f64,
}

pub fn divergence_series(options: &PresetOptions) -> Result<Vec<DivergenceRow>> {
    let run = |mode| {
        let mut c = divergence_config(mode);
        c.seeds = options.seeds.clone();
        c.rounds = options.rounds.unwrap_or(c.rounds);
        run_experiment(&c)
    };
    let conv = run(AggregationMode::Conventional)?.summary.per_round;
    let aged = run(AggregationMode::AgeWeighted)?.summary.per_round;
    let missing = || Error::InvalidArgument("training metrics missing".into());
    conv.iter()
        .zip(&aged)
        .map(|(c, a)| {
            Ok(DivergenceRow {
                round: c.round,
                conventional_divergence: c.divergence.ok_or_else(missing)?,
                age_weighted_divergence: a.divergence.ok_or_else(missing)?,
                conventional_accuracy: c.accuracy.ok_or_else(missing)?,
                age_weighted_accuracy: a.accuracy.ok_or_else(missing)?,
            })
        })
        .collect()
}

/// Mean matching state after each cycle, next to the exhaustive optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub cycle: usize,
    pub matching_selected: f64,
    pub matching_energy: f64,
    pub exhaustive_selected: f64,
    pub exhaustive_energy: f64,
    /// Tables that had not yet converged before this cycle.
    pub active: usize,
}

/// Random-start matching on per-round tables of the radio base, against exhaustive search.
pub fn matching_convergence(options: &PresetOptions) -> Result<Vec<ConvergenceRow>> {
    let mut config = radio_config();
    config.rounds = options.rounds.unwrap_or(50);
    let mut traces: Vec<(Vec<Total>, Total, usize)> = Vec::new();
    for &seed in &options.seeds {
        let mut sim = Simulation::new(&config, seed)?;
        let mut rng = stream(seed, Stream::Assignment);
        for _ in 0..config.rounds {
            let table = sim.draw_table()?.built.table;
            let out = run_matching(&table, &mut rng);
            let (_, best) = exhaustive_matching(&table)?;
            let mut trace = vec![out.trace[0]];
            trace.extend(out.cycle_trace);
            traces.push((trace, best, table.real_devices()));
        }
    }
    let cycles = traces.iter().map(|t| t.0.len()).max().unwrap_or(0);
    let count = traces.len() as f64;
    Ok((0..cycles)
        .map(|c| {
            let at = |t: &Vec<Total>| t[c.min(t.len() - 1)];
            let selected = |total: Total, real: usize| (real - total.infeasible) as f64;
            ConvergenceRow {
                cycle: c,
                matching_selected: traces.iter().map(|(t, _, r)| selected(at(t), *r)).sum::<f64>() / count,
                matching_energy: traces.iter().map(|(t, _, _)| at(t).energy).sum::<f64>() / count,
                exhaustive_selected: traces.iter().map(|(_, b, r)| selected(*b, *r)).sum::<f64>() / count,
                exhaustive_energy: traces.iter().map(|(_, b, _)| b.energy).sum::<f64>() / count,
                active: traces.iter().filter(|(t, _, _)| t.len() > c).count(),
            }
        })
        .collect())
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn with_options(mut c: ExperimentConfig, options: &PresetOptions) -> ExperimentConfig {
    c.seeds = options.seeds.clone();
    c.rounds = options.rounds.unwrap_or(c.rounds);
    c
}

/// Runs one preset and writes `<preset>.csv` into `dir`.
pub fn run_preset(preset: Preset, options: &PresetOptions, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{preset}.csv"));
    let base = with_options(radio_config(), options);
    match preset {
        Preset::Divergence => write_rows(&divergence_series(options)?, &path)?,
        Preset::Deadline => write_rows(
            &sweep(&base, "t_max_s", &[2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], |c, v| {
                c.device.t_max_s = [v, v]
            })?,
            &path,
        )?,
        Preset::Radius => write_rows(
            &sweep(
                &base,
                "disc_radius_m",
                &[100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0],
                |c, v| c.system.disc_radius_m = v,
            )?,
            &path,
        )?,
        Preset::Power => write_rows(
            &sweep(
                &base,
                "power_dbm",
                &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
                |c, v| c.device.power_dbm = [v, v],
            )?,
            &path,
        )?,
        Preset::Cpu => write_rows(
            &sweep(&base, "cpu_hz", &[0.5e9, 1e9, 1.5e9, 2e9, 2.5e9, 3e9], |c, v| {
                c.device.cpu_hz = [v, v]
            })?,
            &path,
        )?,
        Preset::Convergence => write_rows(&matching_convergence(options)?, &path)?,
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_round_trip() {
        for f in Preset::ALL {
            assert_eq!(f.to_string().parse::<Preset>().unwrap(), f);
        }
        assert!("sweep".parse::<Preset>().is_err());
    }

    #[test]
    fn presets_validate() {
        divergence_config(AggregationMode::Conventional)
            .validate()
            .unwrap();
        radio_config().validate().unwrap();
        availability_config(AssignmentMode::Random).validate().unwrap();
    }

    #[test]
    fn small_sweep_has_one_row_per_scheme_and_value() {
        let mut base = radio_config();
        base.rounds = 3;
        let rows = sweep(&base, "t_max_s", &[3.0, 6.0], |c, v| c.device.t_max_s = [v, v]).unwrap();
        assert_eq!(rows.len(), 2 * SCHEMES.len());
        assert!(rows.iter().all(|r| r.mean_selected <= 4.0));
    }

    #[test]
    fn convergence_rows_end_at_a_fixed_point() {
        let rows = matching_convergence(&PresetOptions {
            seeds: vec![1],
            rounds: Some(5),
        })
        .unwrap();
        let last = rows.last().unwrap();
        assert_eq!(rows[0].cycle, 0);
        assert!(last.exhaustive_selected >= last.matching_selected);
    }
}
