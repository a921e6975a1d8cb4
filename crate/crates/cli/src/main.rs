use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agefl::alloc::{self, AllocationResult, RESULT_HEADER};
use agefl::matching::{self, EnergyTable, Matching};
use agefl::rng::seeded;
use agefl::sim::export::write_summary_csv;
use agefl::sim::presets::{run_preset, Preset, PresetOptions};
use agefl::sim::{load_config, run_experiment, write_csv, write_json, OutputFormat};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "agefl",
    version,
    about = "Age-weighted federated learning over a wireless uplink"
)]
struct Cli {
    /// Output directory; overrides the one in the config file.
    #[arg(long, global = true, env = "AGEFL_OUT_DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Solve allocation instances, one per line: C P beta |h|^2 B D kappa mu T_max.
    Solve {
        file: PathBuf,
        /// Also report the numerical oracle with this many grid points.
        #[arg(long)]
        oracle: Option<usize>,
    },
    /// Assign devices to sub-channels for a cost table (rows are sub-channels).
    Match {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also enumerate all assignments (at most 8 rows/columns).
        #[arg(long)]
        exhaustive: bool,
    },
    /// Regenerate the data of a named preset, or all of them.
    Preset {
        #[arg(value_parser = ["divergence", "deadline", "radius", "power", "cpu", "convergence", "all"])]
        name: String,
        /// Number of seeds, starting at 0.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        rounds: Option<usize>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            rounds,
            format,
        } => run_config(&config, cli.out, seed, rounds, format),
        Command::Solve { file, oracle } => solve(&file, oracle),
        Command::Match {
            file,
            seed,
            exhaustive,
        } => match_table(&file, seed, exhaustive),
        Command::Preset { name, seeds, rounds } => presets(
            &name,
            cli.out.unwrap_or_else(|| PathBuf::from("results")),
            seeds,
            rounds,
        ),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?,
    ))
}

fn run_config(
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    rounds: Option<usize>,
    format: Option<Format>,
) -> Result<()> {
    let mut config = load_config(path).with_context(|| format!("invalid config {}", path.display()))?;
    if let Some(seed) = seed {
        config.seeds = vec![seed];
    }
    if let Some(rounds) = rounds {
        config.rounds = rounds;
    }
    if let Some(format) = format {
        config.output.format = match format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    let dir = out.unwrap_or_else(|| config.output.dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;

    let result = run_experiment(&config)?;
    let metrics = match config.output.format {
        OutputFormat::Csv => {
            let path = dir.join("metrics.csv");
            write_csv(result.records(), create(&path)?)?;
            path
        }
        OutputFormat::Json => {
            let path = dir.join("metrics.json");
            write_json(result.records(), Some(&result.summary), create(&path)?)?;
            path
        }
    };
    let summary_path = dir.join("summary.csv");
    write_summary_csv(&result, create(&summary_path)?)?;

    let s = &result.summary;
    println!("seeds            {}", config.seeds.len());
    println!("rounds           {}", config.rounds);
    println!("mean selected    {:.4}", s.mean_selected);
    println!("energy / round   {:.6e} J", s.mean_energy_per_round);
    if let Some(e) = s.mean_energy_per_device {
        println!("energy / device  {e:.6e} J");
    }
    if let Some(d) = s.final_divergence {
        println!("final divergence {d:.6}");
    }
    if let Some(a) = s.final_accuracy {
        println!("final accuracy   {a:.4}");
    }
    println!("wrote {} and {}", metrics.display(), summary_path.display());
    Ok(())
}

fn solve(path: &Path, oracle: Option<usize>) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let instances =
        alloc::parse_instances(&text).with_context(|| format!("invalid instance file {}", path.display()))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match oracle {
        Some(_) => writeln!(out, "{RESULT_HEADER},oracle_e_total")?,
        None => writeln!(out, "{RESULT_HEADER}")?,
    }
    for inst in &instances {
        let result = alloc::solve(inst);
        match oracle {
            Some(grid) => {
                let reference = if result.is_feasible() {
                    alloc::oracle(inst, grid)?
                } else {
                    AllocationResult::Infeasible
                };
                let energy = reference.energy().map(|e| e.to_string()).unwrap_or_default();
                writeln!(out, "{},{energy}", alloc::format_result(&result))?;
            }
            None => writeln!(out, "{}", alloc::format_result(&result))?,
        }
    }
    Ok(())
}

fn describe(table: &EnergyTable, m: &Matching) -> String {
    let pairs: Vec<String> = matching::prune(table, m)
        .into_iter()
        .map(|(n, k)| format!("{n}->{k}"))
        .collect();
    let total = table.total(m);
    format!(
        "assigned [{}]  energy {}  infeasible {}",
        pairs.join(" "),
        total.energy,
        total.infeasible
    )
}

fn match_table(path: &Path, seed: u64, exhaustive: bool) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let table =
        matching::parse_table(&text).with_context(|| format!("invalid table file {}", path.display()))?;
    let out = matching::run_matching(&table, &mut seeded(seed));
    println!(
        "swap matching  {}  cycles {}  swaps {}",
        describe(&table, &out.matching),
        out.cycles,
        out.trace.len() - 1
    );
    if exhaustive {
        let (best, _) = matching::exhaustive_matching(&table)?;
        println!("exhaustive     {}", describe(&table, &best));
    }
    Ok(())
}

fn presets(name: &str, dir: PathBuf, seeds: u64, rounds: Option<usize>) -> Result<()> {
    let presets: Vec<Preset> = if name == "all" {
        Preset::ALL.to_vec()
    } else {
        vec![name.parse()?]
    };
    let options = PresetOptions {
        seeds: (0..seeds.max(1)).collect(),
        rounds,
    };
    for preset in presets {
        let path = run_preset(preset, &options, &dir)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
