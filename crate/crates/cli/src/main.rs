//! Command-line front end: single replications, horizon sweeps, baseline
//! computation, and the verification suite. All outputs are flat CSV/JSON
//! files with floats printed to 12 significant digits.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use safelqr::algorithm::run_algorithm;
use safelqr::harness::config::{load_config, LoadedConfig};
use safelqr::harness::verify::verify_suite;
use safelqr::harness::{
    baseline_to_json, compute_baseline, report_to_json, run_replication, sweep_regret,
    sweep_summary_json, sweep_to_csv, trace_to_csv,
};

#[derive(Parser)]
#[command(name = "safelqr", version, about = "Safe LQR learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat key = value text).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads for the replication pool (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: current directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one replication; writes the trace CSV and a regret report JSON.
    Run(Common),
    /// Runs the horizon sweep; writes per-replication CSV and a summary JSON.
    Sweep(Common),
    /// Computes the regret baseline for the configured horizon.
    Baseline(Common),
    /// Runs the verification suite; exits nonzero if any check fails.
    Verify(Common),
}

fn load(common: &Common) -> Result<LoadedConfig> {
    if let Some(n) = common.workers {
        safelqr::harness::set_worker_threads(n);
    }
    let mut loaded = load_config(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        loaded.experiment.seed = seed;
    }
    if let Some(reps) = common.reps {
        loaded.experiment.replications = reps;
    }
    Ok(loaded)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(common) => {
            let loaded = load(&common)?;
            let dir = out_dir(&common)?;
            let config = &loaded.experiment;
            let baseline = compute_baseline(config)?;
            let run = run_algorithm(config, 0)?;
            let report = run_replication(config, 0, &baseline)?;
            let trace_path = dir.join("trace.csv");
            let report_path = dir.join("report.json");
            std::fs::write(&trace_path, trace_to_csv(&run))?;
            std::fs::write(&report_path, report_to_json(&report))?;
            println!(
                "run: T = {}, branch = {}, regret = {:.6}, violations = {}",
                config.horizon,
                report.branch.as_str(),
                report.regret,
                report.violations
            );
            println!(
                "wrote {} and {}",
                trace_path.display(),
                report_path.display()
            );
        }
        Command::Sweep(common) => {
            let loaded = load(&common)?;
            let dir = out_dir(&common)?;
            let config = &loaded.experiment;
            let sweep = sweep_regret(config, &loaded.sweep_t_list, config.replications)?;
            let csv_path = dir.join("sweep.csv");
            let json_path = dir.join("sweep_summary.json");
            std::fs::write(&csv_path, sweep_to_csv(&sweep))?;
            std::fs::write(&json_path, sweep_summary_json(&sweep))?;
            println!(
                "sweep over T = {:?}: fitted slope {:.4} (stderr {:.4})",
                sweep.t_values, sweep.fitted_slope, sweep.slope_stderr
            );
            println!("wrote {} and {}", csv_path.display(), json_path.display());
        }
        Command::Baseline(common) => {
            let loaded = load(&common)?;
            let dir = out_dir(&common)?;
            let config = &loaded.experiment;
            let baseline = compute_baseline(config)?;
            let path = dir.join("baseline.json");
            std::fs::write(&path, baseline_to_json(config.horizon, &baseline))?;
            println!(
                "baseline: K_opt = {:.6}, total cost {:.4} +/- {:.4}",
                baseline.k_opt, baseline.estimate.mean, baseline.estimate.stderr
            );
            println!("wrote {}", path.display());
        }
        Command::Verify(common) => {
            let loaded = load(&common)?;
            let dir = out_dir(&common)?;
            let report = verify_suite(&loaded.experiment)?;
            print!("{}", report.to_table());
            let path = dir.join("verify.csv");
            std::fs::write(&path, report.to_csv())?;
            println!("wrote {}", path.display());
            if !report.all_passed() {
                bail!("verification suite failed");
            }
        }
    }
    Ok(())
}
