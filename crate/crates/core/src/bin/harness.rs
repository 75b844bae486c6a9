//! Experiment driver CLI.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use elastic_core::harness::{run_overhead_experiment, run_scaling_matrix, run_sensitivity, ExperimentConfig};

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Overhead,
    Matrix,
    Sensitivity,
}

#[derive(Parser)]
#[command(about = "Runs elasticity experiments and writes results.csv")]
struct Args {
    experiment: Experiment,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("harness: {e}");
            return ExitCode::from(3);
        }
    };
    let result = match args.experiment {
        Experiment::Overhead => run_overhead_experiment(&cfg, &args.out).map(|rs| {
            for r in rs {
                println!("timestep {}s: direct {:.3}s stack {:.3}s overhead {:.4}", r.timestep, r.direct_s, r.stack_s, r.overhead());
            }
        }),
        Experiment::Matrix => run_scaling_matrix(&cfg, &args.out).map(|rows| print_rows(&rows)),
        Experiment::Sensitivity => run_sensitivity(&cfg, &args.out).map(|rows| print_rows(&rows)),
    };
    match result {
        Ok(()) => {
            println!("results in {}", args.out.join("results.csv").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("harness: {e}");
            ExitCode::FAILURE
        }
    }
}

fn print_rows(rows: &[elastic_core::harness::ExperimentResult]) {
    for r in rows {
        println!(
            "{} {}->{} p={} rep {}: speedup {:.4} (model {:.4}) {}",
            r.experiment,
            r.scenario_from,
            r.scenario_to,
            r.scaling_point,
            r.rep,
            r.speedup,
            r.model_speedup().unwrap_or(f64::NAN),
            r.status
        );
    }
}
