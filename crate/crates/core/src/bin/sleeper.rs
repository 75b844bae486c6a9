//! Restart-file stub: writes numbered restart files and restarts from the
//! ordinal in its namelist. Stops on SIGTERM.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use elastic_core::signals::flag_on;
use elastic_core::workloads::stubs::{run_sleeper, SleeperConfig};
use elastic_core::workloads::RankEnv;

#[derive(Parser)]
struct Args {
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 10)]
    interval_ms: u64,
    #[arg(long, default_value = "cm1rst_")]
    prefix: String,
    #[arg(long, default_value = "namelist.input")]
    namelist: PathBuf,
    #[arg(long, default_value = "irst")]
    key: String,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Ok(stop) = flag_on(&[libc::SIGTERM]) else { return ExitCode::FAILURE };
    let cfg = SleeperConfig {
        total_steps: args.steps,
        interval: Duration::from_millis(args.interval_ms),
        prefix: args.prefix,
        namelist: args.namelist,
        key: args.key,
    };
    let env = match RankEnv::from_env(&std::env::current_dir().unwrap_or_default()) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("sleeper: {e}");
            return ExitCode::FAILURE;
        }
    };
    match run_sleeper(&cfg, &env, &stop) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sleeper: {e}");
            ExitCode::FAILURE
        }
    }
}
