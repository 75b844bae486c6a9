//! Simulated-clock stub. SIGUSR1 or SIGTERM saves its state and exits.

use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use elastic_core::signals::flag_on;
use elastic_core::workloads::stubs::{run_simwork, SimWorkConfig};
use elastic_core::workloads::RankEnv;

#[derive(Parser)]
struct Args {
    /// Total work in rank-seconds.
    #[arg(long)]
    work: f64,
    #[arg(long, default_value_t = 1.0)]
    tick: f64,
    #[arg(long, default_value_t = 0)]
    tick_real_ms: u64,
    /// Simulated seconds charged on every restart.
    #[arg(long, default_value_t = 0.0)]
    restart_cost: f64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Ok(stop) = flag_on(&[libc::SIGUSR1, libc::SIGTERM]) else { return ExitCode::FAILURE };
    let cfg = SimWorkConfig {
        work: args.work,
        tick: args.tick,
        tick_real: Duration::from_millis(args.tick_real_ms),
        restart_cost: args.restart_cost,
    };
    let result = RankEnv::from_env(&std::env::current_dir().unwrap_or_default())
        .map_err(|e| e.to_string())
        .and_then(|env| run_simwork(&cfg, &env, &stop).map_err(|e| e.to_string()));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simwork: {e}");
            ExitCode::FAILURE
        }
    }
}
