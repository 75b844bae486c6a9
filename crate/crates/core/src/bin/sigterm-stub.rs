//! Counter stub: saves its counter on SIGTERM and resumes from it when run
//! with `--resume`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use elastic_core::signals::flag_on;
use elastic_core::workloads::stubs::{run_counter, CounterConfig};
use elastic_core::workloads::RankEnv;

#[derive(Parser)]
struct Args {
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 10)]
    interval_ms: u64,
    #[arg(long, default_value = "state.ckpt")]
    state: PathBuf,
    #[arg(long)]
    resume: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Ok(stop) = flag_on(&[libc::SIGTERM]) else { return ExitCode::FAILURE };
    let cfg = CounterConfig {
        steps: args.steps,
        interval: Duration::from_millis(args.interval_ms),
        state_path: args.state,
        resume: args.resume,
    };
    let result = RankEnv::from_env(&std::env::current_dir().unwrap_or_default())
        .map_err(|e| e.to_string())
        .and_then(|env| run_counter(&cfg, &env, &stop).map_err(|e| e.to_string()));
    match result {
        Ok((outcome, n)) => {
            eprintln!("sigterm-stub: {outcome:?} at {n}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sigterm-stub: {e}");
            ExitCode::FAILURE
        }
    }
}
