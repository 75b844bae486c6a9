//! Executor agent for one node.

use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::Parser;
use elastic_core::executor::{run_agent, AgentConfig, DEFAULT_MAX_MISSES};

#[derive(Parser)]
#[command(about = "Executor agent: supervises one workload rank")]
struct Args {
    /// `<job>-worker-<k>` or `<job>-scale-<k>`.
    #[arg(long)]
    name: String,
    #[arg(long, env = "KUB_COORD_ADDR")]
    coordinator: String,
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    /// Heartbeat timestep in seconds.
    #[arg(long, default_value_t = 10.0)]
    timestep: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_MISSES)]
    max_misses: u32,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if !(args.timestep.is_finite() && args.timestep > 0.0) {
        eprintln!("agent: --timestep must be > 0");
        return ExitCode::from(3);
    }
    let mut cfg = AgentConfig::new(&args.name, &args.coordinator, Duration::from_secs_f64(args.timestep));
    cfg.listen = args.listen;
    cfg.max_misses = args.max_misses;
    match run_agent(&cfg, &AtomicBool::new(false)) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(3)
        }
    }
}
