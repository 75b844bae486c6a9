//! One PARINT rank. SIGUSR1 asks it to checkpoint at the next outer-iteration
//! boundary and exit.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use elastic_core::signals::flag_on;
use elastic_core::workloads::{parint_run, ParintConfig, RankEnv};

#[derive(Parser)]
#[command(about = "PARINT benchmark rank")]
struct Args {
    #[arg(long)]
    array_size: u64,
    #[arg(long)]
    nloop: u32,
    #[arg(long)]
    outer_iters: u32,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Final array file; defaults to parint-final.bin next to the checkpoint.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Pause after every outer iteration.
    #[arg(long, default_value_t = 0)]
    iter_sleep_ms: u64,
    /// Pause before resuming from a checkpoint.
    #[arg(long, default_value_t = 0)]
    restart_delay_ms: u64,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    let stop = match flag_on(&[libc::SIGUSR1]) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("parint: cannot install signal handler: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut cfg = ParintConfig::new(args.array_size, args.nloop, args.outer_iters, args.checkpoint);
    if let Some(out) = args.output {
        cfg.output_path = out;
    }
    cfg.iter_sleep = Duration::from_millis(args.iter_sleep_ms);
    cfg.restart_delay = Duration::from_millis(args.restart_delay_ms);
    let result = RankEnv::from_env(&std::env::current_dir().unwrap_or_default()).and_then(|env| parint_run(&cfg, &env, &stop));
    match result {
        Ok(out) => {
            eprintln!("parint: {:?} from iteration {}", out.status, out.start_iter);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("parint: {e}");
            ExitCode::FAILURE
        }
    }
}
