//! Monitor: fires the scaling schedule against a running job.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use elastic_core::monitor::{
    run_monitor, Clock, LocalProcessProvisioner, MonitorConfig, NullProvisioner, Provisioner, ScalingPolicy,
    ScheduleEntry,
};

#[derive(Parser)]
#[command(about = "Time-based scaling monitor")]
struct Args {
    #[arg(long, env = "KUB_COORD_ADDR")]
    coordinator: String,
    /// POINT:RANKS, e.g. 0.3:6. Repeat for several rounds.
    #[arg(long)]
    schedule: Vec<String>,
    /// Baseline duration in seconds.
    #[arg(long)]
    baseline: f64,
    /// local | null
    #[arg(long, default_value = "local")]
    provisioner: String,
    #[arg(long, default_value = "job")]
    job: String,
    /// Rank count the job starts with.
    #[arg(long, default_value_t = 1)]
    from_ranks: u32,
    /// Heartbeat timestep for provisioned agents, in seconds.
    #[arg(long, default_value_t = 10.0)]
    agent_timestep: f64,
    /// Use the simulated-work clock of the stub running in this directory.
    #[arg(long)]
    sim_dir: Option<PathBuf>,
    /// Pre-started agent names handed out by the null provisioner.
    #[arg(long)]
    null_agent: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let policy = args
        .schedule
        .iter()
        .map(|s| ScheduleEntry::parse(s))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|s| ScalingPolicy::new(args.baseline, args.from_ranks, s));
    let mut policy = match policy {
        Ok(p) => p,
        Err(e) => {
            eprintln!("monitor: {e}");
            return ExitCode::from(3);
        }
    };
    let mut provisioner: Box<dyn Provisioner> = match args.provisioner.as_str() {
        "local" => Box::new(LocalProcessProvisioner::locate()),
        "null" => Box::new(NullProvisioner::new(args.null_agent.clone())),
        other => {
            eprintln!("monitor: unknown provisioner {other:?}");
            return ExitCode::from(3);
        }
    };
    let mut cfg = MonitorConfig::new(&args.job, &args.coordinator, Duration::from_secs_f64(args.agent_timestep));
    if let Some(dir) = args.sim_dir {
        cfg.clock = Clock::Sim { job_dir: dir };
    }
    match run_monitor(&mut policy, provisioner.as_mut(), &cfg) {
        Ok(report) => {
            println!("final phase {} world {} after {} scale calls", report.final_phase, report.final_world, report.scale_calls);
            for r in &report.rounds {
                println!(
                    "round {}: {} -> {} at elapsed {:.3}s, completed at {:?}",
                    r.entry, r.from_world, r.to_world, r.elapsed, r.completed_at
                );
            }
            if report.final_phase == elastic_core::coordinator::JobPhase::Complete {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("monitor: {e}");
            ExitCode::from(2)
        }
    }
}
