//! Job coordinator. Prints its listen address on stdout and exits when the
//! job has ended and the linger period is over: 0 for Complete, 1 for Failed.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::thread;
use std::time::{Duration, Instant};

use clap::Parser;
use elastic_core::coordinator::{Coordinator, JobPhase, JobSpec};
use elastic_core::signals::flag_on;
use elastic_core::workloads::AdapterSpec;

#[derive(Parser)]
#[command(about = "Elastic job coordinator")]
struct Args {
    /// Job spec as a JSON document. Overrides the individual flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, env = "KUB_COORD_ADDR", default_value = "127.0.0.1:0")]
    listen: String,
    /// Also write the bound address to this file.
    #[arg(long)]
    addr_file: Option<PathBuf>,
    /// Seconds to keep answering after the job ends; default two timesteps plus one second.
    #[arg(long)]
    linger: Option<f64>,
    #[arg(long, default_value = "job")]
    job: String,
    #[arg(long, default_value_t = 1)]
    ranks: u32,
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// parint | sigterm-flag | restart-file-edit
    #[arg(long, default_value = "parint")]
    adapter: String,
    #[arg(long, default_value_t = 10.0)]
    timestep: f64,
    #[arg(long, default_value_t = 30.0)]
    grace: f64,
    #[arg(long, default_value_t = 120.0)]
    provision_timeout: f64,
    /// Workload command template.
    #[arg(last = true)]
    command: Vec<String>,
}

fn load_spec(args: &Args) -> Result<JobSpec, String> {
    if let Some(path) = &args.spec {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        return serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()));
    }
    let adapter = AdapterSpec::preset(&args.adapter).map_err(|e| e.to_string())?;
    let workdir = match &args.workdir {
        Some(d) => d.clone(),
        None => std::env::current_dir().map_err(|e| e.to_string())?,
    };
    let mut spec = JobSpec::new(&args.job, args.ranks, args.command.clone(), workdir, adapter);
    spec.heartbeat_timestep = args.timestep;
    spec.checkpoint_grace = args.grace;
    spec.provision_timeout = args.provision_timeout;
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let spec = match load_spec(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("coordinator: {e}");
            return ExitCode::from(3);
        }
    };
    let linger = Duration::from_secs_f64(args.linger.unwrap_or(2.0 * spec.heartbeat_timestep + 1.0));
    let Ok(term) = flag_on(&[libc::SIGTERM, libc::SIGINT]) else { return ExitCode::from(3) };
    let coord = match Coordinator::start(spec, &args.listen) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("coordinator: {e}");
            return ExitCode::from(3);
        }
    };
    let addr = coord.addr();
    println!("{addr}");
    let _ = std::io::stdout().flush();
    if let Some(f) = &args.addr_file {
        let tmp = f.with_extension("tmp");
        if fs::write(&tmp, &addr).and_then(|_| fs::rename(&tmp, f)).is_err() {
            eprintln!("coordinator: cannot write {}", f.display());
            return ExitCode::from(3);
        }
    }
    let mut ended: Option<Instant> = None;
    loop {
        if term.load(Ordering::Acquire) {
            break;
        }
        let phase = coord.phase();
        if phase.is_terminal() {
            let at = *ended.get_or_insert_with(Instant::now);
            if at.elapsed() >= linger {
                break;
            }
        }
        thread::sleep(Duration::from_millis(20));
    }
    let status = coord.status();
    log::info!("coordinator exiting in phase {}", status.phase);
    if let Some(f) = &status.failure {
        log::error!("job failed: {f}");
    }
    coord.shutdown();
    match status.phase {
        JobPhase::Complete => ExitCode::SUCCESS,
        JobPhase::Failed => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}
