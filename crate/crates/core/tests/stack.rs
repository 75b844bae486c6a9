mod common;

use std::fs;
use std::time::{Duration, Instant};

use common::*;
use elastic_core::coordinator::{Coordinator, JobPhase};
use elastic_core::executor::{run_agent, AgentConfig, AgentOutcome};
use elastic_core::workloads::{parint_step, AdapterSpec, ParintCheckpoint};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

fn all_complete(outcomes: &[(String, Result<AgentOutcome, elastic_core::executor::AgentError>)]) -> bool {
    outcomes.iter().all(|(_, o)| matches!(o, Ok(AgentOutcome::Complete)))
}

#[test]
fn three_agents_launch_once() {
    let dir = tempdir();
    let cmd = strings(&["sh", "-c", "echo {rank} {world} >> launches.log"]);
    let job = LocalJob::start(spec(dir.path(), 3, cmd, AdapterSpec::parint(), 0.05));
    assert_eq!(job.wait_terminal(Duration::from_secs(30)), JobPhase::Complete);
    assert_eq!(job.coord.status().launches, 1);
    let (trace, outcomes) = job.finish();
    assert_eq!(trace, [JobPhase::WaitingForExecutors, JobPhase::Running, JobPhase::Complete]);
    assert!(all_complete(&outcomes), "{outcomes:?}");
    let mut lines: Vec<String> = fs::read_to_string(path(&dir, "launches.log")).unwrap().lines().map(String::from).collect();
    lines.sort();
    assert_eq!(lines, ["0 3", "1 3", "2 3"]);
}

#[test]
fn nonzero_exit_fails_the_job() {
    let dir = tempdir();
    let cmd = strings(&["sh", "-c", "exit 3"]);
    let job = LocalJob::start(spec(dir.path(), 2, cmd, AdapterSpec::parint(), 0.05));
    assert_eq!(job.wait_terminal(Duration::from_secs(30)), JobPhase::Failed);
    let code = job.coord.with_core(|c| c.failure().map(|f| f.code()));
    assert_eq!(code, Some("WorkloadFailed"));
    let (_, outcomes) = job.finish();
    assert!(outcomes.iter().all(|(_, o)| matches!(o, Ok(AgentOutcome::Failed))), "{outcomes:?}");
}

#[test]
fn sigterm_stub_resumes_after_growth() {
    let dir = tempdir();
    let cmd = vec![bin("sigterm-stub"), "--steps".into(), "150".into(), "--interval-ms".into(), "10".into()];
    let mut job = LocalJob::start(spec(dir.path(), 1, cmd, AdapterSpec::sigterm_flag(strings(&["--resume"])), 0.05));
    wait_phase(&job.coord, JobPhase::Running, Duration::from_secs(10));
    std::thread::sleep(Duration::from_millis(400));
    job.scale(2).unwrap();
    job.add_agent("job-scale-0");
    assert_eq!(job.wait_terminal(Duration::from_secs(60)), JobPhase::Complete);
    let (_, outcomes) = job.finish();
    assert!(all_complete(&outcomes), "{outcomes:?}");
    let saved: u64 = fs::read_to_string(path(&dir, "state.ckpt")).unwrap().trim().parse().unwrap();
    assert!(saved > 0 && saved < 150, "saved {saved}");
    let log = fs::read_to_string(path(&dir, "state.ckpt.log")).unwrap();
    assert_eq!(log.lines().collect::<Vec<_>>(), ["start world=1 from=0".to_string(), format!("start world=2 from={saved}")]);
    assert_eq!(fs::read_to_string(path(&dir, "state.ckpt.done")).unwrap().trim(), "150");
}

#[test]
fn parint_grows_and_matches_single_rank() {
    let dir = tempdir();
    let (n, nloop, m) = (20_000u64, 8u32, 30u32);
    let mut job = LocalJob::start(spec(dir.path(), 2, parint_cmd(n, nloop, m, 30), AdapterSpec::parint(), 0.05));
    wait_phase(&job.coord, JobPhase::Running, Duration::from_secs(10));
    std::thread::sleep(Duration::from_millis(300));
    job.scale(3).unwrap();
    job.add_agent("job-scale-0");
    assert_eq!(job.wait_terminal(Duration::from_secs(120)), JobPhase::Complete);
    assert_eq!(job.coord.status().world, 3);
    let (trace, outcomes) = job.finish();
    assert!(trace.contains(&JobPhase::Relaunching));
    assert!(all_complete(&outcomes), "{outcomes:?}");
    let fin = ParintCheckpoint::read(&path(&dir, "parint-final.bin")).unwrap();
    assert_eq!(fin.completed_iters, m);
    assert_eq!(fin.world_at_checkpoint, 3);
    let want: Vec<f64> = (0..n)
        .map(|i| (0..m).fold((i % 1000) as f64 / 1000.0, |x, _| parint_step(x, nloop)))
        .collect();
    assert!(fin.payload.iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn agent_gives_up_on_lost_coordinator() {
    init();
    let dir = tempdir();
    let s = spec(dir.path(), 1, strings(&["sleep", "30"]), AdapterSpec::parint(), 0.02);
    let coord = Coordinator::start(s, "127.0.0.1:0").unwrap();
    let mut cfg = AgentConfig::new("job-worker-0", &coord.addr(), Duration::from_millis(20));
    cfg.max_misses = 2;
    let stop = Arc::new(AtomicBool::new(false));
    let h = {
        let stop = stop.clone();
        std::thread::spawn(move || run_agent(&cfg, &stop))
    };
    wait_phase(&coord, JobPhase::Running, Duration::from_secs(10));
    let t = Instant::now();
    coord.shutdown();
    let outcome = h.join().unwrap().unwrap();
    assert_eq!(outcome, AgentOutcome::CoordinatorLost);
    assert_eq!(outcome.exit_code(), 2);
    // two misses: 0.5 s + 1 s of backoff plus the ticks
    assert!(t.elapsed() < Duration::from_secs(10), "{:?}", t.elapsed());
}

#[test]
fn agent_binary_rejects_bad_name() {
    init();
    let status = std::process::Command::new(bin("agent"))
        .args(["--name", "nobody", "--coordinator", "127.0.0.1:1"])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}
