mod common;

use std::time::Duration;

use common::*;
use elastic_core::coordinator::events::{event_log_path, read_events};
use elastic_core::coordinator::JobPhase;
use elastic_core::monitor::{
    run_monitor, LocalProcessProvisioner, MonitorConfig, NullProvisioner, ScalingPolicy, ScheduleEntry,
};
use elastic_core::workloads::AdapterSpec;

fn counter_cmd(steps: u32) -> Vec<String> {
    vec![bin("sigterm-stub"), "--steps".into(), steps.to_string(), "--interval-ms".into(), "10".into()]
}

fn rpc_index(events: &[serde_json::Value], method: &str) -> Option<usize> {
    events.iter().position(|e| e["kind"] == "rpc" && e["method"] == method)
}

#[test]
fn scale_is_sent_before_provisioning() {
    let dir = tempdir();
    let s = spec(dir.path(), 1, counter_cmd(150), AdapterSpec::sigterm_flag(strings(&["--resume"])), 0.05);
    let job = LocalJob::start(s);
    let mut policy = ScalingPolicy::new(2.0, 1, vec![ScheduleEntry { point: 0.2, to_ranks: 3 }]).unwrap();
    let mut prov = LocalProcessProvisioner::locate().with_log_dir(dir.path());
    let mut cfg = MonitorConfig::new("job", &job.addr(), Duration::from_millis(50));
    cfg.timeout = Some(Duration::from_secs(60));
    let report = run_monitor(&mut policy, &mut prov, &cfg).unwrap();
    prov.reap(Duration::from_secs(5));
    assert_eq!(report.final_phase, JobPhase::Complete);
    assert_eq!(report.final_world, 3);
    assert_eq!(report.scale_calls, 1);
    let round = &report.rounds[0];
    assert_eq!((round.from_world, round.to_world), (1, 3));
    assert_eq!(round.provisioned, ["job-scale-0", "job-scale-1"]);
    assert!(round.scale_sent_at <= round.provisioned_at);
    assert!(round.elapsed >= 0.4);
    let (trace, _) = job.finish();
    assert_eq!(trace.last(), Some(&JobPhase::Complete));
    let events = read_events(&event_log_path(dir.path())).unwrap();
    let scale = rpc_index(&events, "Scale").expect("Scale logged");
    let keys = rpc_index(&events, "RetrieveKeys").expect("RetrieveKeys logged");
    assert!(scale < keys);
}

#[test]
fn partial_provisioning_fails_the_round() {
    let dir = tempdir();
    let mut s = spec(dir.path(), 1, counter_cmd(400), AdapterSpec::sigterm_flag(strings(&["--resume"])), 0.05);
    s.provision_timeout = 1.0;
    let mut job = LocalJob::start(s);
    job.add_agent("job-scale-0");
    let mut policy = ScalingPolicy::new(1.0, 1, vec![ScheduleEntry { point: 0.2, to_ranks: 3 }]).unwrap();
    let mut prov = NullProvisioner::new(vec!["job-scale-0".into()]);
    let mut cfg = MonitorConfig::new("job", &job.addr(), Duration::from_millis(50));
    cfg.timeout = Some(Duration::from_secs(60));
    let report = run_monitor(&mut policy, &mut prov, &cfg).unwrap();
    assert_eq!(report.final_phase, JobPhase::Failed);
    assert_eq!(report.rounds[0].provisioned, ["job-scale-0"]);
    assert_eq!(job.coord.with_core(|c| c.failure().map(|f| f.code())), Some("ProvisionTimeout"));
    job.finish();
}

#[test]
fn monitor_without_coordinator_errors() {
    let mut policy = ScalingPolicy::new(1.0, 1, vec![]).unwrap();
    let mut prov = NullProvisioner::new(vec![]);
    let mut cfg = MonitorConfig::new("job", &free_port(), Duration::from_millis(50));
    cfg.max_misses = 3;
    assert!(run_monitor(&mut policy, &mut prov, &cfg).is_err());
}
