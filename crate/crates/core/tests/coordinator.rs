mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::*;
use elastic_core::coordinator::{is_legal_trace, Effect, EventLog, JobCore, JobPhase, KeyBundle};
use elastic_core::wireproto::{Call, FieldsExt, ScaleCommand};
use elastic_core::workloads::AdapterSpec;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Init(u32),
    Scale(u32),
    Keys(u32),
    Confirm(bool, u32),
    End(bool, u32, i64),
    Launched(bool),
    Tick(u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u32..5).prop_map(Op::Init),
        2 => (1u32..9).prop_map(Op::Scale),
        3 => (0u32..6).prop_map(Op::Keys),
        3 => (any::<bool>(), 0u32..6).prop_map(|(s, k)| Op::Confirm(s, k)),
        3 => (any::<bool>(), 0u32..6, prop_oneof![9 => Just(0i64), 1 => Just(1i64)]).prop_map(|(s, k, st)| Op::End(s, k, st)),
        3 => prop_oneof![9 => Just(true), 1 => Just(false)].prop_map(Op::Launched),
        1 => (0u64..3000).prop_map(Op::Tick),
    ]
}

fn node(scale: bool, k: u32) -> String {
    format!("j-{}-{k}", if scale { "scale" } else { "worker" })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// Arbitrary call sequences keep the phase machine, launch count and
    /// rank assignment consistent.
    #[test]
    fn random_call_sequences(ranks in 1u32..4, ops in proptest::collection::vec(op(), 0..60)) {
        let dir = tempdir();
        let mut spec = spec(dir.path(), ranks, strings(&["true"]), AdapterSpec::parint(), 1.0);
        spec.job_name = "j".into();
        spec.checkpoint_grace = 1.0;
        spec.provision_timeout = 2.0;
        let mut core = JobCore::new(spec, KeyBundle::generate(), EventLog::memory());
        let t0 = Instant::now();
        let mut now = t0;
        let mut launches = 0u32;
        let mut seen_epochs = BTreeSet::new();
        for op in ops {
            let before = core.phase();
            let effects: Vec<Effect> = match op {
                Op::Init(k) => core.job_init(&node(false, k), None, now).map(|r| r.1).unwrap_or_default(),
                Op::Scale(to) => core.scale(ScaleCommand::absolute(to), now).map(|r| r.1).unwrap_or_default(),
                Op::Keys(k) => core.retrieve_keys(&node(true, k), "127.0.0.1:9", now).map(|r| r.1).unwrap_or_default(),
                Op::Confirm(s, k) => core.checkpoint_done(&node(s, k), true, now).map(|r| r.1).unwrap_or_default(),
                Op::End(s, k, st) => core.end_exec(&node(s, k), st, now).map(|r| r.1).unwrap_or_default(),
                Op::Launched(ok) => {
                    let r = if ok { Ok(()) } else { Err("unreachable".to_string()) };
                    core.launch_result(core.epoch(), r, now);
                    vec![]
                }
                Op::Tick(ms) => {
                    now += Duration::from_millis(ms);
                    core.tick(now);
                    vec![]
                }
            };
            for e in &effects {
                if let Effect::Launch { epoch, targets } = e {
                    launches += 1;
                    prop_assert!(seen_epochs.insert(*epoch), "epoch {} launched twice", epoch);
                    let mut r: Vec<u32> = targets.iter().map(|t| t.2.rank).collect();
                    r.sort();
                    prop_assert_eq!(r, (0..targets.len() as u32).collect::<Vec<_>>());
                    prop_assert!(targets.iter().all(|t| t.2.world_size == targets.len() as u32 && t.2.epoch == *epoch));
                    prop_assert_eq!(targets.iter().any(|t| t.2.restart), *epoch > 1);
                }
            }
            if before.is_terminal() {
                prop_assert_eq!(core.phase(), before);
            }
            prop_assert!(is_legal_trace(&core.phase_trace()), "{:?}", core.phase_trace());
        }
        prop_assert_eq!(core.launch_count(), launches);
        let trace = core.phase_trace();
        let relaunches = trace.iter().filter(|p| **p == JobPhase::Relaunching).count() as u32;
        let started = trace.contains(&JobPhase::Running) as u32;
        prop_assert_eq!(launches, started + relaunches);
        if core.launch_count() > 0 {
            let mut r: Vec<u32> = core.registry().iter().map(|e| e.rank).collect();
            r.sort();
            prop_assert_eq!(r, (0..core.registry().len() as u32).collect::<Vec<_>>());
        }
        if core.phase() == JobPhase::Complete {
            prop_assert_eq!(trace[trace.len() - 2], JobPhase::Running);
        }
    }
}

fn fake_job(ranks: u32, grace: f64, provision: f64) -> (elastic_core::coordinator::Coordinator, Vec<FakeAgent>, tempfile::TempDir) {
    init();
    let dir = tempdir();
    let mut s = spec(dir.path(), ranks, strings(&["true"]), AdapterSpec::parint(), 0.05);
    s.checkpoint_grace = grace;
    s.provision_timeout = provision;
    let coord = elastic_core::coordinator::Coordinator::start(s, "127.0.0.1:0").unwrap();
    let agents: Vec<FakeAgent> = (0..ranks).map(|k| FakeAgent::start(&format!("job-worker-{k}"))).collect();
    (coord, agents, dir)
}

#[test]
fn end_exec_during_scaling_is_suppressed() {
    let (coord, workers, _dir) = fake_job(2, 30.0, 30.0);
    let addr = coord.addr();
    for w in &workers {
        w.job_init(&addr);
    }
    wait_phase(&coord, JobPhase::Running, Duration::from_secs(5));
    for w in &workers {
        w.wait_for(1, is_launch);
    }
    let scale = workers[0].call(&addr, Call::Scale(ScaleCommand::absolute(3))).unwrap();
    assert_eq!(scale.int_field("target_world"), Some(3));
    for w in &workers {
        w.wait_for(1, is_checkpoint);
        let r = w.end_exec(&addr);
        assert_eq!(r.str_field("phase"), Some("Scaling"));
    }
    assert_eq!(coord.phase(), JobPhase::Scaling);
    for w in &workers {
        w.confirm(&addr);
    }
    assert_eq!(coord.phase(), JobPhase::Checkpointing);
    let pod = FakeAgent::start("job-scale-0");
    let keys = pod.retrieve_keys(&addr).unwrap();
    assert_eq!(keys.int_field("rank"), Some(2));
    wait_phase(&coord, JobPhase::Running, Duration::from_secs(5));
    assert_eq!(coord.status().world, 3);
    for w in &workers {
        w.wait_for(2, is_launch);
        w.end_exec(&addr);
    }
    assert_eq!(coord.phase(), JobPhase::Running);
    pod.end_exec(&addr);
    assert_eq!(coord.phase(), JobPhase::Complete);
    let trace = coord.with_core(|c| c.phase_trace());
    use JobPhase::*;
    assert_eq!(trace, [WaitingForExecutors, Running, Scaling, Checkpointing, Relaunching, Running, Complete]);
    assert_eq!(coord.status().launches, 2);
}

#[test]
fn scale_while_waiting_is_rejected() {
    let (coord, workers, _dir) = fake_job(2, 30.0, 30.0);
    workers[0].job_init(&coord.addr());
    let err = workers[0].call(&coord.addr(), Call::Scale(ScaleCommand::absolute(4))).unwrap_err();
    assert!(err.to_string().contains("NotRunning"), "{err}");
    assert_eq!(coord.phase(), JobPhase::WaitingForExecutors);
}

#[test]
fn silent_executors_time_out_the_checkpoint() {
    let (coord, workers, _dir) = fake_job(2, 0.5, 30.0);
    let addr = coord.addr();
    for w in &workers {
        w.job_init(&addr);
    }
    wait_phase(&coord, JobPhase::Running, Duration::from_secs(5));
    workers[0].call(&addr, Call::Scale(ScaleCommand::absolute(4))).unwrap();
    assert_eq!(coord.wait_terminal(Duration::from_secs(5)), Some(JobPhase::Failed));
    assert_eq!(coord.with_core(|c| c.failure().map(|f| f.code())), Some("CheckpointTimeout"));
}

#[test]
fn unreachable_executor_fails_launch() {
    init();
    let dir = tempdir();
    let s = spec(dir.path(), 1, strings(&["true"]), AdapterSpec::parint(), 0.05);
    let coord = elastic_core::coordinator::Coordinator::start(s, "127.0.0.1:0").unwrap();
    let dead = free_port();
    call_job_init(&coord.addr(), "job-worker-0", &dead);
    assert_eq!(coord.wait_terminal(Duration::from_secs(60)), Some(JobPhase::Failed));
    assert_eq!(coord.with_core(|c| c.failure().map(|f| f.code())), Some("LaunchDispatchFailure"));
}

fn call_job_init(addr: &str, node: &str, at: &str) {
    elastic_core::transport::call_once(
        addr,
        Call::JobInit { node_name: node.into(), address: Some(at.into()) },
        Duration::from_secs(5),
    )
    .unwrap();
}
