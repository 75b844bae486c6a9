mod common;

use std::time::Duration;

use common::*;
use elastic_core::coordinator::JobPhase;
use elastic_core::harness::stack::{run_stack_job, JobRun, ProvisionerKind, WorkloadSpec};
use elastic_core::harness::{ideal_speedup, read_results_csv, run_scaling_matrix, ExperimentConfig, CSV_HEADER};
use elastic_core::monitor::ScheduleEntry;

fn simwork(work: f64) -> WorkloadSpec {
    WorkloadSpec::Simwork { work, tick: 1.0, tick_real_ms: 0, restart_cost: 0.0 }
}

#[test]
fn simulated_cell_matches_model_exactly() {
    init();
    let out = tempdir();
    let base = run_stack_job(&JobRun::new(out.path().join("base"), simwork(240.0), 2, Duration::from_millis(20))).unwrap();
    assert_eq!(base.phase, JobPhase::Complete, "{:?}", base.monitor);
    assert_eq!(base.sim_s, Some(120.0));
    let mut run = JobRun::new(out.path().join("scaled"), simwork(240.0).with_restart_cost(6.0), 2, Duration::from_millis(20));
    run.schedule = vec![ScheduleEntry { point: 0.5, to_ranks: 6 }];
    run.baseline = Some(120.0);
    run.provisioner = ProvisionerKind::Null;
    let r = run_stack_job(&run).unwrap();
    assert_eq!(r.phase, JobPhase::Complete, "{:?}", r.monitor);
    assert_eq!(r.rounds.len(), 1);
    assert_eq!(r.monitor.final_world, 6);
    // 60 s at 2 ranks, 6 s restart, 120 rank-s left at 6 ranks
    assert_eq!(r.sim_s, Some(86.0));
    let model = ideal_speedup(0.5, 2, 6, 6.0 / 120.0).unwrap();
    assert!((120.0 / 86.0 - model).abs() < 1e-12);
}

#[test]
fn matrix_csv_is_deterministic_for_simulated_work() {
    init();
    let mut cfg = ExperimentConfig::new(simwork(120.0));
    cfg.scenarios = vec![(2, 4)];
    cfg.scaling_points = vec![0.5];
    cfg.repetitions = 1;
    cfg.timestep = 0.02;
    cfg.provisioner = ProvisionerKind::Null;
    let key = |rows: &[elastic_core::harness::ExperimentResult]| {
        rows.iter()
            .map(|r| (r.experiment.clone(), r.scenario_from, r.scenario_to, r.scaling_point.to_bits(), r.baseline_s.to_bits(), r.scaled_s.to_bits(), r.status.clone()))
            .collect::<Vec<_>>()
    };
    let a = tempdir();
    let b = tempdir();
    let ra = run_scaling_matrix(&cfg, a.path()).unwrap();
    let rb = run_scaling_matrix(&cfg, b.path()).unwrap();
    assert_eq!(key(&ra), key(&rb));
    assert!(ra.iter().all(|r| r.ok()));
    assert_eq!(ra[0].speedup, 1.0 / (0.5 + 0.5 * 2.0 / 4.0));
    let text = std::fs::read_to_string(a.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let back = read_results_csv(&a.path().join("results.csv")).unwrap();
    assert_eq!(key(&back), key(&ra));
}
