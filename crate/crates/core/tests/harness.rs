use wmmf::engine::{init_state, run, EventKind, EventRecord, RunOptions, Trajectory};
use wmmf::harness::{
    check_rate_bound, drift_with_ids, estimate_drift, event_set_indicator, ps_benchmark, sample_initial_state,
    single_link_poisson, stability_experiment, EventSetConfig, HarnessError, Violation,
};
use wmmf::lyapunov::{LyapunovConfig, NormContext};
use wmmf::model::{MarkovState, NetworkTopology, TrafficSpec};
use wmmf::rng::{stream, Purpose, Streams};
use wmmf::{DistributionSpec, WeightedMaxMin};

fn exp(mean: f64) -> DistributionSpec {
    DistributionSpec::Exponential { mean }
}

fn small_config() -> LyapunovConfig {
    LyapunovConfig {
        a: 0.5,
        b: 2,
        n: 2,
        ..LyapunovConfig::default()
    }
}

fn mm1_context(rho: f64) -> (NetworkTopology, TrafficSpec, NormContext) {
    let (topology, traffic) = single_link_poisson(rho, exp(1.0));
    let ctx = NormContext::build(&topology, &traffic, &small_config()).unwrap();
    (topology, traffic, ctx)
}

fn event_set_config(ctx: &NormContext) -> EventSetConfig {
    EventSetConfig {
        eta: 1.0 / 12.0,
        epsilon5: ctx.params.epsilon7 / 4.0,
    }
}

#[test]
fn drift_is_reproducible_and_order_free() {
    let (topology, traffic, ctx) = mm1_context(0.5);
    let states = vec![sample_initial_state(&traffic, &[20], 3, 0)];
    let a = estimate_drift(&topology, &traffic, &ctx, &states, 6, 11).unwrap();
    let b = estimate_drift(&topology, &traffic, &ctx, &states, 6, 11).unwrap();
    assert_eq!(a, b);
    let ids: Vec<u64> = (0..6).collect();
    let reversed: Vec<u64> = ids.iter().rev().copied().collect();
    let c = drift_with_ids(&topology, &traffic, &ctx, &states, &[reversed], 11).unwrap();
    assert_eq!(a.entries, c.entries);
    assert_eq!(a.horizon, 8.0);
    assert_eq!(a.entries[0].initial_count, 20);
}

#[test]
fn drift_rejects_single_replication_and_supercritical_load() {
    let (topology, traffic, ctx) = mm1_context(0.5);
    let states = vec![sample_initial_state(&traffic, &[5], 3, 0)];
    assert!(matches!(
        estimate_drift(&topology, &traffic, &ctx, &states, 1, 0),
        Err(HarnessError::Invalid(_))
    ));
    let (_, heavy) = single_link_poisson(1.2, exp(1.0));
    assert!(matches!(
        estimate_drift(&topology, &heavy, &ctx, &states, 4, 0),
        Err(HarnessError::SupercriticalConfig(_))
    ));
}

fn quiet_trajectory(traffic: &TrafficSpec, topology: &NetworkTopology, horizon: f64) -> Trajectory {
    let state = init_state(traffic, &[vec![]], &[None], &mut stream(1, 0, 0, Purpose::Test)).unwrap();
    let mut options = RunOptions::new(horizon);
    options.arrivals_enabled = false;
    run(topology, traffic, &WeightedMaxMin, state, &options, &mut Streams::new(1, 0, 1), &mut [])
        .unwrap()
        .trajectory
}

#[test]
fn no_arrivals_lie_in_both_events() {
    let (topology, traffic, ctx) = mm1_context(0.25);
    let traj = quiet_trajectory(&traffic, &topology, 50.0);
    let outcome = event_set_indicator(&traj, &ctx, &event_set_config(&ctx), 50.0).unwrap();
    assert!(outcome.in_both());
    assert!(outcome.violations.is_empty());
    assert_eq!(
        event_set_indicator(&traj, &ctx, &event_set_config(&ctx), 60.0).unwrap_err(),
        HarnessError::IncompleteLog(60.0)
    );
}

#[test]
fn burst_near_the_last_grid_point_is_flagged_there() {
    let (topology, traffic, ctx) = mm1_context(0.25);
    let mut traj = quiet_trajectory(&traffic, &topology, 1.0);
    let b = ctx.params.b;
    let last = EventSetConfig::steps(b, ctx.params.n);
    let v_last = *EventSetConfig::grid(b, ctx.params.n).last().unwrap();
    assert_eq!(v_last, f64::from(ctx.params.n) + 1.0);
    // the density kernel peaks at 1/b
    let service = v_last - 1.0 / f64::from(b);
    for k in 0..200 {
        traj.events.push(EventRecord {
            time: 0.5,
            kind: EventKind::Arrival { route: 0, service },
            per_document_rate: vec![1.0 / (k + 1) as f64],
            lambda_w: 1.0 / (k + 1) as f64,
            counts: vec![k + 1],
        });
    }
    traj.event_count = traj.events.len() as u64;
    let outcome = event_set_indicator(&traj, &ctx, &event_set_config(&ctx), 1.0).unwrap();
    assert!(!outcome.in_a2);
    assert!(outcome.violations.contains(&Violation { set: 2, route: 0, j: last }));
    // the density kernel vanishes left of each service time, the tail kernel does not
    assert!(outcome.violations.iter().filter(|v| v.set == 2).all(|v| v.j > last / 2));
    assert!(outcome.violations.contains(&Violation { set: 1, route: 0, j: 0 }));
}

#[test]
fn rate_bound_gates() {
    let (topology, traffic, ctx) = mm1_context(0.5);
    let (_, heavy) = single_link_poisson(1.5, exp(1.0));
    let empty = quiet_trajectory(&traffic, &topology, 1.0);
    let skipped = check_rate_bound(&topology, &heavy, &empty, &ctx).unwrap();
    assert!(skipped.skipped.is_some());
    assert_eq!(skipped.epochs_checked, 0);

    let state = init_state(&traffic, &[vec![1.0, 2.0]], &[None], &mut stream(2, 0, 0, Purpose::Test)).unwrap();
    let mut options = RunOptions::new(20.0);
    options.record_states = true;
    let out = run(&topology, &traffic, &WeightedMaxMin, state, &options, &mut Streams::new(2, 0, 1), &mut []).unwrap();
    let report = check_rate_bound(&topology, &traffic, &out.trajectory, &ctx).unwrap();
    assert!(report.skipped.is_none());
    let busy = out.trajectory.states.iter().filter(|s| s.count() > 0).count();
    assert_eq!(report.epochs_checked, busy);

    let mut unlogged = out.trajectory.clone();
    unlogged.states.clear();
    assert!(matches!(
        check_rate_bound(&topology, &traffic, &unlogged, &ctx),
        Err(HarnessError::IncompleteLog(_))
    ));
}

#[test]
fn stable_network_drains_a_large_backlog() {
    let (topology, traffic) = single_link_poisson(0.5, exp(1.0));
    let initial = sample_initial_state(&traffic, &[60], 5, 0);
    let report = stability_experiment(&topology, &traffic, Some(&initial), 400.0, 20, 8, 5).unwrap();
    assert_eq!(report.times.len(), 20);
    assert!(report.mean_counts[0] < 60.0);
    assert!(report.tail_mean.mean < 5.0);
    assert!(matches!(
        stability_experiment(&topology, &traffic, None, 10.0, 2, 8, 5),
        Err(HarnessError::Invalid(_))
    ));
    let empty = MarkovState::empty(1, vec![0.0]);
    let from_empty = stability_experiment(&topology, &traffic, Some(&empty), 50.0, 10, 2, 5).unwrap();
    assert_eq!(from_empty, stability_experiment(&topology, &traffic, None, 50.0, 10, 2, 5).unwrap());
}

#[test]
fn processor_sharing_mean_matches_geometric_law() {
    let report = ps_benchmark(&exp(1.0), 0.5, 5e3, 8, 17).unwrap();
    assert_eq!(report.expected, 1.0);
    assert!(report.relative_error.abs() < 0.1, "{report:?}");
    assert!(matches!(
        ps_benchmark(&exp(1.0), 1.0, 10.0, 2, 0),
        Err(HarnessError::SupercriticalConfig(_))
    ));
}
