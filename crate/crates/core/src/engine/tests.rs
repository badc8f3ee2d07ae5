use super::*;
use crate::allocation::WeightedMaxMin;
use crate::distributions::DistributionSpec;
use crate::rng::{stream, Purpose};

fn mm1(rho: f64) -> (NetworkTopology, TrafficSpec) {
    (
        NetworkTopology::single_link(1.0, 1),
        TrafficSpec::new(vec![TrafficSpec::poisson(rho, DistributionSpec::Exponential { mean: 1.0 })]),
    )
}

fn alloc_with_rate(rate: f64) -> Allocation {
    Allocation {
        per_document_rate: vec![rate],
        route_total: vec![rate],
        min_weighted_rate: rate,
        frozen_level: vec![rate],
        saturated_links: vec![0],
    }
}

fn state(residuals: Vec<f64>, u: f64) -> NetworkState {
    let (_, traffic) = mm1(0.5);
    init_state(&traffic, &[residuals], &[Some(u)], &mut stream(0, 0, 0, Purpose::Test)).unwrap()
}

#[test]
fn init_examples() {
    let s = state(vec![], 1.0);
    assert_eq!(s.time, 0.0);
    assert_eq!(s.total_count(), 0);
    let s = state(vec![2.0, 0.5], 1.0);
    assert_eq!(s.residuals(0), vec![0.5, 2.0]);
    assert!(s.documents(0).all(|d| d.origin == Origin::Original));
    let (_, traffic) = mm1(0.5);
    let err = init_state(&traffic, &[vec![-1.0]], &[Some(1.0)], &mut stream(0, 0, 0, Purpose::Test)).unwrap_err();
    assert_eq!(err, EngineError::NonpositiveResidual { route: 0, value: -1.0 });
    let drawn = init_state(&traffic, &[vec![]], &[None], &mut stream(0, 0, 0, Purpose::Test)).unwrap();
    assert!(drawn.residual_interarrival(0) > 0.0);
}

#[test]
fn next_event_examples() {
    let a = alloc_with_rate(0.25);
    assert_eq!(next_event(&state(vec![0.5, 2.0], 1.9), &a).unwrap(), (1.9, PendingEvent::Arrival(0)));
    assert_eq!(next_event(&state(vec![0.5, 2.0], 2.5), &a).unwrap(), (2.0, PendingEvent::Departure(0)));
    assert_eq!(next_event(&state(vec![0.5, 2.0], 2.0), &a).unwrap(), (2.0, PendingEvent::Departure(0)));
    let mut empty = state(vec![], 1.0);
    empty.disable_arrivals();
    assert_eq!(next_event(&empty, &Allocation::zero(1)).unwrap_err(), EngineError::NoEvent);
}

#[test]
fn advance_examples() {
    let a = alloc_with_rate(0.5);
    let mut s = state(vec![1.0], 5.0);
    advance(&mut s, 1.0, &a).unwrap();
    assert_eq!(s.residuals(0), vec![0.5]);
    assert_eq!(s.delta(0), 0.5);
    assert_eq!(s.residual_interarrival(0), 4.0);

    let mut s = state(vec![3.0], 5.0);
    s.routes[0].delta = 0.3;
    s.routes[0].docs[0].mark = 3.3;
    advance(&mut s, 1.0, &a).unwrap();
    assert_eq!(s.delta(0), 0.8);

    let mut s = state(vec![1.0], 5.0);
    assert!(matches!(advance(&mut s, 2.5, &a), Err(EngineError::EventSkipped { .. })));
    let mut s = state(vec![10.0], 1.0);
    assert!(matches!(advance(&mut s, 1.5, &a), Err(EngineError::EventSkipped { .. })));
}

#[test]
fn apply_event_examples() {
    let (_, traffic) = mm1(0.5);
    let mut streams = Streams::new(1, 0, 1);
    let mut s = state(vec![], 1.0);
    advance(&mut s, 1.0, &Allocation::zero(1)).unwrap();
    let kind = apply_event(&mut s, PendingEvent::Arrival(0), &traffic, &mut streams).unwrap();
    assert!(matches!(kind, EventKind::Arrival { route: 0, .. }));
    assert_eq!(s.total_count(), 1);
    assert_eq!(s.arrivals(0), 1);
    assert!(s.residual_interarrival(0) > 0.0);
    let (orig, arrived) = decompose(&s);
    assert_eq!((orig.count(), arrived.count()), (0, 1));

    let mut s = state(vec![1.0], 9.0);
    let a = alloc_with_rate(1.0);
    advance(&mut s, 1.0, &a).unwrap();
    apply_event(&mut s, PendingEvent::Departure(0), &traffic, &mut streams).unwrap();
    assert_eq!(s.total_count(), 0);
    assert_eq!(WeightedMaxMin.allocate(&NetworkTopology::single_link(1.0, 1), &s.counts()).unwrap().per_document_rate, vec![0.0]);

    let mut s = state(vec![1.0], 9.0);
    assert!(matches!(
        apply_event(&mut s, PendingEvent::Departure(0), &traffic, &mut streams),
        Err(EngineError::NoDueEvent { .. })
    ));
}

#[test]
fn single_document_departs_at_one() {
    let (topology, traffic) = mm1(0.5);
    let s = state(vec![1.0], 5.0);
    let mut streams = Streams::new(1, 0, 1);
    let out = run(&topology, &traffic, &WeightedMaxMin, s, &RunOptions::new(1.5), &mut streams, &mut []).unwrap();
    let first = &out.trajectory.events[0];
    assert_eq!(first.kind, EventKind::Departure { route: 0 });
    assert_eq!(first.time, 1.0);
    assert_eq!(first.lambda_w, f64::INFINITY);
}

#[test]
fn runs_are_reproducible() {
    let (topology, traffic) = mm1(0.7);
    let go = || {
        let s = state(vec![0.3, 1.2], 0.4);
        let mut streams = Streams::new(9, 3, 1);
        let out = run(&topology, &traffic, &WeightedMaxMin, s, &RunOptions::new(500.0), &mut streams, &mut []).unwrap();
        trajectory_csv(&out.trajectory)
    };
    let a = go();
    assert_eq!(a, go());
    assert!(a.lines().count() > 100);
}

#[test]
fn conservation_and_translation_at_samples() {
    let topology = NetworkTopology::new(
        vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]],
        vec![1.0, 1.5],
        vec![1.0, 2.0, 1.0],
    );
    let traffic = TrafficSpec::new(vec![
        TrafficSpec::poisson(0.2, DistributionSpec::Exponential { mean: 1.0 }),
        TrafficSpec::poisson(0.2, DistributionSpec::Uniform { low: 0.0, high: 2.0 }),
        TrafficSpec::poisson(0.3, DistributionSpec::Pareto { shape: 3.0, scale: 2.0 / 3.0 }),
    ]);
    let initial = vec![vec![0.5, 3.0, 3.0], vec![1.0, 8.0], vec![2.5]];
    let s = init_state(&traffic, &initial, &[None, None, None], &mut stream(5, 0, 0, Purpose::InitialInterarrival)).unwrap();
    let mut options = RunOptions::new(40.0).with_samples(10);
    options.sample_states = true;
    let out = run(&topology, &traffic, &WeightedMaxMin, s, &options, &mut Streams::new(5, 0, 3), &mut []).unwrap();
    assert_eq!(out.trajectory.samples.len(), 10);
    for sample in &out.trajectory.samples {
        let st = sample.state.as_ref().unwrap();
        for (r, init) in initial.iter().enumerate() {
            assert_eq!(st.counts()[r], st.initial_count(r) + st.arrivals(r) - st.departures(r));
            let mut expected: Vec<f64> = init.iter().map(|x| x - st.delta(r)).filter(|&x| x > 1e-9).collect();
            expected.sort_by(f64::total_cmp);
            let got: Vec<f64> = st
                .documents(r)
                .filter(|d| d.origin == Origin::Original)
                .map(|d| d.residual_service)
                .collect();
            assert_eq!(got.len(), expected.len());
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() <= 1e-9);
            }
        }
        let (orig, arrived) = decompose(st);
        assert_eq!(orig.merged(&arrived), st.markov());
    }
    for w in out.trajectory.events.windows(2) {
        assert!(w[1].time >= w[0].time);
    }
}

#[test]
fn coincident_departures_are_separate_events() {
    let (topology, traffic) = mm1(0.5);
    let s = state(vec![1.0; 5], 100.0);
    let out = run(&topology, &traffic, &WeightedMaxMin, s, &RunOptions::new(10.0), &mut Streams::new(1, 0, 1), &mut []).unwrap();
    let departures: Vec<f64> = out.trajectory.events.iter().map(|e| e.time).collect();
    assert_eq!(departures.len(), 5);
    // five documents sharing unit capacity all finish at t = 5
    for t in departures {
        assert!((t - 5.0).abs() < 1e-9);
    }
}

#[test]
fn drain_without_arrivals_is_monotone() {
    let (topology, traffic) = mm1(0.5);
    let s = state(vec![0.2, 0.9, 1.7, 2.2], 0.1);
    let mut options = RunOptions::new(20.0).with_samples(40);
    options.arrivals_enabled = false;
    let out = run(&topology, &traffic, &WeightedMaxMin, s, &options, &mut Streams::new(1, 0, 1), &mut []).unwrap();
    let counts: Vec<u64> = out.trajectory.samples.iter().map(|s| s.counts[0]).collect();
    assert!(counts.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*counts.last().unwrap(), 0);
}

#[test]
fn sample_at_event_epoch_sees_the_event() {
    let (topology, traffic) = mm1(0.5);
    let s = state(vec![1.0], 50.0);
    let mut options = RunOptions::new(2.0);
    options.sample_times = vec![0.5, 1.0, 2.0];
    let out = run(&topology, &traffic, &WeightedMaxMin, s, &options, &mut Streams::new(1, 0, 1), &mut []).unwrap();
    let counts: Vec<u64> = out.trajectory.samples.iter().map(|s| s.counts[0]).collect();
    assert_eq!(counts, vec![1, 0, 0]);
    assert!((out.trajectory.count_integral[0] - 1.0).abs() < 1e-12);
}

#[test]
fn csv_has_documented_header() {
    let (topology, traffic) = mm1(0.5);
    let s = state(vec![1.0], 0.5);
    let out = run(&topology, &traffic, &WeightedMaxMin, s, &RunOptions::new(3.0), &mut Streams::new(1, 0, 1), &mut []).unwrap();
    let csv = trajectory_csv(&out.trajectory);
    assert!(csv.starts_with("time,event_kind,route,service,lambda_w,count_0\n"));
    let json = trajectory_json(&out.trajectory, 1);
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["events"].as_array().unwrap().len(), out.trajectory.events.len());
}

#[test]
fn evenly_spaced_samples_include_the_horizon() {
    // h * k / k need not round back to h
    for h in [0.1, 7.3, 13.7, 41.9] {
        let options = RunOptions::new(h).with_samples(3);
        assert_eq!(*options.sample_times.last().unwrap(), h);
    }
    let (topology, traffic) = mm1(0.5);
    let options = RunOptions::new(13.7).with_samples(10);
    let out = run(&topology, &traffic, &WeightedMaxMin, state(vec![1.0], 0.5), &options, &mut Streams::new(1, 0, 1), &mut []).unwrap();
    assert_eq!(out.trajectory.samples.len(), 10);
}
