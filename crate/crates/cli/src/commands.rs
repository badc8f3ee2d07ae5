//! Experiment dispatch. Every command computes its artifacts in memory and
//! only then writes them, so a failing run leaves no partial files.

use std::fmt::Write as _;

use serde_json::{json, Value};
use thiserror::Error;

use wmmf::engine::{fmt_float, init_state, run, trajectory_csv, verify_invariants, RunOptions};
use wmmf::harness::{
    check_rate_bound, estimate_drift, estimate_eventset_prob, ps_benchmark, replicate, sample_initial_state,
    stability_experiment, EventSetConfig, HarnessError, RateBoundReport, INVARIANT_TOLERANCE,
};
use wmmf::lyapunov::{derive_constants, LyapunovError, NormContext};
use wmmf::rng::{stream, Purpose, Streams};
use wmmf::WeightedMaxMin;

use crate::config::{ConfigError, ExperimentKind, RunConfig};
use crate::output::Artifact;

/// Version of every JSON report and CSV preamble written by the CLI.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for anything the configuration could have avoided, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        let config_side = match self {
            CliError::Config(_) => true,
            CliError::Harness(e) => matches!(
                e,
                HarnessError::SupercriticalConfig(_) | HarnessError::Invalid(_) | HarnessError::Model(_)
            ) || matches!(e, HarnessError::Lyapunov(l) if lyapunov_config_side(l)),
            CliError::Lyapunov(e) => lyapunov_config_side(e),
            CliError::Io(_) | CliError::Runtime(_) => false,
        };
        if config_side {
            EXIT_CONFIG
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

fn lyapunov_config_side(e: &LyapunovError) -> bool {
    matches!(
        e,
        LyapunovError::Invalid(_)
            | LyapunovError::Supercritical(_)
            | LyapunovError::MomentCondition { .. }
            | LyapunovError::MomentViolation { .. }
            | LyapunovError::InfeasibleConstant { .. }
    )
}

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub checks_passed: bool,
    pub summary: String,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.checks_passed {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

/// Runs the configured experiment. The effective configuration is always
/// among the artifacts.
pub fn dispatch(config: &RunConfig) -> Result<Outcome, CliError> {
    let mut outcome = match config.experiment.kind {
        ExperimentKind::Validate => validate(config),
        ExperimentKind::Run => simulate(config),
        ExperimentKind::Drift => drift(config),
        ExperimentKind::Eventset => eventset(config),
        ExperimentKind::Stability => stability(config),
        ExperimentKind::PsBench => ps_bench(config),
    }?;
    outcome
        .artifacts
        .push(Artifact::new("effective_config.json", config.to_json_pretty() + "\n"));
    Ok(outcome)
}

fn report_json(config: &RunConfig, kind: &str, body: Value) -> String {
    let mut v = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "experiment": kind,
        "seed": config.seed,
    });
    if let (Value::Object(head), Value::Object(rest)) = (&mut v, body) {
        for (k, x) in rest {
            head.entry(k).or_insert(x);
        }
    }
    serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
}

fn csv_preamble(config: &RunConfig) -> String {
    format!("# schema_version={REPORT_SCHEMA_VERSION} seed={}\n", config.seed)
}

fn validate(config: &RunConfig) -> Result<Outcome, CliError> {
    let (ledger, _) = derive_constants(&config.topology, &config.traffic, &config.lyapunov)?;
    let adm = &ledger.admissibility;
    // the admissibility conditions are sufficient, not necessary, for the
    // drift bound, and for small gamma no finite C2 meets them all; they are
    // reported and do not decide the exit code
    let gamma_ok = adm.gamma.iter().all(|g| g.passed());
    let p = &ledger.params;
    let mut s = String::new();
    writeln!(s, "validate: configuration is well formed").ok();
    writeln!(s, "  a = {}, b = {}, gamma = {}, delta1 = {}, N = {}", p.a, p.b, p.gamma, p.delta1, p.n).ok();
    writeln!(s, "  C1 = {:.6e}, C2 = {:.6e} (lower bound {:.6e})", ledger.c1, p.c2, adm.c2_lower_bound).ok();
    writeln!(s, "  epsilon7 = {:.6e}, M1 = {:.6e}, l1 = {:.6e}", p.epsilon7, ledger.m1, ledger.l1).ok();
    writeln!(s, "  admissibility (reported only): {}", if adm.all_hold() { "holds" } else { "does not hold" }).ok();
    writeln!(s, "    C2 large enough: {}", adm.c2_large_enough).ok();
    writeln!(s, "    a <= 1/C2: {}", adm.a_small_enough).ok();
    writeln!(s, "    routes with N_H < 1: {:?}", adm.short_truncation).ok();
    writeln!(s, "    Gamma checks: {}", if gamma_ok { "pass" } else { "fail" }).ok();
    let mut ledger_json = ledger.to_json();
    ledger_json["seed"] = json!(config.seed);
    Ok(Outcome {
        checks_passed: true,
        summary: s,
        artifacts: vec![Artifact::new(
            "ledger.json",
            serde_json::to_string_pretty(&ledger_json).expect("ledger serializes") + "\n",
        )],
    })
}

struct Replication {
    csv: String,
    samples: Vec<(f64, Vec<u64>)>,
    summary: Value,
    rate_bound: Option<RateBoundReport>,
    invariant_error: Option<String>,
}

fn simulate(config: &RunConfig) -> Result<Outcome, CliError> {
    let (topology, traffic) = (&config.topology, &config.traffic);
    let settings = &config.experiment.run;
    let routes = traffic.num_routes();
    let ctx = if settings.check_rate_bound {
        Some(NormContext::build(topology, traffic, &config.lyapunov)?)
    } else {
        None
    };
    let mut options = RunOptions::new(config.horizon);
    if settings.samples > 0 {
        options = options.with_samples(settings.samples);
    }
    options.record_states = settings.check_rate_bound;
    options.check_feasibility = true;
    let ids: Vec<u64> = (0..config.replications as u64).collect();
    let reps = replicate(&ids, |rep| {
        let x = sample_initial_state(traffic, &settings.initial_counts, config.seed, rep);
        let u: Vec<Option<f64>> = x.interarrival.iter().map(|&u| (u > 0.0).then_some(u)).collect();
        let mut rng = stream(config.seed, rep, 0, Purpose::InitialInterarrival);
        let state = init_state(traffic, &x.residuals, &u, &mut rng)?;
        let mut streams = Streams::new(config.seed, rep, routes);
        let out = run(topology, traffic, &WeightedMaxMin, state, &options, &mut streams, &mut [])?;
        let rate_bound = match &ctx {
            Some(ctx) => Some(check_rate_bound(topology, traffic, &out.trajectory, ctx)?),
            None => None,
        };
        let t = &out.trajectory;
        let mean_counts: Vec<f64> = t.count_integral.iter().map(|c| c / t.horizon).collect();
        Ok(Replication {
            csv: trajectory_csv(t),
            samples: t.samples.iter().map(|s| (s.time, s.counts.clone())).collect(),
            summary: json!({
                "replication": rep,
                "events": t.event_count,
                "stalled_events": t.stalled_events,
                "mean_counts": mean_counts,
                "final_counts": out.state.counts(),
            }),
            rate_bound,
            invariant_error: verify_invariants(&out.state, INVARIANT_TOLERANCE).err(),
        })
    })?;

    let mut artifacts = Vec::new();
    let width = reps.len().saturating_sub(1).to_string().len().max(3);
    for (i, r) in reps.iter().enumerate() {
        artifacts.push(Artifact::new(
            format!("trajectory_{i:0width$}.csv"),
            csv_preamble(config) + &r.csv,
        ));
    }
    if settings.samples > 0 {
        let mut csv = csv_preamble(config);
        csv.push_str("replication,time");
        for r in 0..routes {
            write!(csv, ",count_{r}").ok();
        }
        csv.push('\n');
        for (i, rep) in reps.iter().enumerate() {
            for (time, counts) in &rep.samples {
                write!(csv, "{i},{}", fmt_float(*time)).ok();
                for c in counts {
                    write!(csv, ",{c}").ok();
                }
                csv.push('\n');
            }
        }
        artifacts.push(Artifact::new("samples.csv", csv));
    }
    let invariant_failures: Vec<String> = reps
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.invariant_error.as_ref().map(|e| format!("replication {i}: {e}")))
        .collect();
    let rate_violations: usize = reps
        .iter()
        .filter_map(|r| r.rate_bound.as_ref())
        .filter(|b| !b.report_only)
        .map(|b| b.violations.len())
        .sum();
    let stalled: u64 = reps.iter().map(|r| r.summary["stalled_events"].as_u64().unwrap_or(0)).sum();
    let passed = invariant_failures.is_empty() && rate_violations == 0 && stalled == 0;
    let body = json!({
        "horizon": config.horizon,
        "replications": config.replications,
        "passed": passed,
        "invariant_failures": invariant_failures,
        "rate_bound": reps.iter().map(|r| &r.rate_bound).collect::<Vec<_>>(),
        "runs": reps.iter().map(|r| &r.summary).collect::<Vec<_>>(),
    });
    artifacts.push(Artifact::new("run.json", report_json(config, "run", body)));

    let events: u64 = reps.iter().map(|r| r.summary["events"].as_u64().unwrap_or(0)).sum();
    let mut s = String::new();
    writeln!(s, "run: {} replications to horizon {}", config.replications, config.horizon).ok();
    writeln!(s, "  events simulated: {events}").ok();
    writeln!(s, "  invariant failures: {}", invariant_failures.len()).ok();
    writeln!(s, "  stalled events: {stalled}").ok();
    if settings.check_rate_bound {
        writeln!(s, "  rate-bound violations (enforced): {rate_violations}").ok();
    }
    Ok(Outcome {
        checks_passed: passed,
        summary: s,
        artifacts,
    })
}

fn drift(config: &RunConfig) -> Result<Outcome, CliError> {
    let ctx = NormContext::build(&config.topology, &config.traffic, &config.lyapunov)?;
    let states: Vec<_> = config
        .experiment
        .drift
        .initial_counts
        .iter()
        .enumerate()
        .map(|(i, c)| sample_initial_state(&config.traffic, c, config.seed, i as u64))
        .collect();
    let report = estimate_drift(&config.topology, &config.traffic, &ctx, &states, config.replications, config.seed)?;
    let mut csv = csv_preamble(config);
    csv.push_str("initial_count,initial_norm,final_norm,drift_mean,drift_stderr,drift_ci_low,drift_ci_high\n");
    let mut s = format!("drift: horizon N^3 = {}, {} replications per state\n", report.horizon, report.replications);
    for e in &report.entries {
        let d = &e.drift;
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            e.initial_count,
            fmt_float(e.initial_norm),
            fmt_float(e.final_norm),
            fmt_float(d.mean),
            fmt_float(d.stderr),
            fmt_float(d.ci_low),
            fmt_float(d.ci_high)
        )
        .ok();
        writeln!(
            s,
            "  {:>6} documents: norm {:.4} -> {:.4}, drift {:.4} [{:.4}, {:.4}]",
            e.initial_count, e.initial_norm, e.final_norm, d.mean, d.ci_low, d.ci_high
        )
        .ok();
    }
    let body = serde_json::to_value(&report).expect("drift report serializes");
    Ok(Outcome {
        checks_passed: true,
        summary: s,
        artifacts: vec![
            Artifact::new("drift.json", report_json(config, "drift", body)),
            Artifact::new("drift.csv", csv),
        ],
    })
}

fn eventset(config: &RunConfig) -> Result<Outcome, CliError> {
    let ctx = NormContext::build(&config.topology, &config.traffic, &config.lyapunov)?;
    let settings = &config.experiment.eventset;
    let esc = EventSetConfig {
        eta: settings.eta,
        epsilon5: settings.epsilon5.value().unwrap_or(ctx.params.epsilon7 / 4.0),
    };
    let report = estimate_eventset_prob(
        &config.topology,
        &config.traffic,
        &ctx,
        &esc,
        &settings.t_values,
        config.replications,
        config.seed,
    )?;
    let mut csv = csv_preamble(config);
    csv.push_str("t,complements,trials,estimate,ci_low,ci_high,a1_complements,a2_complements,decay_shape\n");
    let mut s = format!("eventset: {} replications, eta {}, epsilon5 {:.6e}\n", config.replications, esc.eta, esc.epsilon5);
    for p in &report.points {
        let c = &p.complement;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            fmt_float(p.t),
            c.successes,
            c.trials,
            fmt_float(c.estimate),
            fmt_float(c.ci_low),
            fmt_float(c.ci_high),
            p.a1_complements,
            p.a2_complements,
            fmt_float(p.decay_shape)
        )
        .ok();
        writeln!(s, "  t = {:>10}: complement {:.4} [{:.4}, {:.4}]", p.t, c.estimate, c.ci_low, c.ci_high).ok();
    }
    let body = serde_json::to_value(&report).expect("event-set report serializes");
    Ok(Outcome {
        checks_passed: true,
        summary: s,
        artifacts: vec![
            Artifact::new("eventset.json", report_json(config, "eventset", body)),
            Artifact::new("eventset.csv", csv),
        ],
    })
}

fn stability(config: &RunConfig) -> Result<Outcome, CliError> {
    let settings = &config.experiment.stability;
    let initial = settings
        .initial_counts
        .iter()
        .any(|&c| c > 0)
        .then(|| sample_initial_state(&config.traffic, &settings.initial_counts, config.seed, 0));
    let report = stability_experiment(
        &config.topology,
        &config.traffic,
        initial.as_ref(),
        config.horizon,
        settings.samples,
        config.replications,
        config.seed,
    )?;
    let mut csv = csv_preamble(config);
    csv.push_str("time,mean_count\n");
    for (t, m) in report.times.iter().zip(&report.mean_counts) {
        writeln!(csv, "{},{}", fmt_float(*t), fmt_float(*m)).ok();
    }
    let (sl, tm) = (&report.slope, &report.tail_mean);
    let mut s = format!("stability: {} replications to horizon {}\n", config.replications, config.horizon);
    writeln!(s, "  tail-window mean count {:.4} [{:.4}, {:.4}]", tm.mean, tm.ci_low, tm.ci_high).ok();
    writeln!(s, "  tail-window slope {:.4e} [{:.4e}, {:.4e}]", sl.mean, sl.ci_low, sl.ci_high).ok();
    let body = serde_json::to_value(&report).expect("stability report serializes");
    Ok(Outcome {
        checks_passed: true,
        summary: s,
        artifacts: vec![
            Artifact::new("stability.json", report_json(config, "stability", body)),
            Artifact::new("stability.csv", csv),
        ],
    })
}

fn ps_bench(config: &RunConfig) -> Result<Outcome, CliError> {
    let route = &config.traffic.routes[0];
    let rho = config.traffic.traffic_intensity()[0];
    let report = ps_benchmark(&route.service, rho, config.horizon, config.replications, config.seed)?;
    let tolerance = config.experiment.ps_bench.tolerance;
    let passed = report.relative_error.abs() <= tolerance;
    let m = &report.mean_count;
    let mut s = format!("ps-bench: rho {rho}, {} replications to horizon {}\n", config.replications, config.horizon);
    writeln!(s, "  expected mean count {:.6}", report.expected).ok();
    writeln!(s, "  observed {:.6} [{:.6}, {:.6}]", m.mean, m.ci_low, m.ci_high).ok();
    writeln!(s, "  relative error {:.4e} (tolerance {tolerance})", report.relative_error).ok();
    let mut body = serde_json::to_value(&report).expect("benchmark report serializes");
    body["tolerance"] = json!(tolerance);
    body["passed"] = json!(passed);
    Ok(Outcome {
        checks_passed: passed,
        summary: s,
        artifacts: vec![Artifact::new("ps_bench.json", report_json(config, "ps-bench", body))],
    })
}
