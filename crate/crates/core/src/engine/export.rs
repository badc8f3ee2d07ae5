//! Trajectory export. Floats carry 17 significant digits so a CSV can be
//! replayed bit for bit.

use std::fmt::Write;

use super::{EventKind, Trajectory};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

/// `{:.16e}`, with `inf` spelled out for the empty system's λ^w.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One row per event: `time,event_kind,route,service,lambda_w,count_0,…`.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let routes = trajectory.count_integral.len();
    let mut out = String::from("time,event_kind,route,service,lambda_w");
    for r in 0..routes {
        write!(out, ",count_{r}").unwrap();
    }
    out.push('\n');
    for e in &trajectory.events {
        let service = match e.kind {
            EventKind::Arrival { service, .. } => fmt_float(service),
            EventKind::Departure { .. } => String::new(),
        };
        write!(
            out,
            "{},{},{},{},{}",
            fmt_float(e.time),
            e.kind.label(),
            e.kind.route(),
            service,
            fmt_float(e.lambda_w)
        )
        .unwrap();
        for c in &e.counts {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Structured event log with `schema_version` and the seed.
pub fn trajectory_json(trajectory: &Trajectory, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "schema_version": TRAJECTORY_SCHEMA_VERSION,
        "seed": seed,
        "horizon": trajectory.horizon,
        "event_count": trajectory.event_count,
        "stalled_events": trajectory.stalled_events,
        "count_integral": trajectory.count_integral,
        "events": trajectory.events.iter().map(|e| {
            let mut v = serde_json::to_value(e).expect("event serializes");
            if !e.lambda_w.is_finite() {
                v["lambda_w"] = serde_json::Value::String(fmt_float(e.lambda_w));
            }
            v
        }).collect::<Vec<_>>(),
    })
}
