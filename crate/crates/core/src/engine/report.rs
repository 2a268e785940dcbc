use std::io::Write;

use serde::Serialize;

use super::{Policy, SimulationTrace};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageMetrics {
    pub stage: usize,
    pub start_k: usize,
    pub end_k: Option<usize>,
    pub delta: f64,
    /// `delta / n_per_axis`.
    pub resolution: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub contains_true: bool,
    pub end_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceMetrics {
    pub policy: Policy,
    pub steps: usize,
    pub margin: f64,
    /// First `k` from which `|p~_k| <= margin` for the rest of the trace.
    pub entry_time: Option<usize>,
    pub trailing_fraction: f64,
    pub trailing_start: usize,
    pub trailing_max_err_p: f64,
    pub trailing_max_err_x: f64,
    pub final_err_p: f64,
    pub final_err_x: f64,
    pub zoom_instants: Vec<usize>,
    pub stages: Vec<StageMetrics>,
    pub aborted: Option<String>,
}

/// Summary of a trace against a parameter-error margin.
///
/// The trailing window is the last `ceil(fraction * rows)` rows.
pub fn convergence_metrics(trace: &SimulationTrace, margin: f64) -> ConvergenceMetrics {
    let rows = &trace.rows;
    let n = rows.len();
    let mut entry_time = None;
    for r in rows.iter().rev() {
        if r.err_p <= margin {
            entry_time = Some(r.k);
        } else {
            break;
        }
    }
    let window = ((trace.trailing_fraction * n as f64).ceil() as usize).clamp(n.min(1), n);
    let tail = &rows[n - window..];
    let max = |f: fn(&super::TraceRow) -> f64| tail.iter().map(f).fold(f64::NAN, f64::max);
    let per_axis = trace.stages.first().map_or(1, |s| {
        let n_p = s.lower.len().max(1);
        (s.samples.len() as f64).powf(1.0 / n_p as f64).round().max(1.0) as usize
    });
    ConvergenceMetrics {
        policy: trace.policy,
        steps: n,
        margin,
        entry_time,
        trailing_fraction: trace.trailing_fraction,
        trailing_start: tail.first().map_or(0, |r| r.k),
        trailing_max_err_p: max(|r| r.err_p),
        trailing_max_err_x: max(|r| r.err_x),
        final_err_p: rows.last().map_or(f64::NAN, |r| r.err_p),
        final_err_x: rows.last().map_or(f64::NAN, |r| r.err_x),
        zoom_instants: trace.zoom_instants(),
        stages: trace
            .stages
            .iter()
            .map(|s| StageMetrics {
                stage: s.stage,
                start_k: s.start_k,
                end_k: s.end_k,
                delta: s.delta,
                resolution: s.delta / per_axis as f64,
                lower: s.lower.clone(),
                upper: s.upper.clone(),
                contains_true: s.contains_true,
                end_error: s.end_error,
            })
            .collect(),
        aborted: trace.abort.as_ref().map(|a| a.reason.clone()),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with one row per step; an aborted run ends with an `ABORT` row
/// carrying the reason in the second column.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = trace.dims;
    let (nx, ny, nu, np, nmu) = (d.n_x, d.n_y, d.n_u, d.n_p, trace.observers);
    let mut header = vec!["k".to_string(), "t".to_string()];
    let indexed = |name: &'static str, n: usize| (0..n).map(move |i| format!("{name}[{i}]"));
    header.extend(indexed("x", nx));
    header.extend(indexed("y", ny));
    header.extend(indexed("u", nu));
    header.push("pi".into());
    header.extend(indexed("p_hat", np));
    header.extend(indexed("x_hat", nx));
    header.extend(["err_x_norm", "err_p_norm", "stage", "delta_m", "zoom"].map(String::from));
    header.extend(indexed("mu", nmu));
    w.write_record(&header)?;

    for r in &trace.rows {
        let mut rec = vec![r.k.to_string(), fmt(r.t)];
        rec.extend(r.x.iter().map(|v| fmt(*v)));
        rec.extend(r.y.iter().map(|v| fmt(*v)));
        rec.extend(r.u.iter().map(|v| fmt(*v)));
        rec.push(r.pi.to_string());
        rec.extend(r.p_hat.iter().map(|v| fmt(*v)));
        rec.extend(r.x_hat.iter().map(|v| fmt(*v)));
        rec.push(fmt(r.err_x));
        rec.push(fmt(r.err_p));
        rec.push(r.stage.to_string());
        rec.push(fmt(r.delta_m));
        rec.push(u8::from(r.zoom).to_string());
        rec.extend(r.mu.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    if let Some(a) = &trace.abort {
        let mut rec = vec![String::new(); header.len()];
        rec[0] = "ABORT".into();
        rec[1] = a.reason.clone();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
