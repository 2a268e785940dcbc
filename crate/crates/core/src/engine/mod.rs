//! Closed-loop simulation of plant, observer bank and supervisor.

mod report;
mod scenario;

pub use report::{convergence_metrics, write_trace_csv, ConvergenceMetrics, StageMetrics};
pub use scenario::{NoiseConfig, Policy, ScenarioConfig};

use serde::Serialize;

use crate::error::{config_err, Result};
use crate::lmi::Certificate;
use crate::model::{pe_input, Dimensions, LureSystem, NoiseSource, NormKind, SystemModel};
use crate::observer::{CircleCriterionObserver, ObserverBank};
use crate::sampling::SamplingState;
use crate::supervisor::{produce_estimates, MonitoringState};
use crate::Vector;

/// Logged quantities at step `k`. Selection and estimates use the monitoring
/// signals before any zoom at `k`; `stage` and `delta_m` are after it.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub x: Vector,
    pub y: Vector,
    pub u: Vector,
    pub mu: Vec<f64>,
    pub pi: usize,
    pub p_hat: Vector,
    pub x_hat: Vector,
    /// Euclidean norm of `x_hat - x`.
    pub err_x: f64,
    /// Infinity norm of `p_hat - p`.
    pub err_p: f64,
    pub stage: usize,
    pub delta_m: f64,
    pub zoom: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    pub start_k: usize,
    /// Step of the zoom that closed the stage, if any.
    pub end_k: Option<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub delta: f64,
    pub samples: Vec<Vec<f64>>,
    pub contains_true: bool,
    /// Parameter error of the selection that triggered the closing zoom.
    pub end_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Abort {
    pub k: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub policy: Policy,
    pub dims: Dimensions,
    pub observers: usize,
    pub true_parameter: Vec<f64>,
    pub rows: Vec<TraceRow>,
    /// `output_error_sq[k][i] = |y~_i(k)|^2`, one entry per simulated step.
    pub output_error_sq: Vec<Vec<f64>>,
    /// Steps whose monitoring update restarted the signals.
    pub resets: Vec<usize>,
    pub stages: Vec<StageRecord>,
    pub abort: Option<Abort>,
    /// Default margin for the entry-time metric.
    pub margin: f64,
    pub trailing_fraction: f64,
}

impl SimulationTrace {
    pub fn zoom_instants(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| r.zoom).map(|r| r.k).collect()
    }
}

fn stage_record(sampling: &SamplingState, start_k: usize, p: &[f64]) -> StageRecord {
    StageRecord {
        stage: sampling.stage,
        start_k,
        end_k: None,
        lower: sampling.current_box.lower.clone(),
        upper: sampling.current_box.upper.clone(),
        delta: sampling.current_radius,
        samples: sampling.samples.iter().map(|s| s.as_slice().to_vec()).collect(),
        contains_true: sampling.current_box.contains(p),
        end_error: None,
    }
}

/// Runs the scenario with the policy it declares.
pub fn run(config: &ScenarioConfig, system: &LureSystem, cert: &Certificate) -> Result<SimulationTrace> {
    match config.policy {
        Policy::Static => run_static(config, system, cert),
        Policy::Dynamic => run_dynamic(config, system, cert),
    }
}

pub fn run_static(config: &ScenarioConfig, system: &LureSystem, cert: &Certificate) -> Result<SimulationTrace> {
    if config.policy != Policy::Static {
        return Err(config_err("run_static needs a static scenario"));
    }
    simulate(config, system, cert, None)
}

pub fn run_dynamic(config: &ScenarioConfig, system: &LureSystem, cert: &Certificate) -> Result<SimulationTrace> {
    if config.policy != Policy::Dynamic {
        return Err(config_err("run_dynamic needs a dynamic scenario"));
    }
    let interval = config.zoom_interval.ok_or_else(|| config_err("dynamic policy needs M_d"))?;
    simulate(config, system, cert, Some(interval))
}

fn simulate(
    config: &ScenarioConfig,
    system: &LureSystem,
    cert: &Certificate,
    zoom_interval: Option<usize>,
) -> Result<SimulationTrace> {
    config.validate()?;
    cert.check_dimensions(system)?;
    let n_p = system.n_p();
    let per_axis = config.per_axis(n_p)?;
    let alpha = if zoom_interval.is_some() { config.alpha } else { 0.5 };
    let mut sampling = SamplingState::new(system.parameter_box.clone(), per_axis, alpha, config.noise_inflation)?;

    let dims = system.dims();
    let p_true = Vector::from_vec(config.true_parameter.clone());
    let x_hat0 = config.observer_x0.clone().map_or_else(|| Vector::zeros(dims.n_x), Vector::from_vec);
    let observer = CircleCriterionObserver::new(system, &cert.schedule)?;
    let mut bank = ObserverBank::new(sampling.samples.clone(), &x_hat0)?;
    let mut monitor = MonitoringState::new(bank.len(), config.lambda)?;
    let mut process = NoiseSource::new(config.noise.delta_v, dims.n_v, config.seed, 0, config.noise.distribution)?;
    let mut measurement = NoiseSource::new(config.noise.delta_w, dims.n_w, config.seed, 1, config.noise.distribution)?;
    let ts = system.sampling_time;

    let mut trace = SimulationTrace {
        policy: config.policy,
        dims,
        observers: bank.len(),
        true_parameter: config.true_parameter.clone(),
        rows: Vec::with_capacity(config.horizon + 1),
        output_error_sq: Vec::with_capacity(config.horizon),
        resets: Vec::new(),
        stages: vec![stage_record(&sampling, 0, &config.true_parameter)],
        abort: None,
        margin: config.margin.unwrap_or_else(|| sampling.resolution()),
        trailing_fraction: config.trailing_fraction,
    };

    let mut x = Vector::from_vec(config.x0.clone());
    let mut reset_pending = false;
    for k in 0..=config.horizon {
        let x_norm = x.norm();
        if !x_norm.is_finite() || x_norm > config.state_guard {
            trace.abort = Some(Abort {
                k,
                reason: format!("state norm {x_norm:e} exceeds guard {:e} at k = {k}", config.state_guard),
            });
            break;
        }
        let u = pe_input(&config.input, k, ts);
        let w = measurement.sample();
        let y = system.output(&x, &p_true, &u, &w);

        let pi = monitor.select();
        let sel = produce_estimates(&bank, pi);
        let zoom = matches!(zoom_interval, Some(m) if k > 0 && k % m == 0);
        if zoom {
            let stage = trace.stages.last_mut().expect("at least one stage");
            stage.end_k = Some(k);
            stage.end_error = Some(NormKind::Infinity.distance(sel.parameter_estimate.as_slice(), p_true.as_slice()));
            sampling = sampling.zoom(sel.parameter_estimate.as_slice())?;
            bank.reinitialize(sampling.samples.clone(), pi)?;
            trace.stages.push(stage_record(&sampling, k, &config.true_parameter));
            reset_pending = true;
        }
        trace.rows.push(TraceRow {
            k,
            t: k as f64 * ts,
            err_x: (&sel.state_estimate - &x).norm(),
            err_p: NormKind::Infinity.distance(sel.parameter_estimate.as_slice(), p_true.as_slice()),
            x: x.clone(),
            y: y.clone(),
            u: u.clone(),
            mu: monitor.mu.clone(),
            pi,
            p_hat: sel.parameter_estimate,
            x_hat: sel.state_estimate,
            stage: sampling.stage,
            delta_m: sampling.current_radius,
            zoom,
        });
        if k == config.horizon {
            break;
        }

        let errors = bank.step(&observer, &u, &y);
        trace.output_error_sq.push(errors.iter().map(|e| e.norm_squared()).collect());
        if reset_pending {
            trace.resets.push(k);
        }
        monitor.update(&errors, reset_pending);
        reset_pending = false;
        let v = process.sample();
        x = system.step(&x, &p_true, &u, &v);
    }
    Ok(trace)
}
