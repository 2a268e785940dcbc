//! Monitoring signals and observer selection.

use serde::Serialize;

use crate::error::{config_err, input_err, Result};
use crate::observer::ObserverBank;
use crate::Vector;

/// Discounted output-error energy per observer:
/// `mu_i(k+1) = lambda mu_i(k) + |y~_i(k)|^2`, restarted from zero history at resets.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitoringState {
    pub mu: Vec<f64>,
    pub lambda: f64,
    /// Number of updates applied; the step index of the most recent reset is in `last_reset`.
    pub updates: usize,
    pub last_reset: Option<usize>,
}

impl MonitoringState {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        if n == 0 {
            return Err(config_err("monitoring needs at least one observer"));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(config_err(format!("forgetting factor must lie in [0, 1), got {lambda}")));
        }
        Ok(MonitoringState { mu: vec![0.0; n], lambda, updates: 0, last_reset: None })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Panics if `output_errors` does not have one entry per observer.
    pub fn update(&mut self, output_errors: &[Vector], at_reset: bool) {
        assert_eq!(output_errors.len(), self.mu.len(), "one output error per observer");
        for (mu, e) in self.mu.iter_mut().zip(output_errors) {
            let energy = e.norm_squared();
            *mu = if at_reset { energy } else { self.lambda * *mu + energy };
        }
        if at_reset {
            self.last_reset = Some(self.updates);
        }
        self.updates += 1;
    }

    /// Index of the smallest signal, lowest index on ties.
    pub fn select(&self) -> usize {
        select_min(&self.mu)
    }
}

pub fn select_min(mu: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in mu.iter().enumerate().skip(1) {
        if *v < mu[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub parameter_estimate: Vector,
    pub state_estimate: Vector,
}

pub fn produce_estimates(bank: &ObserverBank, index: usize) -> Selection {
    Selection {
        index,
        parameter_estimate: bank.parameters[index].clone(),
        state_estimate: bank.states[index].clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeFlag {
    pub observer: usize,
    /// Window covers steps `window_end - window .. window_end - 1`.
    pub window_end: usize,
    pub energy: f64,
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeReport {
    pub window: usize,
    /// Smallest windowed energy per observer.
    pub min_energy: Vec<f64>,
    pub flags: Vec<PeFlag>,
}

/// Windowed output-error energy against a floor on the parameter error.
///
/// `history[k][i]` is `|y~_i(k)|^2`; `param_errors[i]` is `|p~_i|` for the observer.
pub fn pe_audit(
    history: &[Vec<f64>],
    param_errors: &[f64],
    window: usize,
    floor: impl Fn(f64) -> f64,
) -> Result<PeReport> {
    if window == 0 {
        return Err(input_err("window must be at least one step"));
    }
    if window > history.len() {
        return Err(input_err(format!("window {window} exceeds history length {}", history.len())));
    }
    let n = param_errors.len();
    if let Some(k) = history.iter().position(|row| row.len() != n) {
        return Err(input_err(format!("history row {k} has {} entries, expected {n}", history[k].len())));
    }
    let floors: Vec<f64> = param_errors.iter().map(|e| floor(*e)).collect();
    let mut energy = vec![0.0; n];
    for row in &history[..window] {
        for (acc, v) in energy.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut min_energy = vec![f64::INFINITY; n];
    let mut flags = Vec::new();
    for end in window..=history.len() {
        if end > window {
            for i in 0..n {
                energy[i] += history[end - 1][i] - history[end - 1 - window][i];
            }
        }
        for i in 0..n {
            min_energy[i] = min_energy[i].min(energy[i]);
            if energy[i] < floors[i] {
                flags.push(PeFlag { observer: i, window_end: end, energy: energy[i], floor: floors[i] });
            }
        }
    }
    Ok(PeReport { window, min_energy, flags })
}
