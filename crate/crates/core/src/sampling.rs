//! Parameter sampling: fixed cell-centre grids and the zoom-in recursion.

use crate::error::{config_err, input_err, Error, Result};
use crate::model::{NormKind, ParameterBox};
use crate::Vector;

/// `n` cell centres of `[lower, upper]`: `lower + (2i + 1)(upper - lower) / (2n)`.
///
/// Every point of the interval is within `(upper - lower) / (2n)` of a sample.
pub fn equidistant_samples(lower: f64, upper: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(config_err("number of samples must be >= 1"));
    }
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(config_err(format!("sampling interval needs lower < upper, got ({lower}, {upper})")));
    }
    Ok(cell_centres(lower, upper, n))
}

// Also used for degenerate (zero-width) axes left by clipped zooms.
fn cell_centres(lower: f64, upper: f64, n: usize) -> Vec<f64> {
    let width = upper - lower;
    let denom = 2.0 * n as f64;
    (0..n)
        .map(|i| lower + (2 * i + 1) as f64 * width / denom)
        .collect()
}

/// Tensor grid of per-axis cell centres, `n_per_axis^n_p` samples, last axis fastest.
pub fn grid_samples(bx: &ParameterBox, n_per_axis: usize) -> Result<Vec<Vector>> {
    if n_per_axis == 0 {
        return Err(config_err("samples per axis must be >= 1"));
    }
    let axes: Vec<Vec<f64>> = bx
        .lower
        .iter()
        .zip(&bx.upper)
        .map(|(l, u)| cell_centres(*l, *u, n_per_axis))
        .collect();
    let total = n_per_axis.pow(bx.dim() as u32);
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = vec![0.0; bx.dim()];
        for axis in (0..bx.dim()).rev() {
            p[axis] = axes[axis][rem % n_per_axis];
            rem /= n_per_axis;
        }
        out.push(Vector::from_vec(p));
    }
    Ok(out)
}

/// Largest distance from a probe point of `bx` to its nearest sample.
///
/// Probes form a regular grid of about `probes` points including the box
/// corners, so the result under-estimates the true covering radius by at
/// most the probe spacing.
pub fn covering_radius(bx: &ParameterBox, samples: &[Vector], probes: usize, norm: NormKind) -> Result<f64> {
    if probes == 0 {
        return Err(input_err("probe count must be >= 1"));
    }
    if samples.is_empty() {
        return Err(input_err("covering radius of an empty sample set is undefined"));
    }
    let n = bx.dim();
    let per_axis = ((probes as f64).powf(1.0 / n as f64).round() as usize).max(1);
    let coord = |axis: usize, j: usize| {
        if per_axis == 1 {
            0.5 * (bx.lower[axis] + bx.upper[axis])
        } else {
            bx.lower[axis] + (bx.upper[axis] - bx.lower[axis]) * j as f64 / (per_axis - 1) as f64
        }
    };
    let total = per_axis.pow(n as u32);
    let mut worst: f64 = 0.0;
    let mut probe = vec![0.0; n];
    for flat in 0..total {
        let mut rem = flat;
        for axis in (0..n).rev() {
            probe[axis] = coord(axis, rem % per_axis);
            rem /= per_axis;
        }
        let nearest = samples
            .iter()
            .map(|s| norm.distance(s.as_slice(), &probe))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    Ok(worst)
}

/// State of the dynamic sampling policy at stage `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingState {
    pub stage: usize,
    pub current_box: ParameterBox,
    /// `Delta_0`: infinity-norm radius of the initial box about its centre.
    pub initial_radius: f64,
    /// `Delta_m = alpha^m * Delta_0`.
    pub current_radius: f64,
    pub samples: Vec<Vector>,
    pub n_per_axis: usize,
    pub alpha: f64,
    /// Additive margin on the zoom radius standing in for the unknown
    /// noise-induced part of the parameter error bound.
    pub noise_inflation: f64,
}

impl SamplingState {
    pub fn new(initial: ParameterBox, n_per_axis: usize, alpha: f64, noise_inflation: f64) -> Result<Self> {
        initial.validate()?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(config_err(format!("zoom factor alpha must lie in (0, 1), got {alpha}")));
        }
        if !(noise_inflation.is_finite() && noise_inflation >= 0.0) {
            return Err(config_err(format!("noise_inflation must be finite and >= 0, got {noise_inflation}")));
        }
        let samples = grid_samples(&initial, n_per_axis)?;
        let radius = initial.radius();
        Ok(SamplingState {
            stage: 0,
            current_box: initial,
            initial_radius: radius,
            current_radius: radius,
            samples,
            n_per_axis,
            alpha,
            noise_inflation,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Covering radius guaranteed by the grid: `Delta_m / n_per_axis`.
    pub fn resolution(&self) -> f64 {
        self.current_radius / self.n_per_axis as f64
    }

    /// Move to stage `m + 1`: intersect the current box with the
    /// infinity-norm ball of radius `alpha * Delta_m + noise_inflation`
    /// around `selected` and regrid the result.
    pub fn zoom(&self, selected: &[f64]) -> Result<SamplingState> {
        if !self.current_box.contains(selected) {
            return Err(input_err(format!(
                "selected sample {selected:?} lies outside the current box {:?}",
                self.current_box
            )));
        }
        let next_radius = self.initial_radius * self.alpha.powi(self.stage as i32 + 1);
        let ball = ParameterBox::from_center(selected, next_radius + self.noise_inflation)?;
        let next_box = ball
            .intersect(&self.current_box)
            .ok_or_else(|| Error::Internal("zoom produced an empty parameter box".into()))?;
        let samples = grid_samples(&next_box, self.n_per_axis)?;
        Ok(SamplingState {
            stage: self.stage + 1,
            current_box: next_box,
            initial_radius: self.initial_radius,
            current_radius: next_radius,
            samples,
            n_per_axis: self.n_per_axis,
            alpha: self.alpha,
            noise_inflation: self.noise_inflation,
        })
    }
}
