//! Plant definitions, parameter sets and bounded signal generation.
//!
//! The plant class is
//!
//! ```text
//! x[k+1] = A(p) x[k] + G(p) phi(H x[k]) + B(p) (u[k] + v[k])
//! y[k]   = C x[k] + w[k]
//! ```
//!
//! with `A`, `G`, `B` affine in the parameter vector and `phi` applied
//! componentwise with slopes in `[0, l_i]`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Result};
use crate::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dimensions {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub n_v: usize,
    pub n_w: usize,
    pub n_p: usize,
}

/// A discrete-time plant `x+ = f(x, p, u, v)`, `y = h(x, p, u, w)`.
pub trait SystemModel: Send + Sync {
    fn dims(&self) -> Dimensions;
    fn step(&self, x: &Vector, p: &Vector, u: &Vector, v: &Vector) -> Vector;
    fn output(&self, x: &Vector, p: &Vector, u: &Vector, w: &Vector) -> Vector;
}

/// Vector norm used for signals and parameter errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Two,
    #[default]
    Infinity,
}

impl NormKind {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            NormKind::Two => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            NormKind::Infinity => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }
}

/// Axis-aligned parameter box.
///
/// An infinity-norm ball is a box, and so is the intersection of two boxes,
/// which keeps the zoom recursion closed. `center` and `radius` describe the
/// smallest infinity-norm ball containing the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = ParameterBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn from_center(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(config_err(format!("box radius must be finite and >= 0, got {radius}")));
        }
        Self::new(
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(config_err(format!(
                "parameter box bounds must be non-empty and of equal length (lower {}, upper {})",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(config_err(format!(
                    "parameter box axis {i}: need finite lower <= upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .collect()
    }

    /// Largest half-width, i.e. the infinity-norm radius about [`center`](Self::center).
    pub fn radius(&self) -> f64 {
        self.half_widths().into_iter().fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn is_subset_of(&self, other: &ParameterBox) -> bool {
        self.dim() == other.dim()
            && self
                .lower
                .iter()
                .zip(&other.lower)
                .all(|(a, b)| a >= b)
            && self
                .upper
                .iter()
                .zip(&other.upper)
                .all(|(a, b)| a <= b)
    }

    pub fn intersect(&self, other: &ParameterBox) -> Option<ParameterBox> {
        if self.dim() != other.dim() {
            return None;
        }
        let lower: Vec<f64> = self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect();
        let upper: Vec<f64> = self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect();
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return None;
        }
        Some(ParameterBox { lower, upper })
    }

    /// All `2^n_p` corners, first axis varying slowest.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|axis| {
                        if mask & (1 << (n - 1 - axis)) == 0 {
                            self.lower[axis]
                        } else {
                            self.upper[axis]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseBounds {
    pub delta_u: f64,
    pub delta_v: f64,
    pub delta_w: f64,
}

impl NoiseBounds {
    pub fn new(delta_u: f64, delta_v: f64, delta_w: f64) -> Result<Self> {
        let b = NoiseBounds { delta_u, delta_v, delta_w };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta_u", self.delta_u), ("delta_v", self.delta_v), ("delta_w", self.delta_w)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_err(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyParams {
    pub sampling_time: f64,
    pub lipschitz: Vec<f64>,
    pub parameter_interval: (f64, f64),
}

impl Default for CaseStudyParams {
    fn default() -> Self {
        CaseStudyParams {
            sampling_time: 0.01,
            lipschitz: vec![2.0],
            parameter_interval: (1.0, 50.0),
        }
    }
}

impl CaseStudyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_time.is_finite() && self.sampling_time > 0.0) {
            return Err(config_err(format!(
                "sampling_time must be > 0, got {}",
                self.sampling_time
            )));
        }
        if let Some(l) = self.lipschitz.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(config_err(format!("lipschitz bounds must be > 0, got {l}")));
        }
        let (lo, hi) = self.parameter_interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(config_err(format!(
                "parameter_interval needs lower < upper, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Matrix `M0 + sum_j p_j M_j` affine in the parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrix {
    pub constant: Matrix,
    pub slopes: Vec<Matrix>,
}

impl AffineMatrix {
    pub fn new(constant: Matrix, slopes: Vec<Matrix>) -> Result<Self> {
        let shape = constant.shape();
        if let Some((j, s)) = slopes.iter().enumerate().find(|(_, s)| s.shape() != shape) {
            return Err(config_err(format!(
                "affine slope {j} has shape {:?}, constant term has {:?}",
                s.shape(),
                shape
            )));
        }
        Ok(AffineMatrix { constant, slopes })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn eval(&self, p: &[f64]) -> Matrix {
        let mut m = self.constant.clone();
        for (s, pj) in self.slopes.iter().zip(p) {
            m += s * *pj;
        }
        m
    }
}

/// `phi(v) = v + sin(v)`, applied componentwise. Its slope `1 + cos(v)` lies in `[0, 2]`.
pub fn phi(v: &Vector) -> Vector {
    v.map(|x| x + x.sin())
}

/// Lur'e-type plant with affine parameter dependence and the nonlinearity [`phi`].
#[derive(Clone, Debug)]
pub struct LureSystem {
    pub a: AffineMatrix,
    pub g: AffineMatrix,
    pub b: AffineMatrix,
    pub h: Matrix,
    pub c: Matrix,
    pub lipschitz: Vec<f64>,
    pub sampling_time: f64,
    pub parameter_box: ParameterBox,
}

impl LureSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: AffineMatrix,
        g: AffineMatrix,
        b: AffineMatrix,
        h: Matrix,
        c: Matrix,
        lipschitz: Vec<f64>,
        sampling_time: f64,
        parameter_box: ParameterBox,
    ) -> Result<Self> {
        let (nx, nx2) = a.shape();
        if nx != nx2 || nx == 0 {
            return Err(config_err(format!("A must be square and non-empty, got {:?}", a.shape())));
        }
        let n_phi = lipschitz.len();
        if g.shape() != (nx, n_phi) {
            return Err(config_err(format!("G must be {nx}x{n_phi}, got {:?}", g.shape())));
        }
        if h.shape() != (n_phi, nx) {
            return Err(config_err(format!("H must be {n_phi}x{nx}, got {:?}", h.shape())));
        }
        if b.shape().0 != nx || b.shape().1 == 0 {
            return Err(config_err(format!("B must have {nx} rows, got {:?}", b.shape())));
        }
        if c.shape().1 != nx || c.shape().0 == 0 {
            return Err(config_err(format!("C must have {nx} columns, got {:?}", c.shape())));
        }
        let n_p = parameter_box.dim();
        for (name, m) in [("A", &a), ("G", &g), ("B", &b)] {
            if m.slopes.len() != n_p {
                return Err(config_err(format!(
                    "{name} has {} parameter slopes, parameter box has dimension {n_p}",
                    m.slopes.len()
                )));
            }
        }
        Ok(LureSystem { a, g, b, h, c, lipschitz, sampling_time, parameter_box })
    }

    pub fn n_x(&self) -> usize {
        self.a.shape().0
    }

    pub fn n_u(&self) -> usize {
        self.b.shape().1
    }

    pub fn n_y(&self) -> usize {
        self.c.shape().0
    }

    pub fn n_phi(&self) -> usize {
        self.lipschitz.len()
    }

    pub fn n_p(&self) -> usize {
        self.parameter_box.dim()
    }

    pub fn a_at(&self, p: &[f64]) -> Matrix {
        self.a.eval(p)
    }

    pub fn g_at(&self, p: &[f64]) -> Matrix {
        self.g.eval(p)
    }

    pub fn b_at(&self, p: &[f64]) -> Matrix {
        self.b.eval(p)
    }
}

impl SystemModel for LureSystem {
    fn dims(&self) -> Dimensions {
        Dimensions {
            n_x: self.n_x(),
            n_u: self.n_u(),
            n_y: self.n_y(),
            n_v: self.n_u(),
            n_w: self.n_y(),
            n_p: self.n_p(),
        }
    }

    fn step(&self, x: &Vector, p: &Vector, u: &Vector, v: &Vector) -> Vector {
        let p = p.as_slice();
        self.a_at(p) * x + self.g_at(p) * phi(&(&self.h * x)) + self.b_at(p) * (u + v)
    }

    fn output(&self, x: &Vector, _p: &Vector, _u: &Vector, w: &Vector) -> Vector {
        &self.c * x + w
    }
}

/// The two-state, scalar-parameter example: a discretised double integrator
/// with parameter-dependent damping, nonlinearity gain and input channel.
pub fn case_study_system(params: &CaseStudyParams) -> Result<LureSystem> {
    params.validate()?;
    if params.lipschitz.len() != 1 {
        return Err(config_err(format!(
            "case study has one nonlinearity channel, got {} lipschitz bounds",
            params.lipschitz.len()
        )));
    }
    let ts = params.sampling_time;
    let a0 = DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]);
    let a1 = DMatrix::from_row_slice(2, 2, &[-0.5 * ts, -0.5 * ts, -ts, -ts]);
    let g0 = DMatrix::zeros(2, 1);
    let g1 = DMatrix::from_row_slice(2, 1, &[0.5 * ts, ts]);
    let b0 = DMatrix::from_row_slice(2, 1, &[ts, ts]);
    let b1 = DMatrix::from_row_slice(2, 1, &[ts, -ts]);
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let c = DMatrix::identity(2, 2);
    let (lo, hi) = params.parameter_interval;
    LureSystem::new(
        AffineMatrix::new(a0, vec![a1])?,
        AffineMatrix::new(g0, vec![g1])?,
        AffineMatrix::new(b0, vec![b1])?,
        h,
        c,
        params.lipschitz.clone(),
        ts,
        ParameterBox::new(vec![lo], vec![hi])?,
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform on the closed Euclidean ball of the given radius.
    #[default]
    UniformBall,
    Zero,
}

/// Seeded generator of vectors whose Euclidean norm never exceeds `bound`.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    bound: f64,
    dim: usize,
    dist: NoiseDistribution,
}

impl NoiseSource {
    pub fn new(bound: f64, dim: usize, seed: u64, stream: u64, dist: NoiseDistribution) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(input_err(format!("noise bound must be finite and >= 0, got {bound}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(NoiseSource { rng, bound, dim, dist })
    }

    pub fn sample(&mut self) -> Vector {
        if self.dist == NoiseDistribution::Zero || self.bound == 0.0 || self.dim == 0 {
            return Vector::zeros(self.dim);
        }
        let mut dir = Vector::from_fn(self.dim, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let n = dir.norm();
        if n == 0.0 {
            return Vector::zeros(self.dim);
        }
        dir /= n;
        let u: f64 = self.rng.random();
        let r = self.bound * u.powf(1.0 / self.dim as f64);
        let mut s = dir * r;
        while s.norm() > self.bound {
            s *= 1.0 - f64::EPSILON;
        }
        s
    }
}

pub fn bounded_noise_sequence(
    bound: f64,
    dim: usize,
    length: usize,
    seed: u64,
    dist: NoiseDistribution,
) -> Result<Vec<Vector>> {
    let mut src = NoiseSource::new(bound, dim, seed, 0, dist)?;
    Ok((0..length).map(|_| src.sample()).collect())
}

/// One sinusoid `amplitude * sin(frequency * t + phase)` on input `channel`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    #[serde(default)]
    pub channel: usize,
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Deterministic multi-sine input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub components: Vec<SineComponent>,
}

fn one() -> usize {
    1
}

impl Default for InputSpec {
    /// Three tones with total amplitude 1.
    fn default() -> Self {
        let tone = |amplitude, frequency| SineComponent { channel: 0, amplitude, frequency, phase: 0.0 };
        InputSpec {
            channels: 1,
            components: vec![tone(0.5, 1.0), tone(0.3, 2.7), tone(0.2, 6.1)],
        }
    }
}

impl InputSpec {
    pub fn zero(channels: usize) -> Self {
        InputSpec { channels, components: Vec::new() }
    }

    /// Euclidean bound on `u[k]` from the per-channel amplitude sums.
    pub fn amplitude_bound(&self) -> f64 {
        let mut per = vec![0.0; self.channels];
        for c in &self.components {
            if let Some(slot) = per.get_mut(c.channel) {
                *slot += c.amplitude.abs();
            }
        }
        per.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn validate(&self, delta_u: f64) -> Result<()> {
        for (j, c) in self.components.iter().enumerate() {
            if c.channel >= self.channels {
                return Err(config_err(format!(
                    "input component {j} targets channel {} of {}",
                    c.channel, self.channels
                )));
            }
            if !c.amplitude.is_finite() || !c.frequency.is_finite() || !c.phase.is_finite() {
                return Err(config_err(format!("input component {j} has non-finite fields")));
            }
        }
        let bound = self.amplitude_bound();
        if bound > delta_u {
            return Err(config_err(format!(
                "input amplitude budget exceeded: {bound} > delta_u = {delta_u}"
            )));
        }
        Ok(())
    }
}

pub fn pe_input(spec: &InputSpec, k: usize, sampling_time: f64) -> Vector {
    let t = k as f64 * sampling_time;
    let mut u = Vector::zeros(spec.channels);
    for c in &spec.components {
        u[c.channel] += c.amplitude * (c.frequency * t + c.phase).sin();
    }
    u
}
