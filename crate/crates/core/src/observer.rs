//! Observer bank and the circle-criterion observer.

use crate::error::{config_err, input_err, Result};
use crate::model::{phi, AffineMatrix, LureSystem};
use crate::{Matrix, Vector};

/// One observer update: `(x_hat, p_hat, u, y) -> (x_hat+, y_hat)`.
pub trait StateObserver: Sync {
    fn step(&self, x_hat: &Vector, p_hat: &Vector, u: &Vector, y: &Vector) -> (Vector, Vector);
}

/// Observer gains `L(p) = L0 + p L1`, `K(p) = K0 + p K1` (one slope per parameter coordinate).
#[derive(Clone, Debug, PartialEq)]
pub struct GainSchedule {
    pub l: AffineMatrix,
    pub k: AffineMatrix,
}

impl GainSchedule {
    pub fn new(l: AffineMatrix, k: AffineMatrix) -> Result<Self> {
        if l.shape().1 != k.shape().1 {
            return Err(config_err(format!(
                "L and K must have the same number of columns (n_y), got {:?} and {:?}",
                l.shape(),
                k.shape()
            )));
        }
        if l.slopes.len() != k.slopes.len() {
            return Err(config_err("L and K must have the same number of parameter slopes"));
        }
        let finite = |m: &AffineMatrix| {
            m.constant.iter().chain(m.slopes.iter().flat_map(|s| s.iter())).all(|x| x.is_finite())
        };
        if !finite(&l) || !finite(&k) {
            return Err(config_err("observer gains must be finite"));
        }
        Ok(GainSchedule { l, k })
    }

    /// Scalar-parameter schedule.
    pub fn affine(l0: Matrix, l1: Matrix, k0: Matrix, k1: Matrix) -> Result<Self> {
        Self::new(AffineMatrix::new(l0, vec![l1])?, AffineMatrix::new(k0, vec![k1])?)
    }

    pub fn zero(n_x: usize, n_phi: usize, n_y: usize, n_p: usize) -> Self {
        GainSchedule {
            l: AffineMatrix { constant: Matrix::zeros(n_x, n_y), slopes: vec![Matrix::zeros(n_x, n_y); n_p] },
            k: AffineMatrix { constant: Matrix::zeros(n_phi, n_y), slopes: vec![Matrix::zeros(n_phi, n_y); n_p] },
        }
    }

    pub fn l_at(&self, p: &[f64]) -> Matrix {
        self.l.eval(p)
    }

    pub fn k_at(&self, p: &[f64]) -> Matrix {
        self.k.eval(p)
    }

    /// Checks the gain shapes against the plant.
    pub fn check_against(&self, system: &LureSystem) -> Result<()> {
        let (nx, ny, nphi, np) = (system.n_x(), system.n_y(), system.n_phi(), system.n_p());
        if self.l.shape() != (nx, ny) {
            return Err(config_err(format!("L must be {nx}x{ny}, got {:?}", self.l.shape())));
        }
        if self.k.shape() != (nphi, ny) {
            return Err(config_err(format!("K must be {nphi}x{ny}, got {:?}", self.k.shape())));
        }
        if self.l.slopes.len() != np {
            return Err(config_err(format!(
                "gain schedule has {} parameter slopes, plant has {np} parameters",
                self.l.slopes.len()
            )));
        }
        Ok(())
    }
}

/// ```text
/// e      = C x_hat - y
/// x_hat+ = A(p) x_hat + G(p) phi(H x_hat + K(p) e) + B(p) u + L(p) e
/// y_hat  = C x_hat
/// ```
pub fn observer_step(
    x_hat: &Vector,
    p_hat: &Vector,
    u: &Vector,
    y: &Vector,
    schedule: &GainSchedule,
    system: &LureSystem,
) -> (Vector, Vector) {
    let p = p_hat.as_slice();
    let y_hat = &system.c * x_hat;
    let innovation = &y_hat - y;
    let arg = &system.h * x_hat + schedule.k_at(p) * &innovation;
    let next = system.a_at(p) * x_hat
        + system.g_at(p) * phi(&arg)
        + system.b_at(p) * u
        + schedule.l_at(p) * &innovation;
    (next, y_hat)
}

#[derive(Clone, Copy, Debug)]
pub struct CircleCriterionObserver<'a> {
    pub system: &'a LureSystem,
    pub schedule: &'a GainSchedule,
}

impl<'a> CircleCriterionObserver<'a> {
    pub fn new(system: &'a LureSystem, schedule: &'a GainSchedule) -> Result<Self> {
        schedule.check_against(system)?;
        Ok(CircleCriterionObserver { system, schedule })
    }
}

impl StateObserver for CircleCriterionObserver<'_> {
    fn step(&self, x_hat: &Vector, p_hat: &Vector, u: &Vector, y: &Vector) -> (Vector, Vector) {
        observer_step(x_hat, p_hat, u, y, self.schedule, self.system)
    }
}

/// `N` independent observers, one per parameter sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverBank {
    pub states: Vec<Vector>,
    pub parameters: Vec<Vector>,
}

impl ObserverBank {
    pub fn new(parameters: Vec<Vector>, initial_state: &Vector) -> Result<Self> {
        if parameters.is_empty() {
            return Err(config_err("observer bank needs at least one observer"));
        }
        let states = vec![initial_state.clone(); parameters.len()];
        Ok(ObserverBank { states, parameters })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Advances every observer one step and returns `y_hat_i - y` per observer.
    pub fn step(&mut self, observer: &dyn StateObserver, u: &Vector, y: &Vector) -> Vec<Vector> {
        let mut errors = Vec::with_capacity(self.len());
        for (x_hat, p_hat) in self.states.iter_mut().zip(&self.parameters) {
            let (next, y_hat) = observer.step(x_hat, p_hat, u, y);
            *x_hat = next;
            errors.push(y_hat - y);
        }
        errors
    }

    /// Swaps in a new parameter set and restarts every observer from the
    /// current state of observer `carry_from`.
    pub fn reinitialize(&mut self, new_parameters: Vec<Vector>, carry_from: usize) -> Result<()> {
        if new_parameters.len() != self.len() {
            return Err(input_err(format!(
                "expected {} new parameters, got {}",
                self.len(),
                new_parameters.len()
            )));
        }
        let seed = self
            .states
            .get(carry_from)
            .cloned()
            .ok_or_else(|| input_err(format!("observer index {carry_from} out of range")))?;
        self.states.iter_mut().for_each(|s| *s = seed.clone());
        self.parameters = new_parameters;
        Ok(())
    }
}
