//! Supervisory multi-observer estimation of constant parameters and states of
//! discrete-time nonlinear systems under bounded process and measurement noise.
//!
//! The estimator runs a bank of state observers, one per sampled parameter
//! value, and a supervisor that scores each observer with a discounted sum of
//! squared output errors and picks the smallest. Two sampling policies are
//! provided:
//!
//! * **static**: the parameter set is gridded once and the samples never move;
//! * **dynamic**: every `M_d` steps the supervisor zooms in on a box of radius
//!   `alpha^m * delta_0` (plus a configured noise inflation) around the current
//!   estimate, resamples it and resets the monitoring signals.
//!
//! The concrete plant is a Lur'e-type system with a slope-restricted
//! nonlinearity, observed by a circle-criterion observer whose gains are
//! certified by a matrix inequality checked at the vertices of the parameter
//! box (see [`lmi`]).
//!
//! ```
//! use supobs::engine::{run, ScenarioConfig};
//! use supobs::lmi::Certificate;
//!
//! let mut config = ScenarioConfig::case_study();
//! config.horizon = 200;
//! let system = config.system().unwrap();
//! let cert = Certificate::case_study();
//! let trace = run(&config, &system, &cert).unwrap();
//! assert_eq!(trace.rows.len(), 201);
//! ```

pub mod engine;
pub mod error;
pub mod lmi;
pub mod model;
pub mod observer;
pub mod sampling;
pub mod supervisor;

pub use error::{Error, Result};

/// Dynamically sized column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dynamically sized matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
