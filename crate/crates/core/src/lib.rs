//! Period and phase estimation for sparse pulse trains.
//!
//! Given the times of arrival (TOAs) of a periodic pulse train in which most
//! pulses may be missing and some detections are spurious, the estimator
//! recovers the integer period index of every detection by a depth-first
//! branch-and-bound search. Branches are pruned with statistical tests at a
//! chosen significance level, and once the running period estimate is sharp
//! enough the remaining detections are resolved in linear time.
//!
//! ```
//! use pulse_period::{estimate_period, HyperParams, Status};
//!
//! let toas = [5.0, 35.0, 95.0, 155.0, 185.0];
//! let params = HyperParams::new(1e-6, 0.01, 50, 0.1, 8.0, 100.0).unwrap();
//! let est = estimate_period(&toas, &params, &Default::default()).unwrap();
//! assert_eq!(est.status, Status::Solved);
//! assert!((est.t_hat - 30.0).abs() < 1e-9);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod domain;
mod error;
#[cfg(feature = "testing")]
pub mod oracle;
pub mod pipeline;
pub mod plausibility;
pub mod search;
pub mod statkit;
pub mod synth;

pub use domain::{Assignment, Estimate, HyperParams, Observations, Slot, Status};
pub use error::{Error, Result};
pub use pipeline::{estimate_period, EstimatorConfig, Session};
