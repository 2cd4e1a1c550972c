//! Latency-aware cache-aided multicast streaming: physical-layer outage
//! math, coupled forward/backward request-latency dynamics, and a
//! forward-backward multi-objective actor-critic learner with baselines.
//!
//! The crate is `no_std` + `alloc`; all IO, file formats and the CLI live
//! in the companion `fbcast` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod dynamics;
pub mod fbmoac;
pub mod netmodel;
pub mod nn;
pub mod policy;
mod samplers;

pub use samplers::SlotRng;

use alloc::string::String;
use core::fmt;

/// Error type shared by all modules of the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// An argument is outside the mathematical domain of the operation.
    Domain(String),
    /// A model restriction is violated (e.g. the analytic outage form
    /// requires path-loss exponent 4).
    UnsupportedModel(String),
    /// Vector/matrix shapes do not chain.
    Shape(String),
    /// A constraint set is infeasible (e.g. cache capacity exceeds the
    /// library size).
    Infeasible(String),
    /// A non-finite value showed up where finite math was expected.
    NonFinite(String),
    /// The environment rejected a policy action at the given slot.
    Environment { slot: usize, message: String },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Domain(m) => write!(f, "domain error: {m}"),
            CoreError::UnsupportedModel(m) => write!(f, "unsupported model: {m}"),
            CoreError::Shape(m) => write!(f, "shape mismatch: {m}"),
            CoreError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CoreError::NonFinite(m) => write!(f, "non-finite value: {m}"),
            CoreError::Environment { slot, message } => {
                write!(f, "environment error at slot {slot}: {message}")
            }
        }
    }
}

pub type Result<T> = core::result::Result<T, CoreError>;
