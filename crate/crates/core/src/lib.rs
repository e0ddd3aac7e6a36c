//! Control and simulation of ³¹P donor nuclear-spin qubits in silicon whose
//! electron is shared between the donor and a Si/SiO₂ interface.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: physical constants, device parameters, basis conventions and
//!   closed-form energy quantities.
//! * [`pulses`]: envelope primitives and the factory schedules for Z, X and
//!   CPHASE gates.
//! * [`propagation`]: the lab-frame Hamiltonian, basis changes and
//!   time-ordered evolution.
//! * [`effective`]: the rotating-wave Hamiltonian, its frequency
//!   components, the multi-frequency Floquet matrix and its second-order
//!   Schrieffer-Wolff reduction.
//! * [`gates`]: qubit-gate extraction, Euler angles, fidelity, quasi-static
//!   charge-noise Monte Carlo and the composite sweep-and-echo X rotation.
//! * [`twoqubit`]: dipole-dipole coupled CPHASE gates.
//! * [`experiments`]: manifest-driven curve generation used by the CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod effective;
pub mod error;
pub mod experiments;
pub mod gates;
pub mod linalg;
pub mod model;
pub mod output;
pub mod propagation;
pub mod pulses;
pub mod twoqubit;

pub use error::{Error, Result};
pub use model::{PhysicalConstants, SystemParams};

/// 2π, for converting between cyclic and angular frequencies.
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Cyclic frequency in MHz to angular frequency in rad/s.
#[inline]
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

/// Cyclic frequency in GHz to angular frequency in rad/s.
#[inline]
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// Nanoseconds to seconds.
#[inline]
pub fn ns(t: f64) -> f64 {
    t * 1e-9
}
