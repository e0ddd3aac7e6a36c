//! Qubit-gate extraction, Euler angles, fidelity, charge-noise Monte Carlo
//! and the composite noise-resistant X rotation.

mod calibration;
mod extract;
mod noise;
mod sweep_echo;

pub use calibration::*;
pub use extract::*;
pub use noise::*;
pub use sweep_echo::*;
