//! Flight dynamics of a coaxial Mars helicopter released from a descending
//! backshell: entry and parachute descent, rotor spin-up, powered braking
//! through vortex-ring-state aerodynamics, and hover capture.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atmosphere;
pub mod control;
pub mod edl;
pub mod par;
pub mod rotor_aero;
pub mod sim;
pub mod trajectory;
pub mod vehicle;

pub use par::Execution;
