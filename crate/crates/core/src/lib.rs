//! Deterministic transient-stability simulation of a small test grid with
//! dynamic data-center loads.
//!
//! The library is organized around five subsystems:
//!
//! * [`stochastic`] — seeded random processes and pulse trains that drive
//!   the server load patterns;
//! * [`dcload`] — the continuous-time data-center load model (servers,
//!   induction-motor cooling, ZIP miscellaneous load);
//! * [`ups`] — the UPS protection state machine with disconnection and
//!   reconnection logic, battery bookkeeping and internal voltage control;
//! * [`grid`] — the surrounding network: aggregate synchronous machine,
//!   Y-bus solver, fault injection and bus frequency estimation;
//! * [`engine`] — the fixed-step hybrid simulation loop tying it together.

pub mod dcload;
pub mod engine;
pub mod grid;
pub mod stochastic;
pub mod ups;

mod error;

pub use error::{SimError, SimResult};
