//! Numerical laboratory for the BBM–Burgers equation
//!
//! ```text
//! u_t - u_xxt - u_xx + gamma u_xxx + beta u u_x = 0
//! ```
//!
//! on a truncated periodic line: closed-form asymptotic profiles, exact
//! Fourier-multiplier semigroups, exponential time integration, decay-rate
//! fitting and an experiment harness.

pub mod asymptotics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod profiles;
pub mod quadrature;
pub mod semigroup;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{make_grid, Field, GridSpec, Norm, SpectralField};
pub use profiles::{ModelParams, ProfileSet};
