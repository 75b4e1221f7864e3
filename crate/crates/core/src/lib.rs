//! Numerical large-deviations laboratory for asymptotically decoupled
//! lattice fields: box tilings, exact finite-volume laws, pressures,
//! entropy estimates, discrete Legendre–Fenchel transforms and Mosco
//! diagnostics, tied together by a verification harness.

pub mod duality;
pub mod entropy;
pub mod error;
pub mod field;
pub mod harness;
pub mod lattice;
pub mod numeric;
pub mod pressure;
pub mod report;
pub mod table;

pub use error::{Error, Result};
