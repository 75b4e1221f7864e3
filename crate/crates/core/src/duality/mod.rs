//! Convex conjugation on grids and Mosco convergence diagnostics.

pub mod grid;
pub mod lft;
pub mod mosco;

pub use grid::{convexity_violations, Axis, GridFunction};
pub use lft::{biconjugate, conjugate_at, lft, lft_direct, lft_with_argmax};
pub use mosco::{mosco_m1_check, mosco_m2_check, uniform_properness_check, MoscoM1, MoscoM2, ProperWitness};
