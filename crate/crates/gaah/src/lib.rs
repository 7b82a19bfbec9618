//! Exact simulation of the generalized Aubry-André-Harper (GAAH) chain of
//! hard-core bosons.
//!
//! Units: ħ = 1, energies are angular frequencies in rad/ns, times in ns.
//! Site `j` (1-based) is stored in bit `j - 1` of a [`basis::FockState`].

pub mod analysis;
pub mod basis;
pub mod cli;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod opensys;
pub mod output;
pub mod seeding;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
