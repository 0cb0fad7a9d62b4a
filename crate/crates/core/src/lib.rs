//! Numerical toolkit for Beurling regular variation.

pub mod asymptotics;
pub mod brv;
pub mod cli;
pub mod error;
pub mod flow;
pub mod funcspace;
pub mod interp;
pub mod quadrature;
pub mod represent;
pub mod sn_check;

pub use error::{Error, Result};
