//! Hybrid minimum principle and exponential-gradient switching optimization for two-phase
//! optimal control problems on matrix Lie groups.

pub mod check;
pub mod dynamics;
pub mod eg;
pub mod error;
pub mod extremal;
pub mod hmp;
pub mod lie;
pub mod quadrature;
pub mod strategy;

#[cfg(test)]
mod oracle;

pub use error::{Error, Result};
