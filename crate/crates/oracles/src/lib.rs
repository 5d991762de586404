//! Slow, obviously-correct reference implementations. They share no code
//! with the main crate and exist only to cross-check it in tests.

pub mod autodiff;
pub mod kmeans;
pub mod lowrank;
pub mod rational;
pub mod snn;
pub mod stats;
