//! Exact discrete-time simulation of single-photon interferometric
//! protocols with a two-level "plate" ancilla, forward/backward
//! propagation and weak-trace analysis.

pub mod builders;
pub mod circuit;
pub mod dsl;
pub mod protocols;
pub mod statespace;
pub mod tsvf;

pub use num_complex::Complex64 as C64;
