//! Benchmarking toolkit for CNOT orientation asymmetry.
//!
//! Builds Bell-identity benchmark circuits, simulates them exactly under
//! direction-dependent noise, measures ground-state fractions and their
//! asymmetry, mitigates readout error, and orients CNOTs using per-direction
//! error rates.

pub mod circuit;
pub mod experiment;
pub mod mitigation;
pub mod noise;
pub mod sim;
pub mod transpiler;
pub mod unitary;
