//! Exact simulator of toric-code topological order: lattice and stabilizer
//! algebra, sector-resolved Hamiltonians, sparse spectral analysis, and
//! adiabatic sweep propagation, with a dense small-instance oracle.

pub mod cli;
pub mod dense;
pub mod evolve;
pub mod lattice;
pub mod model;
pub mod pauli;
pub mod sector;
pub mod spectral;
