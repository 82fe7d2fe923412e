//! Spatial doubly-symmetric periodic orbits of the circular restricted
//! three-body problem and Hill's lunar problem.

pub mod dynamics;
pub mod integrator;
pub mod seeds;
pub mod shooting;
pub mod solver;
pub mod stability;
pub mod catalog;
pub mod cli;
