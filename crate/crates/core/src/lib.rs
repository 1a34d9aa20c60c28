//! Reconstruction of reactor power maps from local-average sensor data with
//! the PBDW (parametrized-background data-weak) method.
//!
//! The crate carries everything the reconstruction study needs: a 2D reactor
//! geometry, two-group cross sections with their parametric perturbation,
//! a diffusion and a discrete-ordinates transport criticality solver to
//! generate power-map snapshots, POD reduced bases, the sensor model and the
//! PBDW operator with its stability constant and error bounds.

pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod materials;
pub mod pbdw;
pub mod rom;
pub mod sensing;
pub mod transport;

pub use error::{Error, Result};
